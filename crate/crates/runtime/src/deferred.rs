use std::collections::VecDeque;

/// Bounded buffer for messages from a world-line the object has not reached.
#[derive(Debug)]
pub struct DeferredQueue<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> DeferredQueue<T> {
    pub fn new(capacity: usize) -> Self {
        Self { items: VecDeque::new(), capacity }
    }

    /// Buffers `item`, or hands it back when the buffer is full.
    pub fn push(&mut self, item: T) -> Result<(), T> {
        if self.items.len() >= self.capacity {
            return Err(item);
        }
        self.items.push_back(item);
        Ok(())
    }

    /// Removes everything buffered, oldest first.
    pub fn drain(&mut self) -> Vec<T> {
        self.items.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_beyond_capacity() {
        let mut q = DeferredQueue::new(2);
        assert!(q.push(1).is_ok());
        assert!(q.push(2).is_ok());
        assert_eq!(q.push(3), Err(3));
        assert_eq!(q.drain(), vec![1, 2]);
        assert!(q.is_empty());
    }
}
