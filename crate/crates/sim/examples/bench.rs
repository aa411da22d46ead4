use dse_core::ObjectId;
use dse_sim::real::*;
use std::time::Duration;

fn main() {
    let s = CoordinatorServer::start().unwrap();
    let mut obj = 0;
    for _ in 0..6 {
        let mut line = String::new();
        for n in [1usize, 8, 16] {
            obj += 1;
            let r = microbench(s.addr(), ObjectId(obj), n, Duration::from_millis(300)).unwrap();
            line += &format!("{n}: {:.2}M  ", r.ops_per_sec / 1e6);
        }
        println!("{line}");
    }
}
