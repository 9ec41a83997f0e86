//! Empirical complexity exponents of chain construction and objective
//! evaluation in the battery capacity `K`.
//!
//!     cargo run --release -p ehwsn-bench --example scaling

use std::time::Instant;

use ehwsn_bench::{desk_problem, loglog_slope, three_level_policy};

fn time_per_call<F: FnMut()>(mut f: F) -> f64 {
    let mut reps = 1u32;
    loop {
        let start = Instant::now();
        for _ in 0..reps {
            f();
        }
        let t = start.elapsed().as_secs_f64();
        if t > 0.2 {
            return t / reps as f64;
        }
        reps *= 2;
    }
}

fn main() {
    let policy = three_level_policy();
    let mut chain_pts = Vec::new();
    let mut objective_pts = Vec::new();
    println!("{:>5} {:>14} {:>14}", "K", "chain [s]", "objective [s]");
    for k in [10usize, 20, 40, 80, 160, 320] {
        let problem = desk_problem(k, 1e-3);
        let setup = problem.setup(&policy).unwrap();
        let chain = time_per_call(|| {
            std::hint::black_box(problem.setup(&policy).unwrap());
        });
        let objective = time_per_call(|| {
            std::hint::black_box(setup.evaluate().unwrap());
        });
        println!("{k:>5} {chain:>14.3e} {objective:>14.3e}");
        chain_pts.push((k as f64, chain));
        objective_pts.push((k as f64, objective));
    }
    println!("chain build exponent:      {:.2}", loglog_slope(&chain_pts[2..]));
    println!("objective eval exponent:   {:.2}", loglog_slope(&objective_pts[2..]));
}
