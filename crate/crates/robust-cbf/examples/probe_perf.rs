// scratch probe: solve-time breakdown
use robust_cbf::oracle::random_tilde;
use robust_cbf::rng::XorShift64Star;
use robust_cbf::sdp::{solve_safe_control, SolverOptions};
use std::time::Instant;

fn main() {
    let opts = SolverOptions::default();
    let mut rng = XorShift64Star::new(99);
    let mut times = Vec::new();
    let mut iters = Vec::new();
    for _ in 0..31 {
        let t = random_tilde(&mut rng, 3, 2);
        let start = Instant::now();
        let sol = solve_safe_control(&t, &opts).unwrap();
        times.push(start.elapsed().as_secs_f64() * 1e3);
        iters.push(sol.iterations);
    }
    times.sort_by(f64::total_cmp);
    iters.sort();
    println!("median time {:.3} ms  max {:.3} ms", times[15], times[30]);
    println!("median iters {}  max {}", iters[15], iters[30]);
}
