use std::time::Instant;

use blindpair::pillow::{generate, quantiles, PillowConfig};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (m, reps) = (args.first().copied().unwrap_or(1000), args.get(1).copied().unwrap_or(10));
    let cfg = PillowConfig::new(m, reps, 0).unwrap();
    let start = Instant::now();
    let sample = generate(&cfg).unwrap();
    let elapsed = start.elapsed();
    println!("m = {m}, reps = {reps}: {:.3?} ({:.3?} per replicate)", elapsed, elapsed / reps as u32);
    if reps >= 100 {
        print!("{}", quantiles(&sample, &[0.1, 0.05, 0.01]).unwrap().to_text(&cfg));
    }
}
