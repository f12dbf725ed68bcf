//! Fits the canonical 1-D Gaussian with several Dirac budgets and orders.

use std::time::Instant;

use nfconv::kernels::{fit_kernel, FitConfig, TargetKernel};

fn main() {
    let iterations: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(FitConfig::new(0).iterations);
    let target = TargetKernel::gaussian(0.1, 1).expect("valid target");
    println!("order  K   kept  mse        mass      seconds");
    for n in [1, 2] {
        for k in [3, 7, 13, 24] {
            let cfg = FitConfig {
                iterations,
                ..FitConfig::new(k)
            };
            let start = Instant::now();
            let fit = fit_kernel(&target, n, &cfg).expect("fit succeeds");
            println!(
                "{n}      {k:<3} {:<5} {:<10.3e} {:<9.5} {:.2}",
                fit.mixture.len(),
                fit.mse,
                fit.mixture.mass(),
                start.elapsed().as_secs_f64()
            );
        }
    }
}
