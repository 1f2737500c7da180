//! Running many independent simulations: seed replications and parameter
//! sweeps. Runs are independent, so they parallelise trivially; with the
//! `parallel` feature disabled everything runs on the calling thread.

use crate::metrics::MetricsReport;
use crate::network::{simulate, RunOutput};
use crate::scenario::Scenario;

/// Copies of `base` with seeds `base.seed, base.seed + 1, ...`.
pub fn replicate(base: &Scenario, seeds: u32) -> Vec<Scenario> {
    (0..u64::from(seeds))
        .map(|i| Scenario {
            seed: base.seed.wrapping_add(i),
            ..base.clone()
        })
        .collect()
}

/// Runs every scenario on the calling thread, in order.
pub fn run_sequential(scenarios: &[Scenario]) -> Vec<MetricsReport> {
    scenarios.iter().map(|s| simulate(s).report).collect()
}

/// Runs scenarios across the rayon pool; results keep input order.
#[cfg(feature = "parallel")]
pub fn run_parallel(scenarios: &[Scenario]) -> Vec<MetricsReport> {
    use rayon::prelude::*;
    scenarios.par_iter().map(|s| simulate(s).report).collect()
}

/// Parallel when the `parallel` feature is enabled, sequential otherwise.
pub fn run_all(scenarios: &[Scenario]) -> Vec<MetricsReport> {
    #[cfg(feature = "parallel")]
    {
        run_parallel(scenarios)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sequential(scenarios)
    }
}

/// Like [`run_all`] but keeps traces and diagnostics.
pub fn simulate_all(scenarios: &[Scenario]) -> Vec<RunOutput> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        scenarios.par_iter().map(simulate).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        scenarios.iter().map(simulate).collect()
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}
