//! Seeded reproductions of the numerical studies. Each runner returns an
//! [`ExperimentReport`] with its full parameter set, CSV tables and
//! tolerance checks. Runs are deterministic in their parameters.
//!
//! This layer is concrete `f64`.

mod convergence;
mod infhorizon;
mod lowrank_demo;
mod optimality;
mod report;
mod scenario;
mod table1;

pub use convergence::{run_convergence_study, ConvergenceConfig, FiniteSource};
pub use infhorizon::{run_infinite_horizon_comparison, InfHorizonConfig};
pub use lowrank_demo::{run_lowrank_demo, LowRankDemoConfig};
pub use optimality::{run_optimality_check, OptimalityConfig};
pub use report::{Check, ExperimentReport};
pub use scenario::{run_lqg, run_simulate, CouplingSpec, InitialState, NoiseSpec, OperatorSpec, Scenario};
pub use table1::{run_table1, table1_graphons, Table1Config, TABLE1_REFERENCE};

use std::num::NonZeroUsize;
use std::thread;

/// Maps `f` over `items` on scoped worker threads, preserving input order.
pub(crate) fn fan_out<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let workers = thread::available_parallelism()
        .map_or(1, NonZeroUsize::get)
        .min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Least-squares line `y ≈ intercept + slope·x` and its `R²`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (my - slope * mx, slope, r2)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Indices `0, every, 2·every, …` plus the last one.
pub(crate) fn recorded_steps(steps: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut out: Vec<usize> = (0..=steps).step_by(every).collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_out_keeps_order() {
        let items: Vec<u64> = (0..37).collect();
        assert_eq!(
            fan_out(&items, |x| x * x),
            items.iter().map(|x| x * x).collect::<Vec<_>>()
        );
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|t| 2.0 - 0.5 * t).collect();
        let (c, m, r2) = linear_fit(&x, &y);
        assert!((c - 2.0).abs() < 1e-12 && (m + 0.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn helpers() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(recorded_steps(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(recorded_steps(8, 4), vec![0, 4, 8]);
    }
}
