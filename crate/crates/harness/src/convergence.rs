//! Sup-error convergence study of `X_N` against the deterministic limit.

use hostpar_core::models::ModelRegistry;
use hostpar_core::ode::{integrate, OdeSolution};
use hostpar_core::rng::derive_seed;
use hostpar_core::ssa::{simulate_with, sup_l1_error_with, SimOptions};
use hostpar_core::stats::{ols, Running};
use hostpar_core::{DensityVector, ModelSpec, Norms, SimError};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::initial::round_initial;
use crate::output::{OutputSink, VERSION};

/// Seed of replica `r` at population size `N`.
pub fn convergence_seed(master: u64, n: u64, r: usize) -> u64 {
    derive_seed(master, n, r as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicaError {
    pub n: u64,
    pub replica: usize,
    pub seed: u64,
    /// `N⁻¹ sup_t ‖X(t) − N x_N(t)‖₁` against the rounded-start trajectory.
    pub sup_error: f64,
    /// Same against the trajectory from the unrounded `x₀`.
    pub sup_error_single_x: f64,
    /// Bound on the error missed between evaluation points.
    pub slack: f64,
    pub events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub replicas: usize,
    pub cap_exceeded: usize,
    pub mean: f64,
    pub se: f64,
    pub min: f64,
    pub max: f64,
    /// `N^{-1/2} log^{3/2} N`.
    pub comparator: f64,
    pub ratio: f64,
    pub mean_single_x: f64,
    pub se_single_x: f64,
    /// `‖x_N(0) − x₀‖₁₁`.
    pub initial_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub in_band: bool,
    pub strictly_decreasing: bool,
    pub seed: u64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbortedSize {
    pub n: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub replicas: Vec<ReplicaError>,
    pub fit: Option<SlopeFit>,
    pub aborted: Vec<AbortedSize>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.aborted.is_empty()
            && self
                .fit
                .as_ref()
                .is_some_and(|f| f.in_band && f.strictly_decreasing)
    }

    pub fn write(&self, sink: &OutputSink) -> Result<(), HarnessError> {
        sink.write_rows("convergence.csv", &self.rows)?;
        sink.write_rows("convergence_replicas.csv", &self.replicas)?;
        sink.write_rows("convergence_fit.csv", self.fit.as_slice())?;
        if !self.aborted.is_empty() {
            sink.write_rows("convergence_aborted.csv", &self.aborted)?;
        }
        Ok(())
    }
}

pub fn comparator(n: u64) -> f64 {
    let n = n as f64;
    n.ln().powf(1.5) / n.sqrt()
}

struct Size {
    n: u64,
    initial: hostpar_core::PopulationState,
    ode: OdeSolution,
    initial_gap: f64,
}

/// Least-squares slope of `log mean` on `log N` with a two-sided 95%
/// Student-t interval.
pub fn fit_slope(ns: &[u64], means: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let (slope, intercept) = ols(&x, &y)?;
    let k = x.len();
    if k < 3 {
        return Some((slope, intercept, f64::NAN, f64::NAN));
    }
    let mx = x.iter().sum::<f64>() / k as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let ssr: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = (ssr / (k - 2) as f64 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, (k - 2) as f64)
        .ok()?
        .inverse_cdf(0.975);
    Some((slope, intercept, slope - t * se, slope + t * se))
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    let model = cfg.build_model(&ModelRegistry::default())?;
    run_convergence_with(cfg, &model)
}

pub fn run_convergence_with(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<ConvergenceReport, HarnessError> {
    let x0 = cfg.initial.density()?;
    let horizon = cfg.sim.horizon;
    let single = integrate(model, &x0, horizon, &cfg.ode)?;
    let mut aborted = Vec::new();
    if single.end_time() < horizon {
        aborted.push(AbortedSize {
            n: 0,
            reason: format!("single-x trajectory blew up at t = {}", single.end_time()),
        });
    }

    let mut sizes = Vec::new();
    for &n in &cfg.sim.n {
        let initial = round_initial(&x0, n)?;
        let xn0 = initial.scale(n)?;
        let ode = integrate(model, &xn0, horizon, &cfg.ode)?;
        if ode.end_time() < horizon {
            aborted.push(AbortedSize {
                n,
                reason: format!("trajectory blew up at t = {}", ode.end_time()),
            });
            continue;
        }
        let initial_gap = l11_gap(&xn0, &x0);
        sizes.push(Size {
            n,
            initial,
            ode,
            initial_gap,
        });
    }
    if aborted.iter().any(|a| a.n == 0) {
        return Ok(ConvergenceReport {
            rows: Vec::new(),
            replicas: Vec::new(),
            fit: None,
            aborted,
        });
    }

    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..cfg.sim.replicas).map(move |r| (s, r)))
        .collect();
    let opts = SimOptions {
        event_cap: cfg.sim.event_cap,
    };
    let grid = cfg.sim.error_grid;
    // collect keeps (N, replica) order whatever the completion order
    let results: Vec<Result<Option<ReplicaError>, SimError>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let size = &sizes[s];
            let seed = convergence_seed(cfg.sim.seed, size.n, r);
            let path = match simulate_with(model, &size.initial, size.n, horizon, seed, &opts) {
                Ok(p) => p,
                Err(SimError::CapExceeded { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let e = sup_l1_error_with(&path, &size.ode, size.n, grid)?;
            let e1 = sup_l1_error_with(&path, &single, size.n, grid)?;
            Ok(Some(ReplicaError {
                n: size.n,
                replica: r,
                seed,
                sup_error: e.sup,
                sup_error_single_x: e1.sup,
                slack: e.slack.max(e1.slack),
                events: path.jumps().len(),
            }))
        })
        .collect();

    let mut replicas = Vec::with_capacity(jobs.len());
    let mut rows = Vec::with_capacity(sizes.len());
    let mut it = results.into_iter();
    for size in &sizes {
        let (mut acc, mut acc1) = (Running::default(), Running::default());
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut capped = 0;
        for _ in 0..cfg.sim.replicas {
            match it.next().expect("one result per job")? {
                Some(rep) => {
                    acc.push(rep.sup_error);
                    acc1.push(rep.sup_error_single_x);
                    lo = lo.min(rep.sup_error);
                    hi = hi.max(rep.sup_error);
                    replicas.push(rep);
                }
                None => capped += 1,
            }
        }
        let cmp = comparator(size.n);
        rows.push(ConvergenceRow {
            n: size.n,
            replicas: acc.count() as usize,
            cap_exceeded: capped,
            mean: acc.mean(),
            se: acc.std_error(),
            min: lo,
            max: hi,
            comparator: cmp,
            ratio: acc.mean() / cmp,
            mean_single_x: acc1.mean(),
            se_single_x: acc1.std_error(),
            initial_gap: size.initial_gap,
        });
    }

    let ns: Vec<u64> = rows.iter().map(|r| r.n).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let [band_low, band_high] = cfg.checks.slope_band;
    let fit = fit_slope(&ns, &means).map(|(slope, intercept, ci_low, ci_high)| SlopeFit {
        points: ns.len(),
        slope,
        intercept,
        ci_low,
        ci_high,
        band_low,
        band_high,
        in_band: (band_low..=band_high).contains(&slope),
        strictly_decreasing: means.windows(2).all(|w| w[1] < w[0]),
        seed: cfg.sim.seed,
        version: VERSION.to_string(),
    });
    Ok(ConvergenceReport {
        rows,
        replicas,
        fit,
        aborted,
    })
}

fn l11_gap(a: &DensityVector, b: &DensityVector) -> f64 {
    let len = a.values().len().max(b.values().len());
    let d: Vec<f64> = (0..len).map(|i| a.get(i) - b.get(i)).collect();
    DensityVector::from_values(d).l11_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law_is_exact() {
        let ns = [10, 100, 1000, 10000];
        let means: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-0.5)).collect();
        let (s, _, lo, hi) = fit_slope(&ns, &means).unwrap();
        assert!((s + 0.5).abs() < 1e-12);
        assert!(lo <= s && s <= hi);
        assert!(hi - lo < 1e-6);
    }

    #[test]
    fn two_points_have_no_interval() {
        let (s, _, lo, _) = fit_slope(&[10, 100], &[1.0, 0.1]).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        assert!(lo.is_nan());
    }
}
