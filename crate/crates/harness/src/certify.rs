//! Bound certificates run against a configured model and initial condition.

use hostpar_core::coupling::{
    coupled_ensemble, martingale_balance_check, CoupledSummary, CouplingOptions,
};
use hostpar_core::models::ModelRegistry;
use hostpar_core::ode::{integrate, mild_residual, OdeSolution, DENSE_EXPONENTIAL_CAP};
use hostpar_core::rates::{
    check_growth, check_lipschitz_sampled, check_semigroup_l11, check_semigroup_moment,
    check_tail_limsup, host_growth_bound, lemma_a1_battery, CheckRow, LipschitzSampler,
};
use hostpar_core::rng::derive_seed;
use hostpar_core::ssa::{simulate_with, SimOptions};
use hostpar_core::stats::Running;
use hostpar_core::tilde::{
    concentration_check, moment_bound_check, replica_seed, simulate_tilde, window_check,
};
use hostpar_core::{DensityVector, ModelSpec, PopulationState, SimError};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ALL_CERTIFICATES};
use crate::error::HarnessError;
use crate::initial::round_initial;
use crate::output::OutputSink;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    /// The certificate's inequality did not hold.
    Fail,
    /// A thinning dominator or coupling invariant was breached.
    Hard,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub certificate: String,
    pub status: Status,
    pub detail: String,
}

/// Rows destined for one certificate's CSV.
#[derive(Clone, Debug)]
pub enum Table {
    Checks(Vec<CheckRow>),
    Moment(Vec<hostpar_core::tilde::MomentRow>),
    Concentration(Vec<ConcentrationLine>),
    Window(Vec<hostpar_core::tilde::WindowReport>),
    Coupling(Vec<CoupledSummary>),
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationLine {
    pub n: u64,
    pub time: f64,
    pub mean_error: f64,
    pub se: f64,
    pub bound: f64,
    pub ratio: f64,
    pub tail_frequency: f64,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub table: Table,
}

#[derive(Clone, Debug)]
pub struct CertifyReport {
    pub certificates: Vec<Certificate>,
}

impl CertifyReport {
    pub fn worst(&self) -> Status {
        self.certificates
            .iter()
            .map(|c| c.status)
            .max()
            .unwrap_or(Status::Pass)
    }

    /// 0 when every certificate passed, 2 after a hard violation, else 1.
    pub fn exit_code(&self) -> i32 {
        match self.worst() {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Hard => 2,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.certificates
            .iter()
            .map(|c| SummaryRow {
                certificate: c.name.clone(),
                status: c.status,
                detail: c.detail.clone(),
            })
            .collect()
    }

    pub fn write(&self, sink: &OutputSink) -> Result<(), HarnessError> {
        for c in &self.certificates {
            let name = format!("cert_{}.csv", c.name);
            match &c.table {
                Table::Checks(r) => sink.write_rows(&name, r)?,
                Table::Moment(r) => sink.write_rows(&name, r)?,
                Table::Concentration(r) => sink.write_rows(&name, r)?,
                Table::Window(r) => sink.write_rows(&name, r)?,
                Table::Coupling(r) => sink.write_rows(&name, r)?,
                Table::None => continue,
            };
        }
        sink.write_rows("certify_summary.csv", &self.summary())?;
        Ok(())
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a ModelSpec,
    x0: DensityVector,
    n: u64,
    initial: PopulationState,
    ode: OdeSolution,
}

impl Context<'_> {
    fn seed(&self, name: &str) -> u64 {
        let k = ALL_CERTIFICATES.iter().position(|c| *c == name).unwrap_or(0);
        derive_seed(self.cfg.sim.seed, 100 + k as u64, 0)
    }

    fn horizon(&self) -> f64 {
        self.cfg.sim.horizon
    }
}

fn from_rows(name: &str, rows: Vec<CheckRow>) -> Certificate {
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.condition.as_str())
        .collect();
    let worst = rows.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    Certificate {
        name: name.into(),
        status: if failed.is_empty() { Status::Pass } else { Status::Fail },
        detail: if failed.is_empty() {
            format!("{} rows, largest value {worst}", rows.len())
        } else {
            format!("failed: {}", failed.join(" "))
        },
        table: Table::Checks(rows),
    }
}

fn from_error(name: &str, e: &SimError) -> Certificate {
    Certificate {
        name: name.into(),
        status: if e.is_hard() { Status::Hard } else { Status::Fail },
        detail: e.to_string(),
        table: Table::None,
    }
}

fn verdict(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

pub fn run_certificates(cfg: &ExperimentConfig) -> Result<CertifyReport, HarnessError> {
    let model = cfg.build_model(&ModelRegistry::default())?;
    run_certificates_with(cfg, &model)
}

pub fn run_certificates_with(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<CertifyReport, HarnessError> {
    let x0 = cfg.initial.density()?;
    let n = cfg.sim.n[0];
    let initial = round_initial(&x0, n)?;
    let ode = integrate(model, &initial.scale(n)?, cfg.sim.horizon, &cfg.ode)?;
    let cx = Context {
        cfg,
        model,
        x0,
        n,
        initial,
        ode,
    };
    let mut certificates = Vec::new();
    for name in ALL_CERTIFICATES {
        if !cfg.checks.suite.iter().any(|s| s == name) {
            continue;
        }
        if cx.ode.end_time() < cx.horizon() && needs_trajectory(name) {
            certificates.push(Certificate {
                name: name.into(),
                status: Status::Fail,
                detail: format!("trajectory blew up at t = {}", cx.ode.end_time()),
                table: Table::None,
            });
            continue;
        }
        certificates.push(run_one(&cx, name)?);
    }
    Ok(CertifyReport { certificates })
}

fn needs_trajectory(name: &str) -> bool {
    matches!(
        name,
        "mild_residual" | "moment_bound" | "concentration" | "window" | "coupling"
    )
}

fn run_one(cx: &Context, name: &str) -> Result<Certificate, HarnessError> {
    let checks = &cx.cfg.checks;
    let baseline = cx.model.baseline();
    let j = checks.semigroup_truncation;
    let t = cx.horizon();
    Ok(match name {
        "growth" => from_rows(name, vec![check_growth(baseline, j).row()]),
        "tail" => from_rows(name, vec![check_tail_limsup(baseline, j, 2 * j)]),
        "lipschitz" => {
            let sampler = LipschitzSampler {
                pairs: checks.lipschitz_pairs,
                seed: cx.seed(name),
                ..LipschitzSampler::default()
            };
            from_rows(name, check_lipschitz_sampled(cx.model, &sampler))
        }
        "semigroup_moment" => from_rows(
            name,
            vec![check_semigroup_moment(baseline, j.min(50), &checks.semigroup_times, j)],
        ),
        "semigroup_l11" => {
            let mut xs = vec![cx.x0.values().to_vec(), cx.ode.eval(cx.ode.end_time())];
            xs.extend([0, 3, 10].map(|l| DensityVector::unit_mass(l).into_values()));
            from_rows(name, vec![check_semigroup_l11(baseline, &xs, &checks.semigroup_times, j)])
        }
        "mild_residual" => mild(cx),
        "moment_bound" => {
            match moment_bound_check(
                cx.model,
                &cx.initial,
                cx.n,
                t,
                &cx.ode,
                checks.replicas,
                cx.seed(name),
            ) {
                Ok(r) => Certificate {
                    name: name.into(),
                    status: verdict(r.passed),
                    detail: format!("sup mean {} bound {} margin {}", r.sup_mean, r.bound, r.margin),
                    table: Table::Moment(r.rows),
                },
                Err(e) => from_error(name, &e),
            }
        }
        "concentration" => concentration(cx),
        "window" => window(cx),
        "sqrt_mass" => from_rows(name, vec![lemma_a1_battery(checks.battery, cx.seed(name))]),
        "host_growth" => host_growth(cx),
        "coupling" => coupling(cx),
        other => return Err(HarnessError::Config(format!("unknown certificate {other:?}"))),
    })
}

fn mild(cx: &Context) -> Certificate {
    let name = "mild_residual";
    let tol = cx.cfg.checks.mild_tolerance;
    if cx.ode.truncation() > DENSE_EXPONENTIAL_CAP {
        return Certificate {
            name: name.into(),
            status: Status::Fail,
            detail: format!("truncation {} too large for the dense check", cx.ode.truncation()),
            table: Table::None,
        };
    }
    let mut rows = Vec::new();
    for k in 1..=4 {
        let t = cx.horizon() * k as f64 / 4.0;
        let row = match mild_residual(&cx.ode, t, cx.cfg.checks.mild_panels) {
            Ok(r) => CheckRow::new(format!("mild_residual_t{t}"), r.residual, r.residual <= tol, 1),
            Err(e) => CheckRow::new(format!("mild_residual_t{t}"), f64::NAN, false, 0).with_note(e.to_string()),
        };
        rows.push(row);
    }
    from_rows(name, rows)
}

fn concentration(cx: &Context) -> Certificate {
    let name = "concentration";
    let mut lines = Vec::new();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for &n in &cx.cfg.sim.n {
        let prepared = round_initial(&cx.x0, n).and_then(|s| {
            let ode = integrate(cx.model, &s.scale(n)?, cx.horizon(), &cx.cfg.ode)?;
            Ok((s, ode))
        });
        let (initial, ode) = match prepared {
            Ok(p) => p,
            Err(e) => {
                return Certificate {
                    name: name.into(),
                    status: Status::Fail,
                    detail: format!("N = {n}: {e}"),
                    table: Table::None,
                }
            }
        };
        let report = match concentration_check(
            cx.model,
            &initial,
            n,
            cx.horizon(),
            &ode,
            cx.cfg.checks.replicas,
            derive_seed(cx.seed(name), n, 0),
            cx.cfg.checks.concentration_k,
        ) {
            Ok(r) => r,
            Err(e) => return from_error(name, &e),
        };
        ok &= report.passed;
        worst = worst.max(report.max_ratio);
        lines.extend(report.rows.into_iter().map(|r| ConcentrationLine {
            n,
            time: r.time,
            mean_error: r.mean_error,
            se: r.se,
            bound: r.bound,
            ratio: r.ratio,
            tail_frequency: r.tail_frequency,
        }));
    }
    Certificate {
        name: name.into(),
        status: verdict(ok),
        detail: format!("largest mean/bound ratio {worst}"),
        table: Table::Concentration(lines),
    }
}

fn window(cx: &Context) -> Certificate {
    let name = "window";
    let replicas = cx.cfg.checks.replicas.min(200);
    let seed = cx.seed(name);
    let paths: Result<Vec<_>, SimError> = (0..replicas)
        .into_par_iter()
        .map(|r| simulate_tilde(cx.model, &cx.initial, cx.n, cx.horizon(), &cx.ode, replica_seed(seed, r as u64)))
        .collect();
    let checks = &cx.cfg.checks;
    match paths.and_then(|p| {
        window_check(
            cx.model,
            &p,
            &cx.ode,
            cx.n,
            checks.window_k,
            checks.window_a,
            checks.window_max_frequency,
        )
    }) {
        Ok(r) => Certificate {
            name: name.into(),
            status: verdict(r.passed),
            detail: format!(
                "{} of {} windows conditioned, exceed frequency {}",
                r.conditioned, r.windows, r.exceed_frequency
            ),
            table: Table::Window(vec![r]),
        },
        Err(e) => from_error(name, &e),
    }
}

fn host_growth(cx: &Context) -> Certificate {
    let name = "host_growth";
    let seed = cx.seed(name);
    let opts = SimOptions {
        event_cap: cx.cfg.sim.event_cap,
    };
    let totals: Result<Vec<f64>, SimError> = (0..cx.cfg.checks.replicas)
        .into_par_iter()
        .map(|r| {
            simulate_with(cx.model, &cx.initial, cx.n, cx.horizon(), replica_seed(seed, r as u64), &opts)
                .map(|p| p.final_state().total_hosts() as f64)
        })
        .collect();
    let totals = match totals {
        Ok(t) => t,
        Err(e) => return from_error(name, &e),
    };
    let s: Running = totals.into_iter().collect();
    let bound = host_growth_bound(&cx.model.envelopes(), cx.n, cx.horizon());
    let ok = s.mean() - 3.0 * s.std_error() <= bound;
    let row = CheckRow::new("host_growth_mean", s.mean() / bound, ok, s.count() as usize)
        .with_note(format!("mean {} se {} bound {bound}", s.mean(), s.std_error()));
    from_rows(name, vec![row])
}

fn coupling(cx: &Context) -> Certificate {
    let name = "coupling";
    let t = cx.horizon();
    let check_t = t.min(1.0);
    let opts = CouplingOptions {
        event_cap: cx.cfg.sim.event_cap,
        check_times: vec![check_t],
        ..CouplingOptions::default()
    };
    let runs = match coupled_ensemble(
        cx.model,
        &cx.initial,
        cx.n,
        t,
        &cx.ode,
        cx.cfg.checks.coupled_replicas,
        cx.seed(name),
        &opts,
    ) {
        Ok(r) => r,
        Err(e) => return from_error(name, &e),
    };
    let (checked, violations) = runs.iter().fold((0, 0), |(c, v), r| {
        (c + r.bound_check.checked, v + r.bound_check.violations)
    });
    let balance = martingale_balance_check(&runs, check_t, 3.0);
    let balanced = balance.as_ref().is_some_and(|b| b.within);
    let detail = format!(
        "intensity bound: {violations} violations in {checked} events; balance at t = {check_t}: {}",
        balance
            .as_ref()
            .map(|b| format!("mean {} se {}", b.difference.mean, b.difference.se))
            .unwrap_or_else(|| "unavailable".into())
    );
    Certificate {
        name: name.into(),
        status: verdict(violations == 0 && balanced),
        detail,
        table: Table::Coupling(
            runs.iter()
                .enumerate()
                .map(|(i, r)| CoupledSummary::from_run(i, r))
                .collect(),
        ),
    }
}
