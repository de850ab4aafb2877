use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hostpar::certify::run_certificates;
use hostpar::convergence::run_convergence;
use hostpar::initial::round_initial;
use hostpar::output::{unix_now, OutputSink};
use hostpar::{ExperimentConfig, HarnessError, Overrides};
use hostpar_core::coupling::{coupled_ensemble, write_coupling_summary, CoupledSummary, CouplingOptions};
use hostpar_core::models::ModelRegistry;
use hostpar_core::ode::integrate;
use hostpar_core::ssa::{simulate_with, SimOptions};
use hostpar_core::tilde::simulate_tilde;
use hostpar_core::SimError;

#[derive(Parser)]
#[command(name = "hostpar", version, about = "Host-parasite simulation and limit checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One exact path of the interacting process.
    Simulate(Common),
    /// The deterministic limit from the unrounded initial density.
    Ode(Common),
    /// One path of the independent-sum process.
    Tilde(Common),
    /// Coupled replicas with per-run decoupling summaries.
    Couple(Common),
    /// Sup-error convergence study over the configured sizes.
    Converge(Common),
    /// The configured certificate suite.
    Certify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        cfg.apply(&Overrides {
            n: self.n,
            seed: self.seed,
            replicas: self.replicas,
            out: self.out.clone(),
        })?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let hard = e
                .downcast_ref::<HarnessError>()
                .is_some_and(|h| matches!(h, HarnessError::Sim(s) if s.is_hard()))
                || e.downcast_ref::<SimError>().is_some_and(|s| s.is_hard());
            ExitCode::from(if hard { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    hostpar::init_workers()?;
    let started = unix_now();
    let (name, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::Ode(c) => ("ode", c),
        Command::Tilde(c) => ("tilde", c),
        Command::Couple(c) => ("couple", c),
        Command::Converge(c) => ("converge", c),
        Command::Certify(c) => ("certify", c),
    };
    let cfg = common.load()?;
    let sink = OutputSink::new(&cfg)?;
    let model = cfg.build_model(&ModelRegistry::default())?;
    let x0 = cfg.initial.density()?;
    let n = cfg.sim.n[0];
    let t = cfg.sim.horizon;
    let mut code = 0;

    match &cli.command {
        Command::Simulate(_) => {
            let initial = round_initial(&x0, n)?;
            let opts = SimOptions {
                event_cap: cfg.sim.event_cap,
            };
            let path = simulate_with(&model, &initial, n, t, cfg.sim.seed, &opts).map_err(HarnessError::from)?;
            let mut w = sink.create("simulate.csv")?;
            path.write_csv(&mut w, sink.header())?;
            w.flush()?;
        }
        Command::Ode(_) => {
            let sol = integrate(&model, &x0, t, &cfg.ode).map_err(HarnessError::from)?;
            let mut w = sink.create("ode.csv")?;
            sol.write_csv(&mut w, sink.header())?;
            w.flush()?;
            if let Some(b) = sol.blow_up() {
                eprintln!("trajectory blew up at t = {b}");
                code = 1;
            }
        }
        Command::Tilde(_) => {
            let initial = round_initial(&x0, n)?;
            let ode = integrate(&model, &initial.scale(n)?, t, &cfg.ode).map_err(HarnessError::from)?;
            let path = simulate_tilde(&model, &initial, n, t, &ode, cfg.sim.seed).map_err(HarnessError::from)?;
            let mut w = sink.create("tilde.csv")?;
            path.write_csv(&mut w, sink.header())?;
            w.flush()?;
        }
        Command::Couple(_) => {
            let initial = round_initial(&x0, n)?;
            let ode = integrate(&model, &initial.scale(n)?, t, &cfg.ode).map_err(HarnessError::from)?;
            let opts = CouplingOptions {
                event_cap: cfg.sim.event_cap,
                track_compensator: false,
                ..CouplingOptions::default()
            };
            let runs = coupled_ensemble(&model, &initial, n, t, &ode, cfg.sim.replicas, cfg.sim.seed, &opts)
                .map_err(HarnessError::from)?;
            let rows: Vec<CoupledSummary> = runs
                .iter()
                .enumerate()
                .map(|(i, r)| CoupledSummary::from_run(i, r))
                .collect();
            let mut w = sink.create("couple.csv")?;
            write_coupling_summary(&mut w, sink.header(), &rows)?;
            w.flush()?;
        }
        Command::Converge(_) => {
            let report = run_convergence(&cfg)?;
            report.write(&sink)?;
            for r in &report.rows {
                println!("N={} mean={:.6} se={:.6} ratio={:.4}", r.n, r.mean, r.se, r.ratio);
            }
            for a in &report.aborted {
                eprintln!("aborted N={}: {}", a.n, a.reason);
            }
            match &report.fit {
                Some(f) => println!(
                    "slope {:.4} [{:.4}, {:.4}] in band: {} strictly decreasing: {}",
                    f.slope, f.ci_low, f.ci_high, f.in_band, f.strictly_decreasing
                ),
                None => println!("slope unavailable"),
            }
            if !report.passed() {
                code = 1;
            }
        }
        Command::Certify(_) => {
            let report = run_certificates(&cfg)?;
            report.write(&sink)?;
            for c in &report.certificates {
                println!("{:<18} {:?}  {}", c.name, c.status, c.detail);
            }
            code = report.exit_code() as u8;
        }
    }
    sink.write_metadata(name, &cfg, started)
        .with_context(|| format!("writing metadata to {}", sink.dir().display()))?;
    Ok(code)
}
