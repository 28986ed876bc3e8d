//! solvcheck: assess AC power-flow solvability and voltage-stability margin
//! of a distribution feeder case from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Parser, Subcommand, ValueEnum};

use solvcheck::cindex::IndexReport;
use solvcheck::error::Error;
use solvcheck::netmodel::{load_case, reduce};
use solvcheck::pfsolve::solve;
use solvcheck::report;
use solvcheck::sweep::{
    apply_penetration, impedance_sensitivity, power_factor_sensitivity, run_sweep, DgMode,
};
use solvcheck::verify::{run_suite, SuiteConfig};
use solvcheck::{Case, Injections, Result, Snapshot, SolveOptions, SweepConfig, SweepReport};

#[derive(Parser)]
#[command(
    name = "solvcheck",
    version,
    about = "Power-flow solvability and voltage-stability margin for distribution feeders"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DgModeArg {
    /// DG buses hold their constant power set-points.
    Power,
    /// DG buses are frozen at their base-case currents.
    Current,
}

impl From<DgModeArg> for DgMode {
    fn from(v: DgModeArg) -> Self {
        match v {
            DgModeArg::Power => DgMode::HoldConstantPower,
            DgModeArg::Current => DgMode::HoldConstantCurrent,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the base operating point and print the per-bus record.
    Solve {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Residual tolerance override, pu.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Per-bus index report at the base operating point.
    Index {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Stepped proportional load sweep up to divergence.
    Sweep {
        #[arg(long)]
        case: PathBuf,
        /// Write the per-step CSV here (suffix `_p<pct>` per scenario).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Load increment per step as a fraction of the base load.
        #[arg(long)]
        step: Option<f64>,
        /// DG penetration percentages, comma separated (e.g. 10,40,70).
        #[arg(long)]
        penetration: Option<String>,
        #[arg(long, value_enum, default_value = "power")]
        dg_mode: DgModeArg,
        #[arg(long)]
        tol: Option<f64>,
        /// Concurrent penetration scenarios.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Parameter sensitivity of the index report at the base point.
    Sensitivity {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Homogeneous admittance scale a in (0, 1]; impedances grow by 1/a.
        #[arg(long)]
        impedance_scale: Option<f64>,
        /// Target load power factor in (0, 1].
        #[arg(long)]
        power_factor: Option<f64>,
    },
    /// Export the F diagnostic matrix at the base point as dense CSV.
    Fmatrix {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized verification of the determinant identities and the
    /// dominance condition on synthetic networks.
    Verify {
        /// Only synthetic cases are supported.
        #[arg(long, value_parser = ["random"])]
        case: String,
        /// Largest non-slack bus count per trial.
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SOLVCHECK_LOG", "error"))
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 0 for --help/--version and 2 for usage errors
        Err(e) => e.exit(),
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn solve_options(tol: Option<f64>) -> Result<SolveOptions> {
    let mut opts = SolveOptions::default();
    if let Some(t) = tol {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::Invalid("tolerance must be positive".into()));
        }
        opts.tol = t;
    }
    Ok(opts)
}

fn solved_base(case: &Case, tol: Option<f64>) -> Result<(solvcheck::Reduced, Snapshot)> {
    let net = reduce(case)?;
    let snap = solve(&net, &Injections::base(&net), &solve_options(tol)?)
        .into_snapshot()
        .ok_or_else(|| Error::InsolvableBase("power flow diverged at the base point".into()))?;
    Ok((net, snap))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => report::write_report(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Solve { case, out, tol } => {
            let case = load_case::<f64>(&case)?;
            let (net, snap) = solved_base(&case, tol)?;
            emit(&out, &report::snapshot_text(&net, &snap))
        }
        Cmd::Index { case, out, tol } => {
            let case = load_case::<f64>(&case)?;
            let (net, snap) = solved_base(&case, tol)?;
            let idx = IndexReport::build(&net, &snap)?;
            let text = format!(
                "{}{}",
                report::index_summary_text(&idx),
                report::index_csv(&idx)
            );
            emit(&out, &text)
        }
        Cmd::Sweep {
            case,
            out,
            step,
            penetration,
            dg_mode,
            tol,
            jobs,
        } => {
            let case = load_case::<f64>(&case)?;
            let mut config = SweepConfig {
                dg_mode: dg_mode.into(),
                ..SweepConfig::default()
            };
            if let Some(s) = step {
                config.step = s;
            }
            config.solve = solve_options(tol)?;
            let pens = parse_penetrations(penetration.as_deref())?;
            let results = run_scenarios(&case, &pens, &config, jobs)?;
            for (pen, rep) in pens.iter().zip(&results) {
                if let Some(p) = pen {
                    println!("penetration={}", report::fmt_sig(*p));
                }
                print!("{}", report::sweep_summary_text(rep));
                if let Some(base) = &out {
                    let path = scenario_path(base, *pen);
                    report::write_report(&path, &report::sweep_csv(rep))?;
                }
            }
            Ok(())
        }
        Cmd::Sensitivity {
            case,
            out,
            impedance_scale,
            power_factor,
        } => {
            if impedance_scale.is_none() && power_factor.is_none() {
                return Err(Error::Invalid(
                    "pass --impedance-scale and/or --power-factor".into(),
                ));
            }
            let case = load_case::<f64>(&case)?;
            let mut text = String::new();
            if let Some(a) = impedance_scale {
                let rep = impedance_sensitivity(&case, a)?;
                text.push_str(&format!(
                    "experiment=impedance_scale\nscale={}\nall_predicted_lower={}\n{}",
                    report::fmt_sig(a),
                    rep.all_predicted_lower,
                    report::sensitivity_csv(&rep)
                ));
            }
            if let Some(pf) = power_factor {
                let rep = power_factor_sensitivity(&case, pf)?;
                text.push_str(&format!(
                    "experiment=power_factor\ntarget={}\nall_predicted_lower={}\n{}",
                    report::fmt_sig(pf),
                    rep.all_predicted_lower,
                    report::sensitivity_csv(&rep)
                ));
            }
            emit(&out, &text)
        }
        Cmd::Fmatrix { case, out } => {
            let case = load_case::<f64>(&case)?;
            let (net, snap) = solved_base(&case, None)?;
            let f = solvcheck::wjac::f_matrix(&net, &snap)?;
            emit(&out, &report::f_matrix_csv(net.pq_bus_ids(), &f))
        }
        Cmd::Verify {
            case: _,
            n,
            trials,
            seed,
        } => {
            let cfg = SuiteConfig {
                trials,
                max_buses: n.max(2),
                seed,
                ..SuiteConfig::default()
            };
            let suite = run_suite::<f64>(&cfg)?;
            for check in &suite.checks {
                println!(
                    "{} {} ({})",
                    check.name,
                    if check.passed { "OK" } else { "FAIL" },
                    check.detail
                );
            }
            if suite.all_passed() {
                Ok(())
            } else {
                Err(Error::Invalid("verification suite failed".into()))
            }
        }
    }
}

fn parse_penetrations(arg: Option<&str>) -> Result<Vec<Option<f64>>> {
    match arg {
        None => Ok(vec![None]),
        Some(list) => list
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Invalid(format!("bad penetration value '{tok}'")))
            })
            .collect(),
    }
}

fn scenario_path(base: &Path, pen: Option<f64>) -> PathBuf {
    match pen {
        None => base.to_path_buf(),
        Some(p) => {
            let stem = base.file_stem().unwrap_or_default().to_string_lossy();
            let ext = base.extension().map(|e| e.to_string_lossy().to_string());
            let name = match ext {
                Some(ext) => format!("{stem}_p{p}.{ext}"),
                None => format!("{stem}_p{p}"),
            };
            base.with_file_name(name)
        }
    }
}

/// Run the sweep scenarios, at most `jobs` at a time, preserving input order.
fn run_scenarios(
    case: &Case,
    pens: &[Option<f64>],
    config: &SweepConfig,
    jobs: usize,
) -> Result<Vec<SweepReport>> {
    let run_one = |pen: Option<f64>| -> Result<SweepReport> {
        let scaled = match pen {
            Some(p) => apply_penetration(case, p)?,
            None => case.clone(),
        };
        run_sweep(&scaled, config)
    };

    let jobs = jobs.clamp(1, pens.len().max(1));
    if jobs == 1 {
        return pens.iter().map(|p| run_one(*p)).collect();
    }

    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<SweepReport>>> = (0..pens.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= pens.len() {
                            break;
                        }
                        local.push((i, run_one(pens[i])));
                    }
                    local
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every scenario index visited"))
        .collect()
}
