use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use resvsim::analytics::{DemandSeries, ForecasterKind};
use resvsim::runner::{
    calibrate, compare, forecast_eval, load_series, run_replications, sweep, sweep_csv, validate, write_experiment,
    CalibrationSpec, EvalOptions, ScenarioConfig, ValidateOptions, BUILTIN_SCENARIOS, DIURNAL_SPIKE_TRACE,
};

#[derive(Parser)]
#[command(name = "resvsim", version, about = "Reservation-system architecture simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Directory for report files.
    #[arg(long, global = true, env = "RESVSIM_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Base seed; replication i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Dotted-path override, e.g. `workload.users=5000`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorter horizons and fewer replications.
    #[arg(long, global = true)]
    quick: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run two scenarios on the same seeds and tabulate the differences.
    Compare {
        #[arg(long, num_args = 2, required = true, value_names = ["A", "B"])]
        config: Vec<PathBuf>,
    },
    /// Run a scenario once per value of a parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted parameter; defaults to the scenario's own sweep.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values, each parsed as JSON.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
    /// Analytic self-checks.
    Validate,
    /// Tune config parameters toward target KPIs.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// JSON file with `targets`, `tunables` and budget fields.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Score every forecaster on a demand trace.
    ForecastEval {
        /// Demand CSV or behavior JSONL; defaults to the shipped trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        band: f64,
        /// Seasonal period in intervals.
        #[arg(long, default_value_t = 24)]
        period: usize,
        /// Bin width for behavior logs.
        #[arg(long, default_value_t = 60.0)]
        interval_s: f64,
    },
}

/// Failure to find the config file itself, reported with exit code 2.
#[derive(Debug)]
struct MissingConfig(PathBuf);

impl std::fmt::Display for MissingConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = BUILTIN_SCENARIOS.iter().map(|(n, _)| *n).collect();
        write!(f, "config file not found: {} (built-in scenarios: {})", self.0.display(), names.join(", "))
    }
}

impl std::error::Error for MissingConfig {}

fn load_config(path: &Path, common: &Common) -> Result<ScenarioConfig> {
    let stem = path.to_str().unwrap_or_default().trim_end_matches(".json");
    let builtin = BUILTIN_SCENARIOS.iter().any(|(n, _)| *n == stem);
    if !path.exists() && !builtin {
        return Err(MissingConfig(path.to_path_buf()).into());
    }
    let mut cfg = ScenarioConfig::load(path)?.with_overrides(&common.overrides)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.replications {
        cfg.replications = r;
    }
    if common.quick {
        cfg.horizon_s = (cfg.horizon_s / 3.0).max(300.0);
        if common.replications.is_none() {
            cfg.replications = cfg.replications.min(3);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<MissingConfig>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let common = &cli.common;
    let out = &common.out_dir;
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(config, common)?;
            let res = run_replications(&cfg)?;
            let (json, csv) = write_experiment(out, &cfg.name, &cfg, &res)?;
            for kpi in ["mean_response_s", "p95_response_s", "throughput_rps", "error_rate_pct"] {
                if let Some(s) = res.summary.get(kpi) {
                    match s.ci95 {
                        Some((lo, hi)) => println!("{kpi:<22} {:>10.4}  [{lo:.4}, {hi:.4}]", s.mean),
                        None => println!("{kpi:<22} {:>10.4}", s.mean),
                    }
                }
            }
            println!("wrote {} and {}", json.display(), csv.display());
        }
        Command::Compare { config } => {
            let a = load_config(&config[0], common)?;
            let mut b = load_config(&config[1], common)?;
            b.seed = a.seed;
            b.replications = a.replications;
            let ra = run_replications(&a)?;
            let rb = run_replications(&b)?;
            let cmp = compare(&ra, &rb);
            print!("{}", cmp.table());
            let stem = format!("compare_{}_{}", a.name, b.name);
            write_experiment(out, &format!("{stem}_a"), &a, &ra)?;
            write_experiment(out, &format!("{stem}_b"), &b, &rb)?;
            let path = out.join(format!("{stem}.csv"));
            fs::write(&path, cmp.csv()).with_context(|| path.display().to_string())?;
            println!("wrote {}", path.display());
        }
        Command::Sweep { config, param, values } => {
            let cfg = load_config(config, common)?;
            let (param, values) = match (param, &cfg.sweep) {
                (Some(p), _) => {
                    let vs = values
                        .iter()
                        .map(|v| serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.clone())))
                        .collect();
                    (p.clone(), vs)
                }
                (None, Some(s)) if values.is_empty() => (s.param.clone(), s.values.clone()),
                (None, _) => bail!("--param is required unless the scenario defines a sweep"),
            };
            if values.is_empty() {
                bail!("sweep needs at least one value (--values a,b,c)");
            }
            let param = param.as_str();
            let points = sweep(&cfg, param, &values)?;
            for p in &points {
                let stem = format!("{}_{}_{}", cfg.name, param, p.value).replace('"', "");
                let point_cfg = cfg.with_overrides(&[format!("{param}={}", p.value)])?;
                write_experiment(out, &stem, &point_cfg, &p.result)?;
            }
            let csv = sweep_csv(param, &points);
            print!("{csv}");
            let path = out.join(format!("sweep_{}.csv", cfg.name));
            fs::write(&path, csv).with_context(|| path.display().to_string())?;
            println!("wrote {}", path.display());
        }
        Command::Validate => {
            let checks = validate(&ValidateOptions {
                quick: common.quick,
                seed: common.seed.unwrap_or(1),
                ..Default::default()
            })?;
            for c in &checks {
                println!("{}", c.line());
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Calibrate { config, spec } => {
            let cfg = load_config(config, common)?;
            let text = fs::read_to_string(spec).with_context(|| spec.display().to_string())?;
            let spec: CalibrationSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
            let res = calibrate(&cfg, &spec)?;
            print!("{}", res.table());
            if let Some(w) = &res.warning {
                println!("warning: {w}");
            }
            fs::create_dir_all(out)?;
            let path = out.join(format!("{}_calibrated.json", cfg.name));
            fs::write(&path, serde_json::to_string_pretty(&res.config)?)?;
            println!("wrote {}", path.display());
        }
        Command::ForecastEval { trace, band, period, interval_s } => {
            let series = match trace {
                Some(p) => load_series(p, *interval_s)?,
                None => shipped_trace()?,
            };
            let mut opts = EvalOptions { band: *band, interval_s: *interval_s, ..Default::default() };
            opts.params.period = Some(*period);
            let report = forecast_eval(&series, &opts)?;
            print!("{}", report.table());
            let best = [ForecasterKind::ArLs, ForecasterKind::TreeEnsemble]
                .into_iter()
                .filter_map(|k| report.score(k))
                .fold(f64::NAN, f64::max);
            info!("best learned model accuracy {best:.1}%");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn shipped_trace() -> Result<DemandSeries> {
    Ok(DemandSeries::parse_csv(DIURNAL_SPIKE_TRACE, Path::new("diurnal_spike.csv"))?)
}
