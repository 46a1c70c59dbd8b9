use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use recurkit::experiments::{compare_ensemble, run_ensemble, simulate, write_comparisons_csv, write_marks_csv, SimMode};
use recurkit::limits::{phi0, phi1, psi0, psi1};
use recurkit::moments::MomentReport;
use recurkit::quad::Tolerance;
use recurkit::scenario::{infer_tx_from_tau, load_rate_table, projected_burden, row_params, ustar_curves};
use recurkit::simulator::{HybridControl, Recording, StopPolicy};
use recurkit::{Error, ModelConfig, ModelParams, Result, ScaledQuery, YaglomMode};

#[derive(Debug, Parser)]
#[command(name = "recurkit", version, about = "Simulate and analyze escape from extinction in a two-type branching process")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "RECURKIT_OUT", default_value = "recurkit-out")]
    out: PathBuf,

    /// Worker threads for ensembles (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Simulate one path and write its states and marks.
    Simulate(SimulateArgs),
    /// Simulate an ensemble and write per-replicate marks and statistics.
    Ensemble(EnsembleArgs),
    /// Tabulate the scaled mean curves and their random limits on a grid of u.
    Limits(LimitsArgs),
    /// Evaluate the first and second moments over a time grid.
    Moments(MomentsArgs),
    /// Simulate an ensemble and check it against the limit laws.
    Compare(EnsembleArgs),
    /// Turnaround distributions for a concentration-indexed rate table.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    /// Model parameter file (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Yaglom constant convention; overrides the config file.
    #[arg(long, value_enum)]
    yaglom: Option<YaglomArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum YaglomArg {
    Paper,
    Fitted,
}

impl From<YaglomArg> for YaglomMode {
    fn from(a: YaglomArg) -> Self {
        match a {
            YaglomArg::Paper => YaglomMode::Paper,
            YaglomArg::Fitted => YaglomMode::Fitted,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Exact,
    Hybrid,
}

#[derive(Debug, Args, Serialize)]
struct EngineArgs {
    /// Master seed; every random draw derives from it.
    #[arg(long)]
    seed: u64,

    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,

    /// Hybrid leap length as a fraction of the fastest per-cell event time.
    #[arg(long)]
    step_fraction: Option<f64>,

    /// Hybrid cutoff below which populations are simulated exactly.
    #[arg(long)]
    clone_cutoff: Option<u64>,

    /// Simulated time limit.
    #[arg(long, default_value_t = 1e6)]
    horizon: f64,

    /// Stop at sensitive extinction instead of at rebound.
    #[arg(long)]
    to_extinction: bool,
}

impl EngineArgs {
    fn sim_mode(&self) -> Result<SimMode> {
        match self.mode {
            ModeArg::Exact => {
                if self.step_fraction.is_some() || self.clone_cutoff.is_some() {
                    return Err(Error::Config("hybrid controls given with --mode exact".into()));
                }
                Ok(SimMode::Exact)
            }
            ModeArg::Hybrid => {
                let mut control = HybridControl::default();
                if let Some(f) = self.step_fraction {
                    control.step_fraction = f;
                }
                if let Some(c) = self.clone_cutoff {
                    control.exact_clone_cutoff = c;
                }
                control.validate()?;
                Ok(SimMode::Hybrid(control))
            }
        }
    }

    fn policy(&self) -> Result<StopPolicy> {
        let mut policy = if self.to_extinction {
            StopPolicy::to_sensitive_extinction()
        } else {
            StopPolicy::default()
        };
        policy.horizon = self.horizon;
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    engine: EngineArgs,
    /// Keep every n-th state in the path dump.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Debug, Args, Serialize)]
struct EnsembleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    engine: EngineArgs,
    /// Number of replicates.
    #[arg(short = 'n', long = "replicates", default_value_t = 1000)]
    n: usize,
}

#[derive(Debug, Args, Serialize)]
struct LimitsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Number of u values in [0, 1].
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Time offset t of the clock s_x(t).
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    /// Gumbel variable of the random limit.
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
}

#[derive(Debug, Args, Serialize)]
struct MomentsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Number of evaluation times in [0, t_max].
    #[arg(long, default_value_t = 51)]
    grid: usize,
    /// Last evaluation time (default: ln(x) / r).
    #[arg(long)]
    t_max: Option<f64>,
    /// Relative quadrature tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Debug, Args, Serialize)]
struct ScenarioArgs {
    /// Rate table CSV with header concentration,r0,d0,r1,d1 (rates per hour).
    #[arg(long)]
    table: PathBuf,
    /// Initial number of sensitive cells.
    #[arg(long, default_value_t = 1_000_000_000)]
    x: u64,
    /// Per-cell mutation intensity.
    #[arg(long, default_value_t = 1e-8)]
    mu_x: f64,
    /// Points per u* curve.
    #[arg(long, default_value_t = 400)]
    grid: usize,
    /// Observed turnaround time in hours, to infer the eradication time.
    #[arg(long)]
    tau: Option<f64>,
}

fn load_model(args: &ModelArgs) -> Result<(ModelConfig, ModelParams)> {
    let config = ModelConfig::load(&args.config).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", args.config.display())),
        other => other,
    })?;
    let params = config.resolve(args.yaglom.map(Into::into))?;
    Ok((config, params))
}

fn grid(n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::Config("--grid must be at least 1".into())),
        1 => Ok(vec![lo]),
        _ => Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()),
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut f = self.create(name)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        use std::io::Write;
        writeln!(f)?;
        Ok(())
    }
}

/// Run a subcommand, returning the model echo and extra manifest fields.
fn execute(command: &Command, out: &mut Output) -> Result<Value> {
    match command {
        Command::Simulate(a) => {
            let (config, params) = load_model(&a.model)?;
            if a.stride == 0 {
                return Err(Error::Config("--stride must be at least 1".into()));
            }
            let recording = if a.stride == 1 { Recording::Full } else { Recording::Stride(a.stride) };
            let path = simulate(&params, a.engine.seed, &a.engine.policy()?, &a.engine.sim_mode()?, recording)?;
            path.write_csv(out.create("path.csv")?)?;
            out.json(
                "marks.json",
                &json!({ "marks": path.marks, "final_state": {
                    "time": path.final_state.time, "z0": path.final_state.z0, "z1": path.final_state.z1 } }),
            )?;
            Ok(json!({ "model": config, "resolved": ModelConfig::from_params(&params) }))
        }
        Command::Ensemble(a) | Command::Compare(a) => {
            let (config, params) = load_model(&a.model)?;
            let summary = run_ensemble(&params, a.n, a.engine.seed, &a.engine.policy()?, &a.engine.sim_mode()?, false)?;
            if matches!(command, Command::Ensemble(_)) {
                write_marks_csv(&summary.marks, out.create("marks.csv")?)?;
                out.json("summary.json", &summary)?;
            } else {
                let rows = compare_ensemble(&summary, &params);
                write_comparisons_csv(&rows, out.create("comparisons.csv")?)?;
            }
            Ok(json!({ "model": config, "resolved": summary.params }))
        }
        Command::Limits(a) => {
            let (config, params) = load_model(&a.model)?;
            let mut w = csv::Writer::from_writer(out.create("limits.csv")?);
            w.write_record(["u", "phi0", "phi1", "psi0", "psi1"])?;
            for u in grid(a.grid, 0.0, 1.0)? {
                let q = ScaledQuery::new(&params, u, a.offset)?;
                let row = [u, phi0(&q, &params), phi1(&q, &params), psi0(u, a.eta, &params), psi1(u, a.eta, &params)];
                w.write_record(row.iter().map(|v| v.to_string()))?;
            }
            w.flush()?;
            Ok(json!({ "model": config, "resolved": ModelConfig::from_params(&params) }))
        }
        Command::Moments(a) => {
            let (config, params) = load_model(&a.model)?;
            let t_max = a.t_max.unwrap_or_else(|| params.s_x(0.0));
            if !(t_max >= 0.0) {
                return Err(Error::Config(format!("--t-max must be non-negative, got {t_max}")));
            }
            let reports = grid(a.grid, 0.0, t_max)?
                .into_iter()
                .map(|t| MomentReport::at(&params, t, Tolerance::relative(a.tol)))
                .collect::<Result<Vec<_>>>()?;
            out.json("moments.json", &reports)?;
            Ok(json!({ "model": config, "resolved": ModelConfig::from_params(&params) }))
        }
        Command::Scenario(a) => {
            let table = load_rate_table(&a.table).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("{}: {io}", a.table.display())),
                other => other,
            })?;
            let curves = ustar_curves(&table, a.x, a.mu_x, a.grid)?;
            let mut entries = Vec::new();
            for (row, curve) in table.rows.iter().zip(&curves) {
                let name = format!("ustar_{}.csv", row.concentration);
                curve.write_csv(out.create(&name)?)?;
                let params = row_params(row, a.x, a.mu_x)?;
                let inference = a.tau.map(|tau| infer_tx_from_tau(tau, &params)).transpose()?;
                entries.push(json!({
                    "concentration": row.concentration,
                    "file": name,
                    "params": curve.params,
                    "ustar_leading": curve.ustar_leading,
                    "ustar_mode": curve.mode(),
                    "burden": projected_burden(&params),
                    "tx_inference": inference,
                }));
            }
            Ok(json!({ "table": table, "curves": entries }))
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Ensemble(_) => "ensemble",
        Command::Limits(_) => "limits",
        Command::Moments(_) => "moments",
        Command::Compare(_) => "compare",
        Command::Scenario(_) => "scenario",
    }
}

fn command_seed(c: &Command) -> Option<u64> {
    match c {
        Command::Simulate(a) => Some(a.engine.seed),
        Command::Ensemble(a) | Command::Compare(a) => Some(a.engine.seed),
        _ => None,
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let started = Instant::now();
    let mut out = Output::new(&cli.out)?;
    let details = execute(&cli.command, &mut out)?;
    let manifest = json!({
        "command": command_name(&cli.command),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": command_seed(&cli.command),
        "options": &cli.command,
        "threads": cli.threads,
        "details": details,
        "outputs": out.files,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    out.json("manifest.json", &manifest)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
