//! The `sizer` command line. [`run`] is the whole program; `main` only wires
//! up the process streams.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sizer_core::evaluation::{matrix_csv, run_matrix, TacticMatrix};
use sizer_core::experiment::{
    ExperimentOptions, ExperimentReport, ExperimentRequest, SamplingPlan, TacticConfig,
};
use sizer_core::modeling::{fit_report, ModelStore, QualityModel};
use sizer_core::sizing::{run_sizing, SizingOptions, SizingRequest, SizingResult, SizingStatus};
use sizer_core::{
    json, Error, GoalSpec, GroundTruth, PlatformConfig, QualityKind, Simulator,
    SystemUnderConfiguration, WorkloadModel,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_PLATFORM: u8 = 4;
pub const EXIT_USAGE: u8 = 64;

/// Environment variable naming the model store directory.
pub const MODEL_DIR_ENV: &str = "SIZER_MODEL_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "sizer",
    version,
    about = "Memory sizing for serverless functions"
)]
struct Cli {
    /// Output format for stdout.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect a system under configuration.
    #[command(subcommand)]
    Suc(SucCommand),
    /// Run sampling experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Fit and inspect quality models.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Find the memory sizes that best meet a goal.
    Size(SizeArgs),
    /// Evaluate configuration methods.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
enum SucCommand {
    Validate {
        #[arg(long)]
        suc: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    Run(ExperimentArgs),
}

#[derive(Debug, Subcommand)]
enum ModelCommand {
    /// Fit models from an experiment report and store them.
    Fit(FitArgs),
    /// Print a stored model by key, file name or `function/class[/hash]`.
    Show {
        key: String,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// List stored models.
    List {
        #[command(flatten)]
        store: StoreArgs,
    },
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Run a matrix of tactic configurations against the simulator.
    Tactics {
        #[arg(long)]
        matrix: PathBuf,
        /// Directory for the CSV, the JSON reports and scratch model stores.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct StoreArgs {
    /// Model store directory; defaults to $SIZER_MODEL_DIR, then ./models.
    #[arg(long)]
    model_dir: Option<PathBuf>,
}

impl StoreArgs {
    fn store(&self) -> ModelStore {
        let dir = self
            .model_dir
            .clone()
            .or_else(|| std::env::var_os(MODEL_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("models"));
        ModelStore::new(dir)
    }
}

#[derive(Debug, Args)]
struct PlatformArgs {
    #[arg(long)]
    suc: PathBuf,
    /// Hidden per-function behaviour driving the simulator.
    #[arg(long)]
    ground_truth: PathBuf,
    /// Simulator settings; defaults apply when omitted.
    #[arg(long)]
    platform: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Loaded {
    suc: SystemUnderConfiguration,
    sim: Simulator,
}

impl PlatformArgs {
    fn load(&self) -> Result<Loaded, Error> {
        let suc: SystemUnderConfiguration = json::read(&self.suc)?;
        suc.validate()?;
        let truth: GroundTruth = json::read(&self.ground_truth)?;
        let mut cfg: PlatformConfig = match &self.platform {
            Some(p) => json::read(p)?,
            None => PlatformConfig::default(),
        };
        cfg.rng_seed = self.seed;
        let sim = Simulator::new(cfg, suc.clone(), truth)?;
        Ok(Loaded { suc, sim })
    }
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    platform: PlatformArgs,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    tactics: Option<PathBuf>,
    #[arg(long)]
    workload: PathBuf,
    /// Executor settings.
    #[arg(long)]
    options: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the raw telemetry as JSON lines.
    #[arg(long)]
    telemetry: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    platform: PlatformArgs,
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    store: StoreArgs,
    /// Also write the fitted models to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SizeArgs {
    #[command(flatten)]
    platform: PlatformArgs,
    #[arg(long)]
    goal: PathBuf,
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    tactics: Option<PathBuf>,
    /// Sizing settings (sizes sampled, runs, search, schedule).
    #[arg(long)]
    options: Option<PathBuf>,
    /// Stored model references to use instead of sampling (needs reuse_model).
    #[arg(long = "model")]
    models: Vec<String>,
    /// Deploy the chosen policy afterwards.
    #[arg(long)]
    apply: bool,
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[command(flatten)]
    store: StoreArgs,
    #[arg(long)]
    suc: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long)]
    platform: Option<PathBuf>,
}

/// Failure of a verb, already mapped to an exit code.
struct Failure {
    code: u8,
    lines: Vec<String>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            e if e.is_validation() => EXIT_VALIDATION,
            Error::Io { .. } => EXIT_VALIDATION,
            Error::NoFeasiblePolicy => EXIT_INFEASIBLE,
            _ => EXIT_PLATFORM,
        };
        Failure {
            code,
            lines: e.diagnostics(),
        }
    }
}

type Outcome = Result<u8, Failure>;

struct Io<'a> {
    out: &'a mut dyn Write,
    format: Format,
}

impl Io<'_> {
    fn emit<T: Serialize>(
        &mut self,
        value: &T,
        table: impl FnOnce() -> String,
    ) -> Result<(), Error> {
        let text = match self.format {
            Format::Json => json::to_pretty(value)?,
            Format::Table => table(),
        };
        self.out
            .write_all(text.as_bytes())
            .map_err(|e| Error::Invalid(format!("writing stdout: {e}")))
    }
}

fn read_opt<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, Error> {
    match path {
        Some(p) => json::read(p),
        None => Ok(T::default()),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == EXIT_OK { stdout } else { stderr };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let mut io = Io {
        out: stdout,
        format: cli.format,
    };
    match dispatch(cli.command, &mut io) {
        Ok(code) => code,
        Err(f) => {
            for line in &f.lines {
                let _ = writeln!(stderr, "error: {line}");
            }
            f.code
        }
    }
}

fn dispatch(command: Command, io: &mut Io) -> Outcome {
    match command {
        Command::Suc(SucCommand::Validate { suc }) => validate_suc(&suc, io),
        Command::Experiment(ExperimentCommand::Run(a)) => experiment(a, io),
        Command::Model(ModelCommand::Fit(a)) => fit(a, io),
        Command::Model(ModelCommand::Show { key, store }) => {
            let m = store.store().find(&key)?;
            io.emit(&m, || model_table(&m))?;
            Ok(EXIT_OK)
        }
        Command::Model(ModelCommand::List { store }) => {
            let all = store.store().list()?;
            let keys: Vec<String> = all
                .iter()
                .map(|m| sizer_core::modeling::ModelKey::of(m).file_name())
                .collect();
            io.emit(&keys, || keys.iter().map(|k| format!("{k}\n")).collect())?;
            Ok(EXIT_OK)
        }
        Command::Size(a) => size(a, io),
        Command::Eval(EvalCommand::Tactics { matrix, out }) => eval_tactics(&matrix, &out, io),
        Command::Serve(a) => serve(a),
    }
}

fn validate_suc(path: &Path, io: &mut Io) -> Outcome {
    let suc: SystemUnderConfiguration = json::read(path)?;
    let v = suc.violations();
    if !v.is_empty() {
        return Err(Error::Validation(v).into());
    }
    let summary = serde_json::json!({
        "valid": true,
        "name": suc.name,
        "functions": suc.functions.len(),
        "fingerprint": suc.fingerprint(),
    });
    io.emit(&summary, || {
        format!("{}: valid ({} functions)\n", suc.name, suc.functions.len())
    })?;
    Ok(EXIT_OK)
}

fn experiment(a: ExperimentArgs, io: &mut Io) -> Outcome {
    let Loaded { suc, mut sim } = a.platform.load()?;
    let plan: SamplingPlan = json::read(&a.plan)?;
    let tactics: TacticConfig = read_opt(&a.tactics)?;
    let workload: WorkloadModel = json::read(&a.workload)?;
    let mut options: ExperimentOptions = read_opt(&a.options)?;
    options.seed = a.platform.seed;
    let request = ExperimentRequest {
        plan,
        tactics,
        workload,
        options,
    };
    let report = request.run(&mut sim, &suc)?;
    json::write(&a.out, &report)?;
    if let Some(path) = &a.telemetry {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        sim.write_telemetry_jsonl(std::io::BufWriter::new(file))?;
    }
    io.emit(&report_summary(&report), || report_table(&report))?;
    Ok(EXIT_OK)
}

fn report_summary(r: &ExperimentReport) -> serde_json::Value {
    serde_json::json!({
        "function": r.plan.function,
        "sizes": r.timings.iter().map(|t| t.size).collect::<Vec<_>>(),
        "omitted_sizes": r.omitted_sizes,
        "samples": r.samples.len(),
        "invocations": r.invocations,
        "throttled": r.throttled,
        "elapsed_ms": r.elapsed,
        "billed_cost": r.billed_cost,
    })
}

fn report_table(r: &ExperimentReport) -> String {
    let mut s = format!(
        "function {}  samples {}  elapsed {} ms  cost {:.9} USD\n",
        r.plan.function,
        r.samples.len(),
        r.elapsed,
        r.billed_cost
    );
    s.push_str("size_mb  mean_elat_ms  runs\n");
    for (size, q) in sizer_core::experiment::per_size_means(&r.samples) {
        let runs = r
            .samples
            .iter()
            .filter(|x| x.telemetry.memory_size == size)
            .count();
        let lat = q
            .get(&QualityKind::ELat)
            .map_or("-".to_string(), |v| format!("{v:.3}"));
        s.push_str(&format!("{size:>7}  {lat:>12}  {runs:>4}\n"));
    }
    s
}

fn fit(a: FitArgs, io: &mut Io) -> Outcome {
    let Loaded { suc, mut sim } = a.platform.load()?;
    let report: ExperimentReport = json::read(&a.report)?;
    sim.advance_to(report.finished_at)?;
    let store = a.store.store();
    let mut models = Vec::new();
    for (model, warning) in fit_report(&report, &suc, &sim)? {
        if let Some(w) = warning {
            log_warning(&w);
        }
        store.put(&model)?;
        models.push(model);
    }
    if let Some(out) = &a.out {
        json::write(out, &models)?;
    }
    io.emit(&models, || models.iter().map(model_table).collect())?;
    Ok(EXIT_OK)
}

fn log_warning(w: &str) {
    eprintln!("warning: {w}");
}

fn model_table(m: &QualityModel) -> String {
    let mut s = format!(
        "{} / {}  hash {}\n",
        m.function,
        m.workload_class,
        &m.suc_hash[..m.suc_hash.len().min(16)]
    );
    match &m.latency_params {
        Some(p) => s.push_str(&format!(
            "  ELat(m) = {:.6} * exp(-{:.8} * m) + {:.6}\n",
            p.a, p.b, p.c
        )),
        None => s.push_str("  ELat table only\n"),
    }
    if let Some(d) = &m.fit_diagnostics {
        s.push_str(&format!(
            "  rmse {:.4} ms over {} samples\n",
            d.rmse, d.n_samples
        ));
    }
    s
}

fn size(a: SizeArgs, io: &mut Io) -> Outcome {
    let Loaded { suc, mut sim } = a.platform.load()?;
    let goal: GoalSpec = json::read(&a.goal)?;
    let workload: WorkloadModel = json::read(&a.workload)?;
    let tactics: TacticConfig = read_opt(&a.tactics)?;
    let mut options: SizingOptions = read_opt(&a.options)?;
    options.seed = a.platform.seed;
    let request = SizingRequest {
        suc: if a.models.is_empty() {
            Some(suc.clone())
        } else {
            None
        },
        models: a.models,
        goal,
        workload,
        tactics,
        apply: a.apply,
        options,
    };
    let store = a.store.store();
    let run = run_sizing(&request, &suc, &mut sim, &store)?;
    for w in &run.result.provenance.warnings {
        log_warning(w);
    }
    json::write(&a.out, &run.result)?;
    io.emit(&run.result, || result_table(&run.result, &suc))?;
    Ok(if run.result.status == SizingStatus::Infeasible {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    })
}

fn result_table(r: &SizingResult, suc: &SystemUnderConfiguration) -> String {
    let status = serde_json::to_value(r.status)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    let mut s = format!("status {status}  zf {:.6}\n", r.zf_score);
    for f in &suc.functions {
        let m = r
            .policy
            .memory(&f.name)
            .map_or("-".to_string(), |m| m.to_string());
        s.push_str(&format!("  {:<20} {m:>6} MB\n", f.name));
    }
    for (k, v) in &r.predicted {
        s.push_str(&format!("  {:<12} {v}\n", k.as_str()));
    }
    for b in &r.violated_bounds {
        s.push_str(&format!(
            "  violated: {} {} {}\n",
            b.quality.as_str(),
            serde_json::to_value(b.operator)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            b.threshold
        ));
    }
    s
}

fn eval_tactics(matrix: &Path, out: &Path, io: &mut Io) -> Outcome {
    let matrix: TacticMatrix = json::read(matrix)?;
    let scratch = out.join("models");
    if scratch.exists() {
        std::fs::remove_dir_all(&scratch)
            .map_err(|e| Error::Invalid(format!("{}: {e}", scratch.display())))?;
    }
    let rows = run_matrix(&matrix, &scratch)?;
    let csv = matrix_csv(&rows)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Invalid(format!("{}: {e}", out.display())))?;
    std::fs::write(out.join("tactics.csv"), &csv).map_err(|e| Error::Invalid(e.to_string()))?;
    json::write(out.join("reports.json"), &rows)?;
    let summary = sizer_core::evaluation::summarize(&rows);
    io.emit(&summary, || csv.clone())?;
    Ok(EXIT_OK)
}

fn serve(a: ServeArgs) -> Outcome {
    let suc: SystemUnderConfiguration = json::read(&a.suc)?;
    let ground_truth: GroundTruth = json::read(&a.ground_truth)?;
    let platform: PlatformConfig = read_opt(&a.platform)?;
    let cfg = sizer_service::ServiceConfig {
        model_dir: a.store.store().dir().to_path_buf(),
        suc,
        platform,
        ground_truth,
    };
    sizer_service::serve_blocking(cfg, a.port).map_err(|e| Failure {
        code: EXIT_PLATFORM,
        lines: vec![e.to_string()],
    })?;
    Ok(EXIT_OK)
}
