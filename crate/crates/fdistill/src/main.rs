use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fdistill::config::{parse_config, ExperimentSpec, Preset};
use fdistill::history::save_history;
use fdistill::model_io::{load_model, save_model};
use fdistill::presets::{run, History};
use fdistill::results::{all_passed, emit_results, summary_lines, write_csv, write_jsonl};
use fdistill::{apply_enum_cap_from_env, HarnessError, ResultRecord};
use fdistill_core::decompose::{brute_force_seq_divergence, stepwise_exact};
use fdistill_core::{seed, DivergenceKind, JsConditionalMode, Sequence, TabularARModel, Vocab};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "fdistill", version, about = "Desk-scale sequence-level distillation under f-divergences")]
#[command(
    after_help = "Exit status: 0 when every check passes, 1 when a check fails, 2 on a configuration or input error.\n\
    FDISTILL_ENUM_CAP overrides the cap on enumerated sequences (default 10000000)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Step-wise decomposition against brute force on random model pairs.
    #[command(after_help = defaults_help(Preset::TheoremCheck))]
    CheckTheorem(RunArgs),
    /// Mode averaging versus mode collapse on a sharp bimodal teacher.
    #[command(after_help = defaults_help(Preset::ModeStudy))]
    ModeStudy(RunArgs),
    /// Trains full-capacity students and checks the final divergence.
    #[command(after_help = defaults_help(Preset::Convergence))]
    Converge(RunArgs),
    /// Offline versus online teacher sampling.
    #[command(after_help = defaults_help(Preset::Efficiency))]
    Efficiency(RunArgs),
    /// Analytic gradients against central finite differences.
    #[command(after_help = defaults_help(Preset::GradCheck))]
    GradCheck(RunArgs),
    /// Sequence-level and step-wise divergences between two model files.
    Divergence(DivergenceArgs),
    /// Writes a model file.
    NewModel(NewModelArgs),
}

#[derive(Args, Clone, Copy)]
#[group(multiple = false)]
struct Format {
    /// Print records as JSON lines.
    #[arg(long)]
    json: bool,
    /// Print records as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Writes PATH.jsonl and PATH.csv.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(flatten)]
    format: Format,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    teacher_order: Option<usize>,
    #[arg(long)]
    student_order: Option<usize>,
    /// Objective, or a comma-separated list: kl, rkl, js, tvd, seqkd, engine, mle.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long, value_parser = ["exact", "mixture"])]
    js_mode: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Directory for per-run training histories (JSON lines).
    #[arg(long, value_name = "DIR")]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct DivergenceArgs {
    teacher: PathBuf,
    student: PathBuf,
    #[arg(long, value_parser = ["kl", "rkl", "js", "tvd"])]
    kind: Option<String>,
    #[arg(long, value_parser = ["exact", "mixture"], default_value = "exact")]
    js_mode: String,
    #[command(flatten)]
    format: Format,
}

#[derive(Args)]
struct NewModelArgs {
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    vocab: usize,
    #[arg(long, default_value_t = 4)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    order: usize,
    #[arg(long)]
    stationary: bool,
    /// Standard deviation of the random logits; 0 gives a uniform model.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bimodal teacher on the modes 0..0 and 1..1 (ignores order, scale, seed).
    #[arg(long, value_name = "SHARPNESS")]
    bimodal: Option<f64>,
}

fn defaults_help(preset: Preset) -> String {
    let body: String = ExperimentSpec::preset(preset).to_config_string().lines().map(|l| format!("  {l}\n")).collect();
    format!("Defaults (config keys; --config and flags override them):\n{body}")
}

enum Failure {
    Checks,
    Error(HarnessError),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self::Error(e)
    }
}

impl From<fdistill_core::Error> for Failure {
    fn from(e: fdistill_core::Error) -> Self {
        Self::Error(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = apply_enum_cap_from_env().map_err(Failure::from).and_then(|()| match cli.command {
        Command::CheckTheorem(a) => run_preset(Preset::TheoremCheck, a),
        Command::ModeStudy(a) => run_preset(Preset::ModeStudy, a),
        Command::Converge(a) => run_preset(Preset::Convergence, a),
        Command::Efficiency(a) => run_preset(Preset::Efficiency, a),
        Command::GradCheck(a) => run_preset(Preset::GradCheck, a),
        Command::Divergence(a) => divergence(a),
        Command::NewModel(a) => new_model(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(EXIT_FAILED),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn build_spec(preset: Preset, args: &RunArgs) -> Result<ExperimentSpec, HarnessError> {
    let mut spec = match &args.config {
        Some(path) => parse_config(path, Some(preset))?,
        None => ExperimentSpec::preset(preset),
    };
    let overrides = [
        ("seed", args.seed.map(|v| v.to_string())),
        ("vocab", args.vocab.map(|v| v.to_string())),
        ("horizon", args.horizon.map(|v| v.to_string())),
        ("teacher_order", args.teacher_order.map(|v| v.to_string())),
        ("student_order", args.student_order.map(|v| v.to_string())),
        ("kind", args.kind.clone()),
        ("js_mode", args.js_mode.clone()),
        ("trials", args.trials.map(|v| v.to_string())),
        ("steps", args.steps.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(value) = value {
            spec.set(key, &value).map_err(|m| HarnessError::Config(format!("--{}: {m}", key.replace('_', "-"))))?;
        }
    }
    if let Some(out) = &args.out {
        spec.output_path = Some(out.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io { path: path.to_path_buf(), source: e }
}

fn run_preset(preset: Preset, args: RunArgs) -> Result<(), Failure> {
    let spec = build_spec(preset, &args)?;
    let result = run(&spec)?;
    if let Some(path) = &spec.output_path {
        emit_results(&result.records, path)?;
    }
    if let Some(dir) = &args.history {
        write_histories(dir, &result.histories)?;
    }
    print_records(&result.records, args.format)?;
    if all_passed(&result.records) {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn write_histories(dir: &Path, histories: &[History]) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for h in histories {
        save_history(&h.steps, &dir.join(format!("trial{}-{}.jsonl", h.trial, h.label)))?;
    }
    Ok(())
}

fn print_records(records: &[ResultRecord], format: Format) -> Result<(), HarnessError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let label = Path::new("<stdout>");
    if format.json {
        write_jsonl(records, &mut out)?;
    } else if format.csv {
        write_csv(records, &mut out)?;
    } else {
        for line in summary_lines(records) {
            writeln!(out, "{line}").map_err(io_err(label))?;
        }
    }
    out.flush().map_err(io_err(label))
}

fn divergence(args: DivergenceArgs) -> Result<(), Failure> {
    let teacher = load_model(&args.teacher)?;
    let student = load_model(&args.student)?;
    let mode = JsConditionalMode::from_name(&args.js_mode).unwrap_or(JsConditionalMode::ExactMarginalRatio);
    let kinds: Vec<DivergenceKind> = match &args.kind {
        Some(name) => DivergenceKind::from_name(name).into_iter().collect(),
        None => DivergenceKind::ALL.to_vec(),
    };
    let mut rows = Vec::new();
    for kind in kinds {
        let brute = brute_force_seq_divergence(&teacher, &student, kind)?;
        let stepwise = stepwise_exact(&teacher, &student, kind, mode)?;
        rows.push((kind, brute, stepwise));
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let label = Path::new("<stdout>");
    if args.format.json {
        for &(kind, brute, stepwise) in &rows {
            let row = serde_json::json!({ "kind": kind.name(), "brute_force": brute, "stepwise": stepwise });
            writeln!(out, "{row}").map_err(io_err(label))?;
        }
    } else {
        let mut w = csv::WriterBuilder::new().delimiter(if args.format.csv { b',' } else { b'\t' }).from_writer(out);
        w.write_record(["kind", "brute_force", "stepwise"]).map_err(HarnessError::from)?;
        for &(kind, brute, stepwise) in &rows {
            w.write_record([kind.name(), &format!("{brute:?}"), &format!("{stepwise:?}")])
                .map_err(HarnessError::from)?;
        }
        w.flush().map_err(io_err(label))?;
    }
    Ok(())
}

fn new_model(args: NewModelArgs) -> Result<(), Failure> {
    let vocab = Vocab::new(args.vocab)?;
    let model = match args.bimodal {
        Some(sharpness) => {
            let a = Sequence::new(vec![0; args.horizon]);
            let b = Sequence::new(vec![1; args.horizon]);
            TabularARModel::bimodal_teacher(vocab, args.horizon, &a, &b, sharpness)?
        }
        None if args.scale == 0.0 => TabularARModel::zeros(vocab, args.horizon, args.order, args.stationary)?,
        None => TabularARModel::random(
            vocab,
            args.horizon,
            args.order,
            args.stationary,
            &mut seed::rng(args.seed),
            args.scale,
        )?,
    };
    save_model(&model, &args.out)?;
    Ok(())
}
