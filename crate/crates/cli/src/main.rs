//! `embalign`: learn, apply and evaluate unsupervised embedding alignments.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or file
//! format error, 3 numerical failure during fitting or evaluation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use embalign_core::io::{load_model, read_embeddings, save_model, write_embeddings};
use embalign_core::linalg::orthogonality_defect;
use embalign_core::preprocess::degenerate_rows;
use embalign_core::{
    drop_degenerate_rows, evaluate, fit, synth_generate, AlignError, ConfigOverrides, EmbeddingMatrix, FitError,
    FormatError, PipelineConfig, SynthSpec,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "embalign", version, about = "Unsupervised linear alignment of embedding spaces")]
struct Cli {
    /// Cap on worker threads for the parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More logging; repeat for more detail. Enables timestamps.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a map from the source pool into the target pool.
    Fit(Box<FitArgs>),
    /// Map source embeddings into the target space with a fitted model.
    Translate(TranslateArgs),
    /// Score a model on row-aligned evaluation pairs.
    Eval(EvalArgs),
    /// Generate a synthetic pair of pools with a known relation.
    Synth(SynthArgs),
    /// Print a model's configuration and diagnostics.
    Inspect(InspectArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Full-size hyperparameters.
    Default,
    /// Scaled-down hyperparameters for pools of a few thousand rows.
    Small,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Base hyperparameters, overridden by --config and then by flags.
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
    /// JSON file with any subset of the hyperparameter keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k_prime: Option<usize>,
    #[arg(long)]
    c_prime: Option<usize>,
    #[arg(long)]
    n_sample: Option<usize>,
    #[arg(long)]
    qap_restarts: Option<usize>,
    #[arg(long)]
    refine2_iters: Option<usize>,
    #[arg(long)]
    kmeans_inits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl FitArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            c: self.c,
            k: self.k,
            s: self.s,
            t: self.t,
            alpha: self.alpha,
            kprime: self.k_prime,
            cprime: self.c_prime,
            nsample: self.n_sample,
            qaprestarts: self.qap_restarts,
            refine2iters: self.refine2_iters,
            kmeansinits: self.kmeans_inits,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    eval_source: PathBuf,
    #[arg(long)]
    eval_target: PathBuf,
    /// Emit the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthSpec::default().n)]
    n: usize,
    #[arg(long, default_value_t = SynthSpec::default().d)]
    d: usize,
    #[arg(long, default_value_t = SynthSpec::default().components)]
    components: usize,
    #[arg(long, default_value_t = SynthSpec::default().noise_sigma)]
    noise: f64,
    #[arg(long, default_value_t = SynthSpec::default().anisotropy)]
    anisotropy: f64,
    #[arg(long, default_value_t = SynthSpec::default().eval_pairs)]
    eval_pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e.source {
            AlignError::InvalidConfig { .. } => CliError::Usage(e.source.to_string()),
            AlignError::DimensionMismatch { .. } | AlignError::DegenerateRow { .. } => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

/// Shape problems in the caller's files are data errors; anything else that
/// surfaces from the numerics is a numerical failure.
fn classify(e: AlignError) -> CliError {
    match e {
        AlignError::DimensionMismatch { .. }
        | AlignError::LengthMismatch { .. }
        | AlignError::DegenerateRow { .. }
        | AlignError::EmptyInput(_)
        | AlignError::NonFiniteInput(_) => CliError::Data(e.to_string()),
        AlignError::InvalidConfig { .. } | AlignError::SpecInvalid(_) => CliError::Usage(e.to_string()),
        _ => CliError::Numeric(e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let result = match cli.command {
        Command::Fit(args) => run_fit(*args),
        Command::Translate(args) => run_translate(args),
        Command::Eval(args) => run_eval(args),
        Command::Synth(args) => run_synth(args),
        Command::Inspect(args) => run_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let mut builder = env_logger::Builder::new();
    builder.filter_level(level).parse_default_env();
    if verbose == 0 {
        builder.format_timestamp(None);
    }
    builder.init();
}

fn load_pool(path: &Path) -> Result<EmbeddingMatrix, CliError> {
    let x = read_embeddings(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (clean, dropped) = drop_degenerate_rows(&x).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if !dropped.is_empty() {
        log::warn!("{}: dropped {} degenerate row(s)", path.display(), dropped.len());
    }
    Ok(clean)
}

fn resolve_config(args: &FitArgs) -> Result<PipelineConfig, CliError> {
    let mut config = match args.preset {
        Preset::Default => PipelineConfig::default(),
        Preset::Small => PipelineConfig::small(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let file: ConfigOverrides =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        config = file.apply(&config);
    }
    let config = args.overrides().apply(&config);
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn run_fit(args: FitArgs) -> Result<(), CliError> {
    let config = resolve_config(&args)?;
    let xa = load_pool(&args.source)?;
    let xb = load_pool(&args.target)?;
    if xa.d() != xb.d() {
        return Err(CliError::Data(format!("source has dimension {}, target has {}", xa.d(), xb.d())));
    }
    let model = fit(&xa, &xb, &config)?;
    save_model(&args.out, &model)?;
    let d = &model.diagnostics;
    for (stage, value) in [("initial", d.initial), ("refine-1", d.refine1), ("refine-2", d.refine2)] {
        if let Some(v) = value {
            println!("{stage:<9} mean cosine {v:.6}");
        }
    }
    Ok(())
}

fn run_translate(args: TranslateArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let x = read_embeddings(&args.input)?;
    let y = model.translate(&x).map_err(classify)?;
    write_embeddings(&args.out, &y)?;
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let ea = read_embeddings(&args.eval_source)?;
    let eb = read_embeddings(&args.eval_target)?;
    if ea.n() != eb.n() {
        return Err(CliError::Data(format!("evaluation files have {} and {} rows", ea.n(), eb.n())));
    }
    for x in [&ea, &eb] {
        if x.d() != model.d() {
            return Err(CliError::Data(format!("{} has dimension {}, model expects {}", x.label(), x.d(), model.d())));
        }
    }
    // A pair is dropped when either side collapses to zero after centering.
    let mut bad = degenerate_rows(&ea, model.stats_a.mean.view());
    bad.extend(degenerate_rows(&eb, model.stats_b.mean.view()));
    bad.sort_unstable();
    bad.dedup();
    let (ea, eb) = if bad.is_empty() {
        (ea, eb)
    } else {
        log::warn!("dropping {} evaluation pair(s) with degenerate rows", bad.len());
        let keep: Vec<usize> = (0..ea.n()).filter(|i| bad.binary_search(i).is_err()).collect();
        if keep.is_empty() {
            return Err(CliError::Data("every evaluation pair is degenerate".into()));
        }
        (ea.select_rows(&keep).map_err(classify)?, eb.select_rows(&keep).map_err(classify)?)
    };

    let report = evaluate(&model, &ea, &eb).map_err(classify)?;
    if args.json {
        let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numeric(e.to_string()))?;
        println!("{text}");
    } else {
        println!("top1       {:.6}", report.top1);
        println!("avgRank    {:.6}", report.avg_rank);
        println!("meanCosine {:.6}", report.mean_cosine);
        println!("n          {}", report.n);
    }
    Ok(())
}

/// Ground truth as written to `truth.json`, with matrices as nested rows.
#[derive(Serialize)]
struct TruthFile {
    d: usize,
    /// `B = scale * ((A + noise) rotation) + translation`, rows as vectors.
    rotation: Vec<Vec<f64>>,
    translation: Vec<f64>,
    scale: f64,
    spec: SynthSpec,
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        n: args.n,
        d: args.d,
        components: args.components,
        noise_sigma: args.noise,
        anisotropy: args.anisotropy,
        seed: args.seed,
        eval_pairs: args.eval_pairs,
    };
    let data = synth_generate(&spec).map_err(classify)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::Data(format!("{}: {e}", args.out_dir.display())))?;
    for (name, x) in [("XA.emb", &data.xa), ("XB.emb", &data.xb), ("evalA.emb", &data.eval_a), ("evalB.emb", &data.eval_b)] {
        write_embeddings(args.out_dir.join(name), x)?;
    }
    let truth = TruthFile {
        d: spec.d,
        rotation: data.truth.rotation.rows().into_iter().map(|r| r.to_vec()).collect(),
        translation: data.truth.translation.to_vec(),
        scale: data.truth.scale,
        spec,
    };
    let text = serde_json::to_string_pretty(&truth).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(args.out_dir.join("truth.json"), text + "\n").map_err(FormatError::from)?;
    Ok(())
}

fn run_inspect(args: InspectArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    println!("d: {}", model.d());
    let config = serde_json::to_string_pretty(&model.config).map_err(|e| CliError::Data(e.to_string()))?;
    println!("config: {config}");
    let d = &model.diagnostics;
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
    println!("diagnostics (mean cosine):");
    println!("  initial  {}", show(d.initial));
    println!("  refine-1 {}", show(d.refine1));
    println!("  refine-2 {}", show(d.refine2));
    println!("orthogonality defect |W^T W - I|_max: {:.3e}", orthogonality_defect(model.w.view()));
    Ok(())
}
