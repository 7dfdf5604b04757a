//! Command implementations behind the `deepkeygen` binary.

pub mod config;

use clap::{Args, Parser, Subcommand};
use config::ExperimentConfig;
use deepkeygen::attack::{self, ExperimentPlan, Scenario};
use deepkeygen::baselines::{write_domain, ChaosDomainParams, KeystreamSpec, CHAOS_BURN_IN, LOGISTIC_R};
use deepkeygen::dataset::{ingest, ImageSource};
use deepkeygen::metrics::DEFAULT_CORRELATION_SAMPLES;
use deepkeygen::net::{generate_key, train_with};
use deepkeygen::randomness::NistParams;
use deepkeygen::report::{self, AnalysisReport, InputRecord, SummaryRow};
use deepkeygen::sweep::{run_sweep, write_sweep_csv, SweepPlan};
use deepkeygen::{xor_decrypt, xor_encrypt, Checkpoint, Error, ImageKey, RasterImage, TrainConfig};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// GAN-based image key generation, XOR image encryption and analysis.
#[derive(Debug, Parser)]
#[command(name = "deepkeygen", version)]
pub struct Cli {
    /// Master seed; the DKG_SEED environment variable sets it too.
    #[arg(long, global = true, env = "DKG_SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a chaotic-encrypted transformation domain from a set of images.
    BuildDomain(BuildDomainArgs),
    /// Train a key generator.
    Train(TrainArgs),
    /// Generate a key from a trained generator and a seed image.
    Genkey(GenkeyArgs),
    /// XOR-encrypt an image with a key.
    Encrypt(XorArgs),
    /// Decrypt an image encrypted with `encrypt`.
    Decrypt(XorArgs),
    /// Entropy, histogram, correlations, key space and randomness tests of a key.
    AnalyzeKey(AnalyzeKeyArgs),
    /// Compare a plaintext with its ciphertext.
    AnalyzeCipher(AnalyzeCipherArgs),
    /// Entropy and randomness tests of the baseline keystream generators.
    CompareBaselines(CompareBaselinesArgs),
    /// Leakage and traditional-attack experiments.
    AttackLab(AttackLabArgs),
    /// Hyper-parameter grid over learning rate, batch size and iterations.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct BuildDomainArgs {
    /// Directory of source images.
    #[arg(long, conflicts_with = "phantoms", required_unless_present = "phantoms")]
    pub from: Option<PathBuf>,
    /// Use this many synthetic phantoms instead of a directory.
    #[arg(long)]
    pub phantoms: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    #[arg(long, default_value_t = LOGISTIC_R)]
    pub r: f64,
    #[arg(long, default_value_t = CHAOS_BURN_IN)]
    pub burn_in: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment config (JSON); replaces the directory and training flags.
    #[arg(long, conflicts_with_all = ["source", "domain", "out"])]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub source: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub domain: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long, required_unless_present = "config")]
    pub out: Option<PathBuf>,
    /// Start from the laptop-scale defaults (64x64, 2000 iterations).
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub residual_blocks: Option<usize>,
    #[arg(long)]
    pub non_saturating: bool,
    /// Write a snapshot every N iterations next to the checkpoint.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Training report (JSON) path; defaults to `<out>.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-iteration losses as CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenkeyArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Resized to the generator's resolution if needed.
    #[arg(long)]
    pub seed_image: PathBuf,
    /// `.dkey` container, or `.png` for a lossless image export.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct XorArgs {
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalysisOpts {
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CORRELATION_SAMPLES)]
    pub samples: usize,
    /// JSON file overriding randomness test parameters.
    #[arg(long)]
    pub nist_params: Option<PathBuf>,
    /// Run every aperiodic template instead of one.
    #[arg(long)]
    pub all_templates: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeKeyArgs {
    pub key: PathBuf,
    #[command(flatten)]
    pub opts: AnalysisOpts,
}

#[derive(Debug, Args)]
pub struct AnalyzeCipherArgs {
    #[arg(long)]
    pub plain: PathBuf,
    #[arg(long)]
    pub cipher: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CORRELATION_SAMPLES)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct CompareBaselinesArgs {
    #[arg(long, default_value_t = 196608)]
    pub length: usize,
    /// CSV mirror of the summary table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub opts: AnalysisOpts,
}

#[derive(Debug, Args)]
pub struct AttackLabArgs {
    /// Plan file (JSON); see `--scenario` for a generated one.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub plan: Option<PathBuf>,
    /// Run the laptop-scale plan for a scenario: domain-leak, structure-leak,
    /// both-leak, one-time-pad, sensitivity, chosen-plaintext, chosen-ciphertext.
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the plan's training resolution.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Override the plan's iteration count.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Reuse a trained generator instead of training the first variant.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub contact_sheet: bool,
    /// Write the plan and stop.
    #[arg(long)]
    pub plan_only: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Source images; synthetic phantoms when absent.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Transformation domain; chaos-encrypted phantoms when absent.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.002, 0.0002])]
    pub learning_rates: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 6, 10])]
    pub batch_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [500, 1000, 2000])]
    pub iterations: Vec<u64>,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long)]
    pub residual_blocks: Option<usize>,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown scenario `{s}`"))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => EXIT_USAGE,
            CliError::Core(e) if e.is_numerical() => EXIT_DIVERGED,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parse `argv` and run; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    let seed = cli.seed;
    match cli.command {
        Command::BuildDomain(a) => build_domain(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Genkey(a) => genkey(a),
        Command::Encrypt(a) => xor_cmd(a, false),
        Command::Decrypt(a) => xor_cmd(a, true),
        Command::AnalyzeKey(a) => analyze_key(a, seed),
        Command::AnalyzeCipher(a) => analyze_cipher(a, seed),
        Command::CompareBaselines(a) => compare_baselines(a),
        Command::AttackLab(a) => attack_lab(a, seed),
        Command::Sweep(a) => sweep(a, seed),
    }
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    Ok(())
}

fn write_text(path: &Path, text: String) -> CliResult {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

fn emit<B: Serialize>(report: &AnalysisReport<B>, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => report.write(p)?,
        None => print!("{}", report.to_json()?),
    }
    Ok(())
}

fn hash_all(paths: &[PathBuf]) -> CliResult<Vec<InputRecord>> {
    Ok(paths.iter().map(|p| InputRecord::hash_file(p)).collect::<deepkeygen::Result<_>>()?)
}

fn nist_params(opts: &AnalysisOpts) -> CliResult<NistParams> {
    let mut p = match &opts.nist_params {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => NistParams::default(),
    };
    p.all_templates |= opts.all_templates;
    Ok(p)
}

#[derive(Serialize)]
struct DomainManifest<'a> {
    params: &'a ChaosDomainParams,
    resolution: usize,
    files: Vec<String>,
}

fn build_domain(a: BuildDomainArgs, seed: Option<u64>) -> CliResult {
    let params = ChaosDomainParams { r: a.r, burn_in: a.burn_in, master_seed: seed.unwrap_or(0) };
    let (sources, inputs) = match (&a.from, a.phantoms) {
        (Some(dir), _) => {
            let rep = ingest(dir, a.resolution)?;
            let inputs = hash_all(&rep.files)?;
            (rep.images, inputs)
        }
        (None, Some(n)) => (ImageSource::Phantom { count: n, seed: params.master_seed }.load(a.resolution)?, Vec::new()),
        (None, None) => return Err(CliError::Usage("pass --from or --phantoms".into())),
    };
    let images = deepkeygen::baselines::build_transformation_domain(&sources, &params)?;
    create_dir(&a.out)?;
    let files = write_domain(&images, &a.out)?;
    let names = files.iter().filter_map(|f| f.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    let config = serde_json::json!({ "from": a.from, "phantoms": a.phantoms, "resolution": a.resolution, "params": params });
    let manifest = DomainManifest { params: &params, resolution: a.resolution, files: names };
    AnalysisReport::new("build-domain", &config, inputs, manifest)?.write(&a.out.join("domain.json"))?;
    eprintln!("wrote {} domain images to {}", images.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    iterations: u64,
    final_losses: Option<deepkeygen::net::GanLosses>,
    skipped_files: Vec<deepkeygen::dataset::SkippedFile>,
    checkpoint: String,
    checkpoint_sha256: String,
    key_analysis: Option<report::KeyAnalysis>,
}

#[derive(Serialize)]
struct LossRow {
    iteration: usize,
    l_g: f64,
    l_d: f64,
    l_total: f64,
}

fn snapshot_path(out: &Path, iteration: u64) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "generator".into());
    out.with_file_name(format!("{stem}_iter{iteration:06}.dkgn"))
}

fn train_cmd(a: TrainArgs, seed: Option<u64>) -> CliResult {
    let exp = match &a.config {
        Some(path) => {
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
                cfg.sync();
            }
            cfg
        }
        None => {
            let base = if a.desk { TrainConfig::desk() } else { TrainConfig::default() };
            let train = TrainConfig {
                resolution: a.resolution.unwrap_or(base.resolution),
                iterations: a.iterations.unwrap_or(base.iterations),
                lr: a.lr.unwrap_or(base.lr),
                batch_size: a.batch_size.unwrap_or(base.batch_size),
                residual_blocks: a.residual_blocks.unwrap_or(base.residual_blocks),
                non_saturating_g_loss: a.non_saturating,
                checkpoint_every: a.checkpoint_every.unwrap_or(0),
                seed: seed.unwrap_or(base.seed),
                ..base
            };
            let out = a.out.clone().expect("required by clap");
            ExperimentConfig {
                source_dir: a.source.clone().expect("required by clap"),
                domain_dir: a.domain.clone().expect("required by clap"),
                output_dir: out.parent().map(Path::to_path_buf).unwrap_or_default(),
                resolution: train.resolution,
                master_seed: train.seed,
                analysis: config::AnalysisToggles { analyze_key: false, ..Default::default() },
                train,
            }
        }
    };
    exp.train.validate()?;
    let ckpt_path = match &a.out {
        Some(p) => p.clone(),
        None => exp.output_dir.join("generator.dkgn"),
    };
    if let Some(dir) = ckpt_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let src = ingest(&exp.source_dir, exp.resolution)?;
    let dom = ingest(&exp.domain_dir, exp.resolution)?;
    let outcome = train_with(&src.images, &dom.images, &exp.train, |t| {
        let p = snapshot_path(&ckpt_path, t.iteration);
        log::info!("snapshot {}", p.display());
        t.checkpoint().save(p)
    })?;
    outcome.checkpoint.save(&ckpt_path)?;

    if let Some(h) = &a.history {
        let rows: Vec<LossRow> = outcome
            .history
            .iter()
            .enumerate()
            .map(|(i, l)| LossRow { iteration: i + 1, l_g: l.l_g, l_d: l.l_d, l_total: l.l_total })
            .collect();
        report::write_csv(&rows, h)?;
    }
    let key_analysis = if exp.analysis.analyze_key {
        let key = generate_key(&outcome.checkpoint, &src.images[0])?;
        Some(report::analyze_key(&key, exp.analysis.correlation_samples, exp.master_seed, &exp.analysis.nist)?)
    } else {
        None
    };
    let mut inputs = hash_all(&src.files)?;
    inputs.extend(hash_all(&dom.files)?);
    let summary = TrainSummary {
        iterations: exp.train.iterations,
        final_losses: outcome.history.last().copied(),
        skipped_files: src.skipped.into_iter().chain(dom.skipped).collect(),
        checkpoint: ckpt_path.display().to_string(),
        checkpoint_sha256: InputRecord::hash_file(&ckpt_path)?.sha256,
        key_analysis,
    };
    let report_path = a.report.clone().unwrap_or_else(|| ckpt_path.with_extension("json"));
    AnalysisReport::new("train", &exp, inputs, summary)?.write(&report_path)?;
    eprintln!("wrote {} and {}", ckpt_path.display(), report_path.display());
    Ok(())
}

fn genkey(a: GenkeyArgs) -> CliResult {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let res = ckpt.config.resolution;
    let mut seed = RasterImage::load(&a.seed_image)?.to_rgb();
    if seed.width() != res || seed.height() != res {
        log::info!("resizing seed image {}x{} to {res}x{res}", seed.width(), seed.height());
        seed = seed.resize(res, res);
    }
    generate_key(&ckpt, &seed)?.save(&a.out)?;
    Ok(())
}

fn xor_cmd(a: XorArgs, decrypt: bool) -> CliResult {
    let key = ImageKey::load(&a.key)?;
    let input = RasterImage::load(&a.input)?;
    let out = if decrypt { xor_decrypt(&input, &key)? } else { xor_encrypt(&input, &key)? };
    out.save(&a.out)?;
    Ok(())
}

fn analyze_key(a: AnalyzeKeyArgs, seed: Option<u64>) -> CliResult {
    let key = ImageKey::load(&a.key)?;
    let nist = nist_params(&a.opts)?;
    let seed = seed.unwrap_or(0);
    let body = report::analyze_key(&key, a.opts.samples, seed, &nist)?;
    let config = serde_json::json!({ "key": a.key, "samples": a.opts.samples, "seed": seed, "nist": nist });
    let rep = AnalysisReport::new("analyze-key", &config, vec![InputRecord::hash_file(&a.key)?], body)?;
    emit(&rep, a.opts.out.as_deref())
}

fn analyze_cipher(a: AnalyzeCipherArgs, seed: Option<u64>) -> CliResult {
    let plain = RasterImage::load(&a.plain)?;
    let cipher = RasterImage::load(&a.cipher)?;
    let seed = seed.unwrap_or(0);
    let body = report::analyze_cipher(&plain, &cipher, a.samples, seed)?;
    let config = serde_json::json!({ "plain": a.plain, "cipher": a.cipher, "samples": a.samples, "seed": seed });
    let inputs = hash_all(&[a.plain.clone(), a.cipher.clone()])?;
    emit(&AnalysisReport::new("analyze-cipher", &config, inputs, body)?, a.out.as_deref())
}

fn compare_baselines(a: CompareBaselinesArgs) -> CliResult {
    if a.length == 0 {
        return Err(CliError::Usage("--length must be positive".into()));
    }
    let nist = nist_params(&a.opts)?;
    let specs = KeystreamSpec::defaults(a.length);
    let rows = report::compare_baselines(&specs, &nist)?;
    for r in &rows {
        eprintln!("{:<8} entropy {:.4}  passed {}/4", r.generator, r.entropy, r.randomness.passed_count());
    }
    if let Some(csv) = &a.csv {
        let summary: Vec<SummaryRow> = rows.iter().map(|r| SummaryRow::new(&r.generator, r.entropy, &r.randomness)).collect();
        report::write_csv(&summary, csv)?;
    }
    let config = serde_json::json!({ "length": a.length, "specs": specs, "nist": nist });
    emit(&AnalysisReport::new("compare-baselines", &config, Vec::new(), rows)?, a.opts.out.as_deref())
}

fn attack_lab(a: AttackLabArgs, seed: Option<u64>) -> CliResult {
    let mut plan = match (&a.plan, a.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            let mut plan: ExperimentPlan = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if let Some(s) = seed {
                plan.master_seed = s;
            }
            plan
        }
        (None, Some(sc)) => ExperimentPlan::desk(sc, seed.unwrap_or(0)),
        (None, None) => return Err(CliError::Usage("pass --plan or --scenario".into())),
    };
    if let Some(r) = a.resolution {
        plan.train.resolution = r;
    }
    if let Some(n) = a.iterations {
        plan.train.iterations = n;
    }
    if let Some(c) = &a.checkpoint {
        plan.checkpoint = Some(c.clone());
    }
    plan.contact_sheet |= a.contact_sheet;
    plan.validate()?;
    create_dir(&a.out)?;
    if a.plan_only {
        return write_text(&a.out.join("plan.json"), serde_json::to_string_pretty(&plan)? + "\n");
    }
    let run = attack::run(&plan)?;
    attack::write_outputs(&plan, &run, &a.out)?;
    for note in &run.report.notes {
        eprintln!("{note}");
    }
    eprintln!("wrote attack-lab outputs to {}", a.out.display());
    Ok(())
}

fn sweep(a: SweepArgs, seed: Option<u64>) -> CliResult {
    let seed = seed.unwrap_or(0);
    let source = match &a.source {
        Some(p) => ImageSource::Dir { path: p.clone() },
        None => ImageSource::Phantom { count: 40, seed: seed.wrapping_add(1000) },
    };
    let domain = match &a.domain {
        Some(p) => ImageSource::Dir { path: p.clone() },
        None => ImageSource::Chaos {
            from: Box::new(ImageSource::Phantom { count: 40, seed: seed.wrapping_add(2000) }),
            params: ChaosDomainParams { master_seed: seed, ..Default::default() },
        },
    };
    let base = TrainConfig::desk();
    let train = TrainConfig {
        resolution: a.resolution,
        seed,
        residual_blocks: a.residual_blocks.unwrap_or(base.residual_blocks),
        ..base
    };
    let mut plan = SweepPlan::desk(train, source, domain, a.iterations.clone());
    plan.learning_rates = a.learning_rates.clone();
    plan.batch_sizes = a.batch_sizes.clone();
    plan.val_fraction = a.val_fraction;
    plan.validate()?;
    create_dir(&a.out)?;
    write_text(&a.out.join("plan.json"), serde_json::to_string_pretty(&plan)? + "\n")?;
    let rep = run_sweep(&plan)?;
    write_sweep_csv(&rep, &a.out.join("sweep.csv"))?;
    AnalysisReport::new("sweep", &plan, Vec::new(), &rep)?.write(&a.out.join("sweep.json"))?;
    eprintln!("wrote {} cells to {}", rep.cells.len(), a.out.display());
    Ok(())
}
