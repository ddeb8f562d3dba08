use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use gestalt_core::dots::DetectorMode;
use gestalt_core::format::{self, PatternFile};
use gestalt_core::geometry::Domain;
use gestalt_core::harness::{self, H0Detector};
use gestalt_core::masking::Filter;
use gestalt_core::pipeline::{detections_json, run_dots, run_gabor, DetectOptions};
use gestalt_core::stimulus::{self, DotRecipe, StimulusSpec};

/// A-contrario alignment detection for dot patterns and oriented-element
/// fields.
#[derive(Parser)]
#[command(name = "gestalt", version)]
struct Cli {
    /// Worker threads for detection (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dot scene.
    GenDots(GenDots),
    /// Generate an oriented-element stimulus or a balanced dataset manifest.
    GenGabor(GenGabor),
    /// Detect dot alignments.
    DetectDots(DetectDots),
    /// Detect alignments of oriented elements.
    DetectGabor(DetectGabor),
    /// Detect and resolve redundancy (masking by default).
    Mask(Mask),
    /// Monte Carlo check of the false-alarm bound on background samples.
    ValidateH0(ValidateH0),
    /// Run a detector over a stimulus manifest and write rate tables.
    Experiment(Experiment),
    /// Run the reference masking scenes.
    Figures(Figures),
}

#[derive(Clone, Copy, ValueEnum)]
enum RecipeName {
    Noise,
    Planted,
    Clusters,
    Grid,
    DensityStep,
}

#[derive(Args)]
struct GenDots {
    #[arg(long, value_enum, default_value = "noise")]
    recipe: RecipeName,
    #[arg(long, default_value_t = 512.0)]
    width: f64,
    #[arg(long, default_value_t = 512.0)]
    height: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dots for `noise`.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Dots per planted run.
    #[arg(long, default_value_t = 7)]
    k: usize,
    /// Uniform noise dots added by `planted` and `clusters`.
    #[arg(long, default_value_t = 20)]
    noise: usize,
    /// Distance between planted dots, or lattice step for `grid`.
    #[arg(long, default_value_t = 20.0)]
    spacing: f64,
    #[arg(long, default_value_t = 1)]
    lines: usize,
    #[arg(long, default_value_t = 2)]
    clusters: usize,
    /// Dots per cluster.
    #[arg(long, default_value_t = 10)]
    size: usize,
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    #[arg(long, default_value_t = 10)]
    rows: usize,
    #[arg(long, default_value_t = 10)]
    cols: usize,
    #[arg(long, default_value_t = 250)]
    dense: usize,
    #[arg(long, default_value_t = 40)]
    sparse: usize,
    /// Side fraction covered by the dense block.
    #[arg(long, default_value_t = 0.5)]
    block: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Negative,
    Positive,
}

#[derive(Args)]
struct GenGabor {
    #[arg(long, value_enum, default_value = "positive")]
    kind: Kind,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 496.0)]
    width: f64,
    #[arg(long, default_value_t = 496.0)]
    height: f64,
    /// Planted elements.
    #[arg(long, default_value_t = 10)]
    length: usize,
    /// Orientation interval of planted elements, radians.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long)]
    min_spacing: Option<f64>,
    /// Distance between planted elements.
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a manifest covering every jitter level and length with this
    /// many stimuli per cell instead of a single stimulus.
    #[arg(long)]
    per_cell: Option<usize>,
    /// Negative stimuli appended to the manifest.
    #[arg(long, default_value_t = 0)]
    negatives: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Input {
    /// Pattern file (JSON or CSV); `-` reads standard input.
    input: PathBuf,
    /// Treat the input as CSV rows `x,y[,theta]`.
    #[arg(long)]
    csv: bool,
    /// Domain for CSV input as `WIDTHxHEIGHT`; defaults to the bounding box.
    #[arg(long, value_parser = parse_domain)]
    domain: Option<Domain>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Basic,
    Refined,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    None,
    Exclusion,
    Masking,
}

impl From<ModeArg> for DetectorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Basic => DetectorMode::Basic,
            ModeArg::Refined => DetectorMode::Refined,
        }
    }
}

impl From<FilterArg> for Filter {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::None => Filter::None,
            FilterArg::Exclusion => Filter::Exclusion,
            FilterArg::Masking => Filter::Masking,
        }
    }
}

#[derive(Args)]
struct DetectDots {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value = "refined")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "none")]
    filter: FilterArg,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Flank band width relative to the rectangle width.
    #[arg(long)]
    band_factor: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectGabor {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value = "none")]
    filter: FilterArg,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Rectangle width; defaults to domain width / sqrt(N).
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Mask {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value = "masking")]
    filter: FilterArg,
    /// Dot detector; oriented elements always use the orientation test.
    #[arg(long, value_enum, default_value = "refined")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    band_factor: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Basic,
    Refined,
    Gabor,
}

#[derive(Args)]
struct ValidateH0 {
    #[arg(long, value_enum)]
    detector: DetectorArg,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Experiment {
    /// Manifest with one stimulus record per line.
    manifest: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long)]
    width: Option<f64>,
    /// Output directory for CSV tables and the JSON report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Figures {
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_domain(s: &str) -> Result<Domain, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s}"))?;
    let w: f64 = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h: f64 = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    Ok(Domain::new(w, h))
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Invalid input or arguments: exit 2.
    Invalid(anyhow::Error),
    /// The run completed but a check failed: exit 1.
    Check(String),
    /// Anything else: exit 1.
    Other(anyhow::Error),
}

impl From<gestalt_core::Error> for Failure {
    fn from(e: gestalt_core::Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.into())
        } else {
            Failure::Other(e.into())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

type Outcome = Result<(), Failure>;

fn read_input(path: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Failure::Invalid(anyhow::anyhow!("stdin: {e}")))?;
    } else {
        text = fs::read_to_string(path)
            .map_err(|e| Failure::Invalid(anyhow::anyhow!("{}: {e}", path.display())))?;
    }
    Ok(text)
}

fn load_pattern(input: &Input) -> Result<PatternFile, Failure> {
    let text = read_input(&input.input)?;
    let is_csv = input.csv
        || input
            .input
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    Ok(if is_csv {
        format::parse_csv(&text, input.domain)?
    } else {
        format::parse_pattern(&text)?
    })
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("writing standard output"),
    }
}

fn gen_dots(args: GenDots) -> Outcome {
    let recipe = match args.recipe {
        RecipeName::Noise => DotRecipe::Noise { n: args.n },
        RecipeName::Planted => DotRecipe::Planted {
            k: args.k,
            noise: args.noise,
            spacing: args.spacing,
            lines: args.lines,
        },
        RecipeName::Clusters => DotRecipe::Clusters {
            clusters: args.clusters,
            size: args.size,
            sigma: args.sigma,
            noise: args.noise,
        },
        RecipeName::Grid => DotRecipe::Grid {
            rows: args.rows,
            cols: args.cols,
            spacing: args.spacing,
        },
        RecipeName::DensityStep => DotRecipe::DensityStep {
            dense: args.dense,
            sparse: args.sparse,
            block: args.block,
        },
    };
    let scene = stimulus::gen_dot_scene(Domain::new(args.width, args.height), &recipe, args.seed)?;
    let mut text = format::dots_json(&scene.pattern);
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(())
}

fn gen_gabor(args: GenGabor) -> Outcome {
    let domain = Domain::new(args.width, args.height);
    let with_overrides = |mut spec: StimulusSpec| {
        spec.min_spacing = args.min_spacing;
        spec.spacing = args.spacing;
        spec
    };
    if let Some(per_cell) = args.per_cell {
        let mut specs: Vec<StimulusSpec> = stimulus::balanced_grid(args.n, domain, per_cell, args.seed)
            .into_iter()
            .map(with_overrides)
            .collect();
        let offset = specs.len() as u64;
        specs.extend((0..args.negatives as u64).map(|i| {
            with_overrides(StimulusSpec::negative(
                args.n,
                domain,
                stimulus::derive_seed(args.seed, offset + i),
            ))
        }));
        let records = specs
            .iter()
            .map(stimulus::generate)
            .collect::<gestalt_core::Result<Vec<_>>>()?;
        emit(args.out.as_deref(), &format::write_manifest(&records))?;
        return Ok(());
    }
    let spec = with_overrides(match args.kind {
        Kind::Negative => StimulusSpec::negative(args.n, domain, args.seed),
        Kind::Positive => StimulusSpec::positive(args.n, domain, args.length, args.jitter, args.seed),
    });
    let record = stimulus::generate(&spec)?;
    let mut text = format::record_json(&record);
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(())
}

fn detect(
    pattern: &PatternFile,
    gabor: bool,
    options: &DetectOptions,
    out: Option<&Path>,
) -> Outcome {
    let list = match (pattern, gabor) {
        (PatternFile::Elements { field, .. }, true) => run_gabor(field, options)?.to_json(field),
        (PatternFile::Dots(_), true) => {
            return Err(Failure::Invalid(anyhow::anyhow!(
                "elements: expected oriented elements"
            )))
        }
        (p, false) => {
            let dots = p.to_dots();
            run_dots(&dots, options)?.to_json(&dots)
        }
    };
    emit(out, &detections_json(&list))?;
    Ok(())
}

fn h0(args: ValidateH0) -> Outcome {
    let detector = match args.detector {
        DetectorArg::Basic => H0Detector::Basic,
        DetectorArg::Refined => H0Detector::Refined,
        DetectorArg::Gabor => H0Detector::Gabor,
    };
    let summary = harness::h0_montecarlo(detector, args.n, args.trials, args.epsilon, args.seed, None)?;
    println!("{}", summary.line());
    if let Some(path) = &args.out {
        emit(Some(path), &format::to_json(&summary))?;
    }
    if summary.pass {
        Ok(())
    } else {
        Err(Failure::Check("false-alarm bound exceeded".into()))
    }
}

fn experiment(args: Experiment) -> Outcome {
    let text = read_input(&args.manifest)?;
    let manifest = format::read_manifest(&text);
    for (line, reason) in &manifest.skipped {
        eprintln!("skipped line {line}: {reason}");
    }
    let options = DetectOptions {
        epsilon: args.epsilon,
        width: args.width,
        ..DetectOptions::default()
    };
    options.validate()?;
    let report = harness::run_dataset(
        &manifest.records,
        &options.gabor_config(),
        args.epsilon,
        manifest.skipped.len(),
    )?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let files = [
        ("trials.csv", harness::trials_csv(&report.trials)),
        ("curve.csv", report.curve.to_csv()),
        ("by_jitter.csv", harness::rates_csv(&report.by_jitter)),
        ("by_length.csv", harness::rates_csv(&report.by_length)),
        ("by_cell.csv", harness::rates_csv(&report.by_cell)),
        ("report.json", format::to_json(&report)),
    ];
    for (name, body) in files {
        emit(Some(&args.out.join(name)), &body)?;
    }
    println!(
        "{} stimuli, {} skipped rows, {} trend violations",
        report.trials.len(),
        report.skipped_rows,
        report.trend_violations.len()
    );
    Ok(())
}

fn figures(args: Figures) -> Outcome {
    let report = harness::figure_suite(args.seed, args.seeds)?;
    for s in &report.scenarios {
        let metrics: Vec<String> = s.metrics.iter().map(|(k, v)| format!("{k}={v:.3}")).collect();
        println!(
            "{} {}: {} ({})",
            if s.passed { "PASS" } else { "FAIL" },
            s.name,
            s.detail,
            metrics.join(" ")
        );
    }
    if let Some(path) = &args.out {
        emit(Some(path), &format::to_json(&report))?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check("reference scenes failed".into()))
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::GenDots(a) => gen_dots(a),
        Command::GenGabor(a) => gen_gabor(a),
        Command::DetectDots(a) => {
            let options = DetectOptions {
                mode: a.mode.into(),
                filter: a.filter.into(),
                epsilon: a.epsilon,
                band_factor: a.band_factor,
                width: None,
            };
            detect(&load_pattern(&a.input)?, false, &options, a.out.as_deref())
        }
        Command::DetectGabor(a) => {
            let options = DetectOptions {
                filter: a.filter.into(),
                epsilon: a.epsilon,
                width: a.width,
                ..DetectOptions::default()
            };
            detect(&load_pattern(&a.input)?, true, &options, a.out.as_deref())
        }
        Command::Mask(a) => {
            let pattern = load_pattern(&a.input)?;
            let options = DetectOptions {
                mode: a.mode.into(),
                filter: a.filter.into(),
                epsilon: a.epsilon,
                width: a.width,
                band_factor: a.band_factor,
            };
            let gabor = matches!(pattern, PatternFile::Elements { .. });
            detect(&pattern, gabor, &options, a.out.as_deref())
        }
        Command::ValidateH0(a) => h0(a),
        Command::Experiment(a) => experiment(a),
        Command::Figures(a) => figures(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
