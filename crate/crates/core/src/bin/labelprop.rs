use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use labelprop::dirichlet::SolverConfig;
use labelprop::fusion::{evaluate, majority_vote};
use labelprop::nifti::{self, Datatype};
use labelprop::phantom::{make_phantom, PhantomSpec};
use labelprop::propagation::{
    propagate, propagate_bilateral, PropagationError, PropagationRequest, SeedlessPolicy, DEFAULT_BETA,
};
use labelprop::volume::LabelSet;
use log::info;

/// Random-walker label propagation for noisy multi-label 3D annotations.
#[derive(Debug, Parser)]
#[command(name = "labelprop", version)]
struct Cli {
    /// Worker threads for per-label solves (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Propagate seed annotations through the roi.
    Propagate(PropagateArgs),
    /// Majority-vote fusion of label volumes.
    Fuse(FuseArgs),
    /// Per-class and volume-weighted Dice of a prediction.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic blob phantom.
    Phantom(PhantomArgs),
    /// Print a volume's header summary.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
struct PropagateArgs {
    #[arg(long)]
    guidance: PathBuf,
    #[arg(long)]
    roi: PathBuf,
    /// Label set file, one `id<TAB>name` per line.
    #[arg(long)]
    labels: PathBuf,
    /// One mask per label, in label-set order.
    #[arg(long, num_args = 1.., required = true)]
    annotation: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SeedlessPolicy::NearestSeed)]
    policy: SeedlessPolicy,
    /// Relative residual tolerance of the linear solves.
    #[arg(long, default_value_t = SolverConfig::default().rel_tol)]
    tol: f64,
    /// Also write one probability volume per label.
    #[arg(long)]
    soft: bool,
    /// Left and right hemisphere masks; each is propagated separately.
    #[arg(long, num_args = 2, value_names = ["LEFT", "RIGHT"])]
    hemispheres: Option<Vec<PathBuf>>,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    roi: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    roi: PathBuf,
    /// Annotation masks; voxels with more than one label are excluded.
    #[arg(long, num_args = 1..)]
    annotation: Vec<PathBuf>,
    /// Text report path; the JSON report goes next to it with a `.json`
    /// extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    /// JSON phantom spec (default: the built-in 13-blob phantom).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InfoArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) => m,
        }
    }
}

fn invalid(e: impl Display) -> Failure {
    Failure::Validation(e.to_string())
}

impl From<PropagationError> for Failure {
    fn from(e: PropagationError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("ignoring --threads: {e}");
        }
    }
    let result = match cli.command {
        Command::Propagate(a) => cmd_propagate(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Phantom(a) => cmd_phantom(a),
        Command::Info(a) => cmd_info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Outcome {
    for p in paths {
        if !p.is_file() {
            return Err(Failure::Validation(format!("{}: no such file", p.display())));
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Validation(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn cmd_propagate(a: PropagateArgs) -> Outcome {
    let mut inputs = vec![&a.guidance, &a.roi, &a.labels];
    inputs.extend(&a.annotation);
    inputs.extend(a.hemispheres.iter().flatten());
    require_inputs(inputs)?;
    create_dir(&a.out)?;

    let labels = LabelSet::from_file(&a.labels).map_err(invalid)?;
    let guidance = nifti::read_intensity(&a.guidance).map_err(invalid)?;
    let roi = nifti::read_mask(&a.roi).map_err(invalid)?;
    nifti::warn_if_grids_differ(guidance.geometry(), roi.geometry(), &a.roi);
    let annotation = nifti::read_annotation(&a.annotation, &labels).map_err(invalid)?;
    let solver = SolverConfig { rel_tol: a.tol, ..SolverConfig::default() };
    let req = PropagationRequest::new(&guidance, &roi, &annotation).beta(a.beta).policy(a.policy).solver(solver);

    let result = match &a.hemispheres {
        Some(h) => {
            let left = nifti::read_mask(&h[0]).map_err(invalid)?;
            let right = nifti::read_mask(&h[1]).map_err(invalid)?;
            propagate_bilateral(&req, (&left, &right))?
        }
        None => propagate(&req)?,
    };

    nifti::write_volume(&result.hard, a.out.join("hard.nii")).map_err(invalid)?;
    if a.soft {
        for (i, e) in labels.entries().iter().enumerate() {
            let path = a.out.join(format!("prob_{}.nii", e.name));
            nifti::write_volume(&result.soft.channel_volume(i), path).map_err(invalid)?;
        }
    }
    let json = serde_json::to_string_pretty(&result.report).map_err(invalid)?;
    write_text(&a.out.join("report.json"), &json)?;
    info!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_fuse(a: FuseArgs) -> Outcome {
    require_inputs(a.inputs.iter().chain([&a.roi]))?;
    let maps = a.inputs.iter().map(nifti::read_labels).collect::<Result<Vec<_>, _>>().map_err(invalid)?;
    let roi = nifti::read_mask(&a.roi).map_err(invalid)?;
    let fused = majority_vote(&maps, &roi).map_err(invalid)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    nifti::write_volume(&fused, &a.out).map_err(invalid)
}

fn cmd_evaluate(a: EvaluateArgs) -> Outcome {
    require_inputs([&a.pred, &a.target, &a.labels, &a.roi].into_iter().chain(&a.annotation))?;
    let labels = LabelSet::from_file(&a.labels).map_err(invalid)?;
    let pred = nifti::read_labels(&a.pred).map_err(invalid)?;
    let target = nifti::read_labels(&a.target).map_err(invalid)?;
    let roi = nifti::read_mask(&a.roi).map_err(invalid)?;
    let annotation = if a.annotation.is_empty() {
        None
    } else {
        Some(nifti::read_annotation(&a.annotation, &labels).map_err(invalid)?)
    };
    let report = evaluate(&pred, &target, &labels, &roi, annotation.as_ref()).map_err(invalid)?;

    let (text_path, json_path) = if a.out.extension().is_some_and(|e| e == "json") {
        (a.out.with_extension("txt"), a.out.clone())
    } else {
        (a.out.clone(), a.out.with_extension("json"))
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(&text_path, &report.to_text())?;
    write_text(&json_path, &report.to_json())?;
    println!("overall\t{:.6}", report.overall);
    Ok(())
}

fn cmd_phantom(a: PhantomArgs) -> Outcome {
    let mut spec = match &a.spec {
        Some(p) => {
            require_inputs([p])?;
            PhantomSpec::from_file(p).map_err(invalid)?
        }
        None => PhantomSpec::thalamus_13(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let ph = make_phantom(&spec).map_err(invalid)?;
    create_dir(&a.out)?;
    nifti::write_volume(&ph.guidance, a.out.join("guidance.nii")).map_err(invalid)?;
    nifti::write_volume(&ph.roi, a.out.join("roi.nii")).map_err(invalid)?;
    nifti::write_volume(&ph.truth, a.out.join("truth.nii")).map_err(invalid)?;
    for (e, mask) in ph.labels().entries().iter().zip(ph.annotation.to_mask_volumes()) {
        nifti::write_volume(&mask, a.out.join(format!("annotation_{}.nii", e.name))).map_err(invalid)?;
    }
    write_text(&a.out.join("labels.tsv"), &ph.labels().to_text())?;
    write_text(&a.out.join("spec.json"), &spec.to_json())?;
    Ok(())
}

fn cmd_info(a: InfoArgs) -> Outcome {
    let raw = nifti::read_raw(&a.input).map_err(invalid)?;
    let g = raw.geometry;
    let dt = raw.header.datatype().expect("validated datatype");
    let (lo, hi) = raw.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!("file\t{}", a.input.display());
    println!("dims\t{:?}", g.dims());
    println!("spacing\t{:?}", g.spacing());
    println!("datatype\t{}", dt.name());
    println!("range\t{lo}\t{hi}");
    if matches!(dt, Datatype::Uint8 | Datatype::Uint16) {
        let mut hist: BTreeMap<u64, usize> = BTreeMap::new();
        for &v in &raw.values {
            *hist.entry(v as u64).or_default() += 1;
        }
        println!("histogram");
        for (id, n) in hist {
            println!("{id}\t{n}");
        }
    }
    Ok(())
}
