use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use erank::annotation::{label_record, DEFAULT_ROUGE_THRESHOLD};
use erank::data_model::{validate_dataset, Dataset};
use erank::metrics::{evaluate_many, roc_points, write_eval_csv, EvalOptions, ScoredDataset};
use erank::pipeline::{score_dataset, ClusterSource, Orientation, ScoringConfig};
use erank::sim::{
    lemma_diagnostics, random_state, write_diagnostics_csv, Nonlinearity, PosteriorSpec, ThetaParams, ToyModelSpec,
};
use erank::spectral::DEFAULT_EIGENSCORE_ALPHA;
use erank::synthetic::make_synthetic;
use erank::{Error, Result};

#[derive(Parser)]
#[command(name = "erank", version, about = "Effective-rank hallucination detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with a controllable hallucination signal.
    MakeSynthetic(MakeSyntheticArgs),
    /// Check a dataset's manifest, records and embeddings.
    Validate(ValidateArgs),
    /// Score every record with the selected methods and label it.
    Score(ScoreArgs),
    /// Label primary answers by ROUGE-L against the references.
    Annotate(AnnotateArgs),
    /// AUROC table for one or more scored datasets.
    Eval(EvalArgs),
    /// Monte-Carlo variance decomposition on a toy recurrent model.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct MakeSyntheticArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Number of records (at least 10).
    #[arg(long, default_value_t = 100)]
    records: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 0 makes both classes share one embedding distribution, 1 separates them fully.
    #[arg(long, default_value_t = 0.9)]
    separation: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clusters {
    Ingested,
    ExactMatch,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated methods: er, es, lne, dse, se, or the name of an
    /// imported per-sample score.
    #[arg(long, value_delimiter = ',', default_value = "er,es,lne,dse,se")]
    methods: Vec<String>,
    /// Eigenscore regulariser.
    #[arg(long, default_value_t = DEFAULT_EIGENSCORE_ALPHA)]
    alpha: f64,
    /// Where DSE and SE take clusters from.
    #[arg(long, value_enum, default_value_t = Clusters::Ingested)]
    clusters: Clusters,
    /// ROUGE-L below this marks a hallucination.
    #[arg(long, default_value_t = DEFAULT_ROUGE_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Orientation of an imported score, as NAME:higher or NAME:lower
    /// (which direction means more uncertain). Repeatable.
    #[arg(long = "external")]
    externals: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// ROUGE-L below this marks a hallucination.
    #[arg(long, default_value_t = DEFAULT_ROUGE_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Scored dataset(s); repeat for several, which adds Average rows.
    #[arg(long, required = true)]
    scored: Vec<PathBuf>,
    /// Comma-separated methods; defaults to every method present.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Bootstrap iterations for 95% intervals (at least 100).
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write ROC points (dataset, method, fpr, tpr) here.
    #[arg(long)]
    roc_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Nonlin {
    Linear,
    Tanh,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Nonlin::Tanh)]
    nonlinearity: Nonlin,
    /// Expansion gain on the transition weights.
    #[arg(long, default_value_t = 1.2)]
    gamma: f64,
    /// Isotropic posterior variance of every parameter.
    #[arg(long, default_value_t = 1e-4)]
    tau2: f64,
    /// Standard deviation of the continuous token sample.
    #[arg(long, default_value_t = 0.1)]
    emission_noise: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Hidden dimension.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Token-embedding dimension.
    #[arg(long, default_value_t = 8)]
    token_dim: usize,
    /// Scale of the random initial state (0 starts from the origin).
    #[arg(long, default_value_t = 1.0)]
    h0_scale: f64,
    /// Parameter samples.
    #[arg(long, default_value_t = 100)]
    mtheta: usize,
    /// Trajectories per parameter sample.
    #[arg(long, default_value_t = 100)]
    mtraj: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_external(spec: &str) -> Result<(String, Orientation)> {
    let (name, dir) = spec
        .rsplit_once(':')
        .ok_or_else(|| Error::Domain(format!("--external expects NAME:higher|lower, got {spec:?}")))?;
    let orientation = match dir {
        "higher" => Orientation::HigherIsUncertain,
        "lower" => Orientation::LowerIsUncertain,
        other => return Err(Error::Domain(format!("unknown orientation {other:?}"))),
    };
    Ok((name.to_string(), orientation))
}

fn run_make_synthetic(a: MakeSyntheticArgs) -> Result<()> {
    let path = make_synthetic(&a.out, a.records, a.seed, a.separation)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_validate(a: ValidateArgs) -> Result<()> {
    let report = validate_dataset(&Dataset::open(&a.manifest)?);
    println!("{report}");
    if report.is_valid() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{} failures", report.failure_count())))
    }
}

fn run_score(a: ScoreArgs) -> Result<()> {
    let dataset = Dataset::open(&a.manifest)?;
    let config = ScoringConfig {
        methods: a.methods,
        alpha: a.alpha,
        rouge_threshold: a.threshold,
        cluster_source: match a.clusters {
            Clusters::Ingested => ClusterSource::Ingested,
            Clusters::ExactMatch => ClusterSource::ExactMatch,
        },
        parallelism: a.parallelism,
        externals: a.externals.iter().map(|s| parse_external(s)).collect::<Result<BTreeMap<_, _>>>()?,
    };
    let outcome = score_dataset(&dataset, &config)?;
    for f in &outcome.failures {
        eprintln!("failed: {}: {}", f.record_id, f.message);
    }
    let mut out = create(&a.out)?;
    outcome.scored.write_jsonl(&mut out)?;
    println!(
        "scored {} records ({} failed) -> {}",
        outcome.scored.records.len(),
        outcome.failures.len(),
        a.out.display()
    );
    Ok(())
}

fn run_annotate(a: AnnotateArgs) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold <= 1.0) {
        return Err(Error::Domain(format!("threshold must be in (0, 1], got {}", a.threshold)));
    }
    let records = Dataset::open(&a.manifest)?.read_records()?;
    let mut out = create(&a.out)?;
    let mut positives = 0;
    for r in &records {
        let label = label_record(r, a.threshold);
        positives += usize::from(label.is_hallucination);
        let mut row = serde_json::to_value(label).map_err(|e| Error::Format(e.to_string()))?;
        row["record_id"] = r.record_id.clone().into();
        serde_json::to_writer(&mut out, &row).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    println!("labelled {} records, {positives} hallucinated -> {}", records.len(), a.out.display());
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let datasets = a
        .scored
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            ScoredDataset::read_jsonl(name, BufReader::new(File::open(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let methods: Vec<String> = match a.methods {
        Some(m) => m,
        None => {
            let mut all: Vec<String> = datasets.iter().flat_map(|d| d.method_names()).collect();
            all.sort();
            all.dedup();
            all
        }
    };
    if methods.is_empty() {
        return Err(Error::Domain("no methods to evaluate".into()));
    }
    let options = EvalOptions { bootstrap: a.bootstrap.map(|n| (n, a.seed)) };
    let rows = evaluate_many(&datasets, &methods, options);
    write_eval_csv(&rows, create(&a.out)?)?;

    if let Some(path) = &a.roc_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["dataset", "method", "fpr", "tpr"]).map_err(csv_err)?;
        for d in &datasets {
            let labels = d.labels();
            for m in &methods {
                let Ok(scores) = d.method_scores(m) else { continue };
                let Ok(points) = roc_points(&scores, &labels) else { continue };
                for (fpr, tpr) in points {
                    w.write_record([d.name.clone(), m.clone(), fpr.to_string(), tpr.to_string()])
                        .map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
    }

    let mut failed = 0;
    for r in &rows {
        match (&r.auroc, &r.error) {
            (Some(v), _) => println!("{:<24} {:<8} AUROC {v:.4}", r.dataset, r.method),
            (None, Some(e)) => {
                failed += 1;
                eprintln!("{:<24} {:<8} {e}", r.dataset, r.method);
            }
            (None, None) => {}
        }
    }
    if failed > 0 {
        return Err(Error::Domain(format!("{failed} of {} table rows could not be computed", rows.len())));
    }
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let spec = ToyModelSpec {
        d: a.dim,
        k: a.token_dim,
        nonlinearity: match a.nonlinearity {
            Nonlin::Linear => Nonlinearity::Linear,
            Nonlin::Tanh => Nonlinearity::Tanh,
        },
        gamma: a.gamma,
        emission_noise: a.emission_noise,
    };
    spec.validate()?;
    let posterior = PosteriorSpec { theta_mean: ThetaParams::random(&spec, a.seed), tau2: a.tau2 };
    let h0 = random_state(spec.d, a.h0_scale, a.seed);
    let diag = lemma_diagnostics(&spec, &posterior, &h0, a.steps, a.mtheta, a.mtraj, a.seed)?;
    let nl = match spec.nonlinearity {
        Nonlinearity::Linear => "linear",
        Nonlinearity::Tanh => "tanh",
    };
    let header = [
        ("nonlinearity", nl.to_string()),
        ("gamma", a.gamma.to_string()),
        ("tau2", a.tau2.to_string()),
        ("emission_noise", a.emission_noise.to_string()),
        ("steps", a.steps.to_string()),
        ("dim", a.dim.to_string()),
        ("token_dim", a.token_dim.to_string()),
        ("h0_scale", a.h0_scale.to_string()),
        ("mtheta", a.mtheta.to_string()),
        ("mtraj", a.mtraj.to_string()),
        ("seed", a.seed.to_string()),
        ("param_count", diag.param_count.to_string()),
        ("sensitivity_coords", diag.sensitivity_coords.to_string()),
    ];
    let mut out = create(&a.out)?;
    write_diagnostics_csv(&diag, &header, &mut out)?;
    out.flush()?;
    println!("wrote {} steps -> {}", diag.steps.len(), a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MakeSynthetic(a) => run_make_synthetic(a),
        Command::Validate(a) => run_validate(a),
        Command::Score(a) => run_score(a),
        Command::Annotate(a) => run_annotate(a),
        Command::Eval(a) => run_eval(a),
        Command::Simulate(a) => run_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
