//! Command-line pipeline: fit models to history files, simulate study
//! replicates, score fits against simulation truth, and check convergence.
//!
//! Every command that writes files also writes a `manifest.json` recording
//! the invocation, resolved configuration, seed, software version, and
//! SHA-256 digests of the inputs; re-running the recorded command reproduces
//! the output files byte for byte. All randomness derives from the single
//! `--seed` through per-chain and per-replicate RNG streams, and all file
//! writes happen on the coordinating thread.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use dualmark::baselines::{collapse_one_sided, combinable_parameters, combine_fits, fit_one_sided};
use dualmark::diagnostics::summarize;
use dualmark::io::{
    read_chain_csv, read_history_file, read_summary_csv, read_truth_csv, parse_scenario_config,
    write_chain_csv, write_history_file, write_score_csv, write_summary_csv, write_truth_csv,
};
use dualmark::model::EventLayer;
use dualmark::sampler::run_chains;
use dualmark::simulator::simulate_dataset;
use dualmark::{
    Chain, Model, PosteriorSummary, ReplicateTruth, SamplerConfig, Side, SimScenario,
};

#[derive(Parser)]
#[command(name = "dualmark", version, about = "Open-population mark-recapture with two unlinkable photo marks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model to a history file, writing chain CSVs, summary.csv, and manifest.json.
    Fit(FitArgs),
    /// Simulate study replicates from a scenario config, one history and truth file each.
    Simulate(SimulateArgs),
    /// Score fitted summaries against simulation truth across replicates.
    Score(ScoreArgs),
    /// Report convergence diagnostics for the chain CSVs of one fit.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    /// Joint model of both photo sides with latent history matching.
    TwoSided,
    /// Collapse to left-side captures and fit the single-mark model.
    OneSidedLeft,
    /// Collapse to right-side captures and fit the single-mark model.
    OneSidedRight,
    /// Fit both collapsed sides and pool draws by inverse-variance weighting.
    Combined,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::TwoSided => "two-sided",
            ModelKind::OneSidedLeft => "one-sided-left",
            ModelKind::OneSidedRight => "one-sided-right",
            ModelKind::Combined => "combined",
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// History file, one `<history>[,<count>]` record per line.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Occasions expected in the data; errors if the file disagrees.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 3)]
    chains: usize,
    #[arg(long, default_value_t = 10_000)]
    burnin: usize,
    #[arg(long, default_value_t = 50_000)]
    iters: usize,
    /// Keep every k-th sweep after burn-in.
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Root seed; chains draw from RNG streams derived from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config, `key = value` lines.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    /// Root seed; replicate r draws from RNG stream r.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Directory of rep_NNN.truth.csv files.
    #[arg(long)]
    truth_dir: PathBuf,
    /// Directory of fitted summaries, either rep_NNN.summary.csv files or
    /// rep_NNN/summary.csv subdirectories.
    #[arg(long)]
    summary_dir: PathBuf,
    /// Summaries of a reference model in the same layout; adds the relative
    /// MSE column.
    #[arg(long)]
    reference_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Chain CSVs from one fit; two or more enable the scale-reduction check.
    #[arg(required = true)]
    chains: Vec<PathBuf>,
    /// Largest acceptable potential scale reduction factor.
    #[arg(long, default_value_t = 1.02)]
    psrf_max: f64,
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    argv: Vec<String>,
    config: serde_json::Value,
    seed: Option<u64>,
    version: &'static str,
    inputs: Vec<FileDigest>,
    started: String,
    finished: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {} for digest", path.display()))?;
    let sha256 = Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256,
    })
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

fn cmd_fit(args: &FitArgs, argv: &[String]) -> Result<()> {
    let started = now();
    let data = read_history_file(&args.data)?;
    if let Some(t) = args.t {
        if t != data.t() {
            bail!("history file has T = {}, config expects T = {t}", data.t());
        }
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut cfg = SamplerConfig::new(args.seed);
    cfg.n_chains = args.chains;
    cfg.burn_in = args.burnin;
    cfg.n_iterations = args.iters;
    cfg.thin = args.thin;

    let records = || data.histories().iter().zip(data.counts().iter().copied());
    let chains: Vec<Chain> = match args.model {
        ModelKind::TwoSided => {
            let model: Model = Model::new(data.clone(), EventLayer::TwoSided)?;
            run_chains(&model, &cfg)?
        }
        ModelKind::OneSidedLeft => {
            fit_one_sided(&collapse_one_sided(records(), Side::Left)?, &cfg)?
        }
        ModelKind::OneSidedRight => {
            fit_one_sided(&collapse_one_sided(records(), Side::Right)?, &cfg)?
        }
        ModelKind::Combined => {
            let left = collapse_one_sided(records(), Side::Left)?;
            let right = collapse_one_sided(records(), Side::Right)?;
            // the sides share the seed but draw from disjoint stream ranges
            let mut cfg_right = cfg.clone();
            cfg_right.stream_base = args.chains as u64;
            let left_chains: Vec<Chain> = fit_one_sided(&left, &cfg)?;
            let right_chains: Vec<Chain> = fit_one_sided(&right, &cfg_right)?;
            let params = combinable_parameters(left_chains[0].names());
            combine_fits(&left_chains, &right_chains, &params)?
        }
    };

    for (i, chain) in chains.iter().enumerate() {
        write_chain_csv(args.out.join(format!("chain_{}.csv", i + 1)), chain)?;
    }
    write_summary_csv(args.out.join("summary.csv"), &summarize(&chains)?)?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "fit",
            argv: argv.to_vec(),
            config: serde_json::json!({
                "data": args.data.display().to_string(),
                "model": args.model.name(),
                "t": args.t,
                "chains": args.chains,
                "burnin": args.burnin,
                "iters": args.iters,
                "thin": args.thin,
                "seed": args.seed,
                "out": args.out.display().to_string(),
            }),
            seed: Some(args.seed),
            version: env!("CARGO_PKG_VERSION"),
            inputs: vec![digest(&args.data)?],
            started,
            finished: now(),
        },
    )?;
    println!(
        "wrote {} chain files, summary.csv, manifest.json to {}",
        chains.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, argv: &[String]) -> Result<()> {
    let started = now();
    let scenario: SimScenario = parse_scenario_config(&args.scenario)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for rep in 0..args.replicates {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(rep);
        let sim = simulate_dataset(&scenario, &mut rng)?;
        write_history_file(args.out.join(format!("rep_{rep:03}.hist")), &sim.observed)?;
        write_truth_csv(
            args.out.join(format!("rep_{rep:03}.truth.csv")),
            &ReplicateTruth::from_theta(&sim.theta),
        )?;
    }
    write_manifest(
        &args.out,
        &RunManifest {
            command: "simulate",
            argv: argv.to_vec(),
            config: serde_json::json!({
                "scenario": args.scenario.display().to_string(),
                "t": scenario.t,
                "target_observed": scenario.target_observed,
                "rho": scenario.rho,
                "phi_loc": scenario.phi.0,
                "phi_scale": scenario.phi.1,
                "p_loc": scenario.p.0,
                "p_scale": scenario.p.1,
                "gamma_loc": scenario.gamma.0,
                "gamma_scale": scenario.gamma.1,
                "replicates": args.replicates,
                "seed": args.seed,
                "out": args.out.display().to_string(),
            }),
            seed: Some(args.seed),
            version: env!("CARGO_PKG_VERSION"),
            inputs: vec![digest(&args.scenario)?],
            started,
            finished: now(),
        },
    )?;
    println!(
        "wrote {} replicates (history + truth) to {}",
        args.replicates,
        args.out.display()
    );
    Ok(())
}

/// Map replicate IDs to files in a directory: `rep_<id><suffix>` entries,
/// plus `rep_<id>/<nested>` when a nested file name applies.
fn scan_replicates(
    dir: &Path,
    suffix: &str,
    nested: Option<&str>,
) -> Result<BTreeMap<u64, PathBuf>> {
    let entries =
        std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut map = BTreeMap::new();
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(rest) = name.strip_prefix("rep_") else {
            continue;
        };
        if let Some(id) = rest.strip_suffix(suffix).and_then(|s| s.parse().ok()) {
            map.insert(id, entry.path());
        } else if let (Some(nested), Ok(id)) = (nested, rest.parse()) {
            let inner = entry.path().join(nested);
            if inner.is_file() {
                map.insert(id, inner);
            }
        }
    }
    if map.is_empty() {
        bail!("no replicate files found in {}", dir.display());
    }
    Ok(map)
}

fn require_same_ids(
    truths: &BTreeMap<u64, PathBuf>,
    others: &BTreeMap<u64, PathBuf>,
    what: &str,
) -> Result<()> {
    let missing: Vec<u64> = truths.keys().filter(|k| !others.contains_key(k)).copied().collect();
    let extra: Vec<u64> = others.keys().filter(|k| !truths.contains_key(k)).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        bail!("replicate mismatch against {what}: truth IDs without {what} {missing:?}, {what} IDs without truth {extra:?}");
    }
    Ok(())
}

fn cmd_score(args: &ScoreArgs, argv: &[String]) -> Result<()> {
    let started = now();
    let truths = scan_replicates(&args.truth_dir, ".truth.csv", None)?;
    let summaries = scan_replicates(&args.summary_dir, ".summary.csv", Some("summary.csv"))?;
    require_same_ids(&truths, &summaries, "summaries")?;

    let mut truth_values: BTreeMap<u64, ReplicateTruth> = BTreeMap::new();
    let mut reps: Vec<(ReplicateTruth, PosteriorSummary)> = Vec::new();
    for (&id, path) in &truths {
        let truth = read_truth_csv(path)?;
        truth_values.insert(id, truth.clone());
        reps.push((truth, read_summary_csv(&summaries[&id])?));
    }
    let score = dualmark::diagnostics::score_study(&reps)?;

    let mut inputs: Vec<PathBuf> =
        truths.values().chain(summaries.values()).cloned().collect();
    let relative = match &args.reference_dir {
        Some(dir) => {
            let refs = scan_replicates(dir, ".summary.csv", Some("summary.csv"))?;
            require_same_ids(&truths, &refs, "reference summaries")?;
            let mut ref_reps: Vec<(ReplicateTruth, PosteriorSummary)> = Vec::new();
            for (&id, path) in &refs {
                ref_reps.push((truth_values[&id].clone(), read_summary_csv(path)?));
            }
            inputs.extend(refs.values().cloned());
            Some(score.relative_mse(&dualmark::diagnostics::score_study(&ref_reps)?))
        }
        None => None,
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_score_csv(args.out.join("score.csv"), &score, relative)?;
    write_manifest(
        &args.out,
        &RunManifest {
            command: "score",
            argv: argv.to_vec(),
            config: serde_json::json!({
                "truth_dir": args.truth_dir.display().to_string(),
                "summary_dir": args.summary_dir.display().to_string(),
                "reference_dir": args.reference_dir.as_ref().map(|d| d.display().to_string()),
                "replicates": truths.len(),
                "out": args.out.display().to_string(),
            }),
            seed: None,
            version: env!("CARGO_PKG_VERSION"),
            inputs: inputs
                .iter()
                .map(|p| digest(p))
                .collect::<Result<Vec<_>>>()?,
            started,
            finished: now(),
        },
    )?;
    println!(
        "wrote score.csv over {} replicates to {}",
        truths.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let mut chains: Vec<Chain> = Vec::new();
    for path in &args.chains {
        chains.push(read_chain_csv(path)?);
    }
    let summary = summarize(&chains)?;
    if chains.len() < 2 {
        eprintln!(
            "warning: the scale-reduction diagnostic needs at least two chains; \
             reporting Monte Carlo error only"
        );
        println!("parameter,mcse,ess");
        for p in summary.params() {
            println!("{},{},{}", p.name, p.mcse, p.ess);
        }
        return Ok(());
    }
    println!("parameter,psrf,psrf_degenerate,mcse,ess");
    for p in summary.params() {
        println!(
            "{},{},{},{},{}",
            p.name, p.psrf, p.psrf_degenerate, p.mcse, p.ess
        );
    }
    let offenders: Vec<String> = summary
        .params()
        .iter()
        .filter(|p| !p.psrf_degenerate && p.psrf > args.psrf_max)
        .map(|p| format!("{} ({:.4})", p.name, p.psrf))
        .collect();
    if !offenders.is_empty() {
        bail!(
            "potential scale reduction above {}: {}",
            args.psrf_max,
            offenders.join(", ")
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Fit(a) => cmd_fit(a, &argv),
        Cmd::Simulate(a) => cmd_simulate(a, &argv),
        Cmd::Score(a) => cmd_score(a, &argv),
        Cmd::Diagnose(a) => cmd_diagnose(a),
    }
}
