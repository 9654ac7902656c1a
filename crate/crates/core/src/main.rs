#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use rubato::cluster::{distance_matrix, hclust, screen_outliers, Linkage, OutlierScreen};
use rubato::error::{Error, Result};
use rubato::estimate::{fit, infer, FitConfig};
use rubato::io::{self, DendrogramDocument, FitDocument, InputFormat, PerformanceRecord, ResultBundle};
use rubato::tempo_model::{simulate, InitBelief};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const USAGE_EXIT: u8 = 2;

#[derive(Parser)]
#[command(name = "rubato", version, about = "Tempo behavior models for recorded performances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to one or more recordings and write a result bundle.
    Fit(FitArgs),
    /// Infer the behavior path and smoothed tempo at a given parameter file.
    Infer(InferArgs),
    /// Simulate a performance of a score at a given parameter file.
    Simulate(SimulateArgs),
    /// Pairwise parameter distances between the recordings of a bundle.
    Distances(DistancesArgs),
    /// Screen outliers and cluster a distance matrix.
    Cluster(ClusterArgs),
    /// Write plot-ready CSVs for every recording of a bundle.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Onsets,
    Tempos,
}

#[derive(Args)]
struct InputArgs {
    /// Input layout; by default `*.onsets.csv` is read as onsets and
    /// anything else as tempos.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, default_value_t = io::DEFAULT_BEATS_PER_MEASURE)]
    beats_per_measure: f64,
}

impl InputArgs {
    fn read(&self, path: &Path) -> Result<PerformanceRecord> {
        let format = match self.format {
            Some(FormatArg::Onsets) => InputFormat::Onsets,
            Some(FormatArg::Tempos) => InputFormat::Tempos,
            None if path.to_string_lossy().ends_with(".onsets.csv") => InputFormat::Onsets,
            None => InputFormat::Tempos,
        };
        io::ingest(path, format, self.beats_per_measure)
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = FitConfig::default().beam_width)]
    beam: usize,
    #[arg(long, default_value_t = FitConfig::default().restarts)]
    restarts: usize,
    #[arg(long, default_value_t = FitConfig::default().max_evals)]
    max_evals: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    input: PathBuf,
    #[arg(long)]
    theta: PathBuf,
    #[command(flatten)]
    input_format: InputArgs,
    #[arg(long, default_value_t = FitConfig::default().beam_width)]
    beam: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    theta: PathBuf,
    #[arg(long)]
    score: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recording id for the output files.
    #[arg(long, default_value = "simulated")]
    id: String,
    /// Mean of the first note's tempo; defaults to μ_tempo.
    #[arg(long)]
    mu1: Option<f64>,
    /// Variance of the first note's tempo; defaults to σ²_tempo.
    #[arg(long)]
    sigma2_1: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DistancesArgs {
    bundle: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    distances: PathBuf,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long, default_value_t = Linkage::default())]
    linkage: Linkage,
    #[arg(long, default_value_t = OutlierScreen::default().k)]
    outlier_k: usize,
    #[arg(long, default_value_t = OutlierScreen::default().threshold)]
    outlier_threshold: f64,
    #[arg(long, default_value_t = OutlierScreen::default().scale)]
    outlier_scale: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    bundle: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let cfg = FitConfig {
        beam_width: a.beam,
        restarts: a.restarts,
        max_evals: a.max_evals,
        seed: a.seed,
        ..FitConfig::default()
    };
    cfg.validate()?;
    let records = a.inputs.iter().map(|p| a.input.read(p)).collect::<Result<Vec<_>>>()?;
    let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(format!("duplicate recording id '{}'", w[0])));
    }
    let started = Instant::now();
    let docs = records
        .par_iter()
        .map(|r| {
            let f = fit(&r.tempos, &r.score, &cfg)?;
            log::info!("{}: objective {}", r.id, f.objective());
            Ok(FitDocument::new(r, &f))
        })
        .collect::<Result<Vec<_>>>()?;
    ResultBundle::new(cfg, docs).write(&a.out_dir)?;
    eprintln!(
        "fit: {} recording(s) in {:.1} s",
        records.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_infer(a: &InferArgs) -> Result<()> {
    let theta = io::read_theta(&a.theta)?;
    let rec = a.input_format.read(&a.input)?;
    let inf = infer(&theta, &rec.tempos, &rec.score, a.beam)?;
    let path = a.out_dir.join(format!("{}.infer.csv", rec.id));
    io::write_atomic(&path, io::inference_csv(&rec, &inf).as_bytes())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let theta = io::read_theta(&a.theta)?;
    let score = io::read_score(&a.score)?;
    let init = InitBelief {
        mu1: a.mu1.unwrap_or(theta.mu_tempo),
        sigma2_1: a.sigma2_1.unwrap_or(theta.sigma2_tempo),
    };
    let sim = simulate(&theta, &score, &init, a.seed)?;
    if let Some(i) = sim.tempos.iter().position(|y| !(*y > 0.0)) {
        return Err(Error::InvalidParameters(format!(
            "simulated tempo at note {} is not positive",
            score[i].index
        )));
    }
    let rec = PerformanceRecord {
        id: a.id.clone(),
        score,
        tempos: sim.tempos.clone(),
        onsets: None,
        loudness: None,
    };
    io::write_atomic(
        &a.out_dir.join(format!("{}.tempos.csv", a.id)),
        io::tempos_csv(&rec).as_bytes(),
    )?;
    io::write_atomic(
        &a.out_dir.join(format!("{}.truth.csv", a.id)),
        io::truth_csv(&rec.score, &sim.nodes, &sim.states).as_bytes(),
    )
}

fn cmd_distances(a: &DistancesArgs) -> Result<()> {
    let bundle = ResultBundle::read(&a.bundle)?;
    let d = distance_matrix(&bundle.labels(), &bundle.thetas()?)?;
    io::write_atomic(&a.out_dir.join("distances.csv"), io::distance_csv(&d).as_bytes())
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    let d = io::read_distance_csv(&a.distances)?;
    let screen = OutlierScreen {
        k: a.outlier_k,
        threshold: a.outlier_threshold,
        scale: a.outlier_scale,
    };
    let s = screen_outliers(&d, &screen)?;
    let kept = d.subset(&s.kept);
    if a.clusters == 0 || a.clusters > kept.len() {
        return Err(Error::InvalidInput(format!(
            "cannot form {} clusters from {} recordings left after screening",
            a.clusters,
            kept.len()
        )));
    }
    let den = hclust(&kept, a.linkage)?;
    let groups = den.cut(a.clusters)?;
    let mut assignment = vec![None; d.len()];
    for (pos, &i) in s.kept.iter().enumerate() {
        assignment[i] = Some(groups[pos]);
    }
    let other = s.removed.iter().map(|&i| d.labels[i].clone()).collect();
    let doc = DendrogramDocument::new(a.linkage, screen, kept.labels.clone(), other, &den);
    io::write_atomic(
        &a.out_dir.join("clusters.csv"),
        io::clusters_csv(&d.labels, &assignment).as_bytes(),
    )?;
    io::write_atomic(&a.out_dir.join("dendrogram.json"), doc.to_json().as_bytes())
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let bundle = ResultBundle::read(&a.bundle)?;
    for f in &bundle.fits {
        io::write_atomic(
            &a.out_dir.join(format!("{}.plot.csv", f.id)),
            io::plot_csv(f).as_bytes(),
        )?;
    }
    Ok(())
}

fn error_line(kind: &str, code: u8, msg: &str) -> String {
    let msg = msg
        .trim()
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', "\\n");
    format!("error: kind={kind} code={code} msg=\"{msg}\"")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("usage error");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", error_line("usage", USAGE_EXIT, first));
            return ExitCode::from(USAGE_EXIT);
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Distances(a) => cmd_distances(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", error_line(e.kind(), code, &e.to_string()));
            ExitCode::from(code)
        }
    }
}
