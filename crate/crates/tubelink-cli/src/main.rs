//! Command-line front end wiring ingest, scoring, linking and evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or validation error,
//! 3 internal invariant violation.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use config::RunConfig;
use tubelink::eval::{
    confusion_matrix, corpus_metrics, integrated_scores, metric_curves, no_localisation_metrics,
    per_class_metrics, EvalThresholds, IntegratedScores, MatchReport, SweepAxis, VideoSet,
};
use tubelink::io::{self, ClassVocabulary};
use tubelink::linker::link_video;
use tubelink::scoring::{fuse_features, linear_score, FeatureVector};
use tubelink::synthetic::{generate_scenario, ScenarioSpec};
use tubelink::types::{ActionTube, RegionProposal, VideoProposals};
use tubelink::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tubelink",
    version,
    about = "Link scored region proposals into action tubes and evaluate them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Pairwise overlap weight in the path objective.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// Label-change cost in the temporal labelling pass.
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Minimum tube duration in frames.
    #[arg(long, global = true)]
    delta: Option<usize>,

    /// Divisor applied to per-class mean areas in the area filter.
    #[arg(long, global = true)]
    tau: Option<f64>,

    /// Maximum number of paths extracted per class.
    #[arg(long, global = true)]
    max_paths: Option<usize>,

    /// Per-class non-maximum suppression overlap threshold.
    #[arg(long, global = true)]
    nms_iou: Option<f64>,

    /// Minimum actionness ratio kept when flow maps are supplied.
    #[arg(long, global = true)]
    actionness_threshold: Option<f64>,

    /// Pinned value of the non-swept thresholds during integration.
    #[arg(long, global = true)]
    eta: Option<f64>,

    /// Threshold sweep resolution; must divide 1 evenly.
    #[arg(long, global = true)]
    grid_step: Option<f64>,

    /// Worker threads for multi-video commands; 0 uses all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed override for scenario generation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Increase log verbosity (-v, -vv).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Link proposals into scored, filtered action tubes.
    Link {
        /// Proposals file, or a directory of per-video `.jsonl` files.
        proposals: PathBuf,
        /// Output tube file (JSON lines).
        out: PathBuf,
        /// Per-frame flow magnitude maps; enables actionness pruning. With a
        /// proposals directory this is a directory of matching filenames.
        #[arg(long)]
        flow: Option<PathBuf>,
    },
    /// Populate proposal scores from features and a linear model.
    Score {
        proposals: PathBuf,
        features: PathBuf,
        model: PathBuf,
        out: PathBuf,
    },
    /// Evaluate detection tubes against ground truth.
    Eval {
        #[command(flatten)]
        args: EvalArgs,
        /// Also write threshold-sweep curves as CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Evaluate and always emit threshold-sweep curves.
    Curves {
        #[command(flatten)]
        args: EvalArgs,
        /// Output CSV path for the curves.
        curves: PathBuf,
    },
    /// Generate a synthetic scenario: proposals plus ground truth.
    Gen {
        /// Scenario spec (JSON).
        spec: PathBuf,
        /// Output directory for proposals.jsonl and ground_truth.jsonl.
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Detection tubes (JSON lines).
    tubes: PathBuf,
    /// Ground-truth tubes (JSON lines).
    ground_truth: PathBuf,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the matched-pair class confusion matrix as CSV.
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// Explicit class vocabulary, in order. Defaults to the sorted union of
    /// the names found in both input files.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    /// Spatial recall acceptance threshold.
    #[arg(long)]
    t_sr: Option<f64>,
    /// Temporal recall acceptance threshold.
    #[arg(long)]
    t_tr: Option<f64>,
    /// Spatial precision acceptance threshold.
    #[arg(long)]
    t_sp: Option<f64>,
    /// Temporal precision acceptance threshold.
    #[arg(long)]
    t_tp: Option<f64>,
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Internal(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    if let Some(v) = cli.lambda {
        cfg.linker.lambda = v;
    }
    if let Some(v) = cli.alpha {
        cfg.linker.alpha = v;
    }
    if let Some(v) = cli.delta {
        cfg.linker.delta = v;
    }
    if let Some(v) = cli.tau {
        cfg.linker.tau = v;
    }
    if let Some(v) = cli.max_paths {
        cfg.linker.max_paths = v;
    }
    if let Some(v) = cli.nms_iou {
        cfg.linker.nms_iou = v;
    }
    if let Some(v) = cli.actionness_threshold {
        cfg.linker.actionness_threshold = v;
    }
    if let Some(v) = cli.eta {
        cfg.thresholds.eta = v;
    }
    if let Some(v) = cli.grid_step {
        cfg.thresholds.grid_step = v;
    }
    if let Some(v) = cli.threads {
        cfg.threads = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Link { proposals, out, flow } => run_link(&cfg, proposals, out, flow.as_deref()),
        Command::Score { proposals, features, model, out } => {
            run_score(&cfg, proposals, features, model, out)
        }
        Command::Eval { args, curves } => run_eval(&cfg, args, curves.as_deref()),
        Command::Curves { args, curves } => run_eval(&cfg, args, Some(curves)),
        Command::Gen { spec, out_dir } => run_gen(spec, out_dir, cli.seed),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// A proposals argument is either one file or a directory of `.jsonl` files,
/// processed in sorted filename order.
fn collect_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        });
    }
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn is_effectively_empty(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().all(|l| l.trim().is_empty()))
}

fn prune_video(video: VideoProposals, flow_path: &Path, threshold: f64) -> Result<VideoProposals> {
    let maps = io::load_flow_maps(flow_path, video.frame_count())?;
    let VideoProposals { video_id, frame_width, frame_height, class_names, .. } = video.clone();
    let frames: Vec<Vec<RegionProposal>> = video
        .into_frames()
        .into_iter()
        .zip(maps)
        .map(|(frame, map)| match map {
            Some(flow) => tubelink::ingest::prune_by_actionness(&frame, &flow, threshold),
            None => Ok(frame),
        })
        .collect::<Result<_>>()?;
    VideoProposals::new(video_id, frame_width, frame_height, class_names, frames)
}

fn run_link(cfg: &RunConfig, proposals: &Path, out: &Path, flow: Option<&Path>) -> Result<()> {
    let inputs = collect_inputs(proposals)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Internal(format!("cannot build thread pool: {e}")))?;

    let flow_for = |input: &Path| -> Option<PathBuf> {
        flow.map(|f| {
            if f.is_dir() {
                f.join(input.file_name().unwrap_or_default())
            } else {
                f.to_path_buf()
            }
        })
    };

    let linked: Vec<Option<(VideoProposals, Vec<ActionTube>)>> = pool.install(|| {
        inputs
            .par_iter()
            .map(|input| -> Result<Option<(VideoProposals, Vec<ActionTube>)>> {
                if is_effectively_empty(input)? {
                    return Ok(None);
                }
                let mut video = io::load_proposals(input)?;
                if let Some(flow_path) = flow_for(input) {
                    video = prune_video(video, &flow_path, cfg.linker.actionness_threshold)?;
                }
                let vocab = ClassVocabulary::new(video.class_names.clone())?;
                let tubes = link_video(&video, &cfg.linker_for(&vocab))?;
                Ok(Some((video, tubes)))
            })
            .collect::<Result<_>>()
    })?;

    let mut rows: Vec<(String, ActionTube)> = Vec::new();
    let mut per_class: BTreeMap<String, usize> = BTreeMap::new();
    let mut vocab: Option<ClassVocabulary> = None;
    for entry in linked.into_iter().flatten() {
        let (video, tubes) = entry;
        match &vocab {
            None => vocab = Some(ClassVocabulary::new(video.class_names.clone())?),
            Some(v) if v.names() != video.class_names.as_slice() => {
                return Err(Error::Invalid(format!(
                    "video {:?} declares different class names than earlier inputs",
                    video.video_id
                )));
            }
            _ => {}
        }
        for tube in tubes {
            let name = video.class_names[tube.class_id].clone();
            *per_class.entry(name).or_insert(0) += 1;
            rows.push((video.video_id.clone(), tube));
        }
    }
    let vocab = match vocab {
        Some(v) => v,
        None => ClassVocabulary::new(Vec::new())?,
    };
    io::save_tubes(&rows, &vocab, out)?;
    for (name, count) in &per_class {
        println!("{name}: {count}");
    }
    println!("wrote {} tubes to {}", rows.len(), out.display());
    Ok(())
}

fn run_score(
    cfg: &RunConfig,
    proposals: &Path,
    features: &Path,
    model_path: &Path,
    out: &Path,
) -> Result<()> {
    let video = io::load_proposals(proposals)?;
    let model = io::load_model(model_path)?;
    if model.class_names() != video.class_names.as_slice() {
        return Err(Error::Invalid(format!(
            "model classes {:?} do not match video classes {:?}",
            model.class_names(),
            video.class_names
        )));
    }
    let table = io::load_features(features)?;
    let VideoProposals { video_id, frame_width, frame_height, class_names, .. } = video.clone();
    let mut scored_frames = Vec::with_capacity(video.frame_count());
    for (t, frame) in video.frames().iter().enumerate() {
        let mut scored = Vec::with_capacity(frame.len());
        for (i, p) in frame.iter().enumerate() {
            let key = (video_id.clone(), t + 1, i);
            let Some((x_a, x_f)) = table.get(&key) else {
                return Err(Error::Invalid(format!(
                    "no features for video {video_id:?}, frame {}, proposal {i}",
                    t + 1
                )));
            };
            let fused = fuse_features(
                &FeatureVector::new(x_a.clone())?,
                &FeatureVector::new(x_f.clone())?,
                cfg.w_appearance,
                cfg.w_flow,
            );
            let scores = linear_score(&fused, &model)?;
            let mut q = p.clone();
            q.scores = scores;
            scored.push(q);
        }
        scored_frames.push(scored);
    }
    let scored = VideoProposals::new(video_id, frame_width, frame_height, class_names, scored_frames)?;
    io::save_proposals(&scored, out)?;
    println!(
        "scored {} proposals in {} frames",
        scored.frames().iter().map(Vec::len).sum::<usize>(),
        scored.frame_count()
    );
    Ok(())
}

#[derive(Serialize)]
struct ReportCounts {
    true_positives: usize,
    false_positives: usize,
    false_negatives: usize,
    recall: f64,
    precision: f64,
    f1: f64,
}

impl From<&MatchReport> for ReportCounts {
    fn from(r: &MatchReport) -> Self {
        Self {
            true_positives: r.true_positives,
            false_positives: r.false_positives,
            false_negatives: r.false_negatives,
            recall: r.recall,
            precision: r.precision,
            f1: r.f1,
        }
    }
}

#[derive(Serialize)]
struct ClassEntry {
    class: String,
    true_positives: usize,
    false_positives: usize,
    false_negatives: usize,
    recall: f64,
    precision: f64,
    f1: f64,
}

#[derive(Serialize)]
struct VideoEntry {
    video_id: String,
    detections: usize,
    ground_truth: usize,
}

#[derive(Serialize)]
struct EvalReport {
    thresholds: EvalThresholds,
    class_names: Vec<String>,
    detection: ReportCounts,
    no_localisation: ReportCounts,
    integrated: IntegratedScores,
    per_class: Vec<ClassEntry>,
    videos: Vec<VideoEntry>,
}

fn run_eval(cfg: &RunConfig, args: &EvalArgs, curves: Option<&Path>) -> Result<()> {
    let vocab = match &args.classes {
        Some(names) => ClassVocabulary::new(names.clone())?,
        None => {
            let mut names: BTreeSet<String> =
                io::scan_class_names(&args.tubes)?.into_iter().collect();
            names.extend(io::scan_class_names(&args.ground_truth)?);
            ClassVocabulary::new(names.into_iter().collect())?
        }
    };
    let mut dets = io::load_tubes(&args.tubes, &vocab)?;
    let mut gts = io::load_ground_truth(&args.ground_truth, &vocab)?;
    let video_ids: BTreeSet<String> = dets.keys().chain(gts.keys()).cloned().collect();
    let videos: Vec<VideoSet> = video_ids
        .into_iter()
        .map(|video_id| VideoSet {
            detections: dets.remove(&video_id).unwrap_or_default(),
            ground_truth: gts.remove(&video_id).unwrap_or_default(),
            video_id,
        })
        .collect();

    let mut thresholds = cfg.thresholds;
    if let Some(v) = args.t_sr {
        thresholds.t_sr = v;
    }
    if let Some(v) = args.t_tr {
        thresholds.t_tr = v;
    }
    if let Some(v) = args.t_sp {
        thresholds.t_sp = v;
    }
    if let Some(v) = args.t_tp {
        thresholds.t_tp = v;
    }
    thresholds.validate()?;

    let detection = corpus_metrics(&videos, &thresholds);
    let no_loc = no_localisation_metrics(&videos);
    let integrated = integrated_scores(&videos, thresholds.eta, thresholds.grid_step)?;
    let per_class = per_class_metrics(&videos, &thresholds, vocab.len());

    let report = EvalReport {
        thresholds,
        class_names: vocab.names().to_vec(),
        detection: ReportCounts::from(&detection),
        no_localisation: ReportCounts::from(&no_loc),
        integrated,
        per_class: per_class
            .iter()
            .map(|c| ClassEntry {
                class: vocab.name_of(c.class_id).unwrap_or("?").to_string(),
                true_positives: c.true_positives,
                false_positives: c.false_positives,
                false_negatives: c.false_negatives,
                recall: c.recall,
                precision: c.precision,
                f1: c.f1,
            })
            .collect(),
        videos: videos
            .iter()
            .map(|v| VideoEntry {
                video_id: v.video_id.clone(),
                detections: v.detections.len(),
                ground_truth: v.ground_truth.len(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Internal(format!("cannot serialize report: {e}")))?;
    match &args.report {
        Some(path) => {
            std::fs::write(path, json + "\n").map_err(io_err(path))?;
            println!(
                "recall {:.4} precision {:.4} f1 {:.4} integrated {:.4}",
                detection.recall, detection.precision, detection.f1, integrated.overall
            );
        }
        None => println!("{json}"),
    }

    if let Some(path) = curves {
        let mut csv = String::from("axis,threshold,recall,precision,f1\n");
        for axis in SweepAxis::ALL {
            for row in metric_curves(&videos, axis, thresholds.eta, thresholds.grid_step)? {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    axis.tag(),
                    row.threshold,
                    row.recall,
                    row.precision,
                    row.f1
                ));
            }
        }
        std::fs::write(path, csv).map_err(io_err(path))?;
    }

    if let Some(path) = &args.confusion {
        let counts = confusion_matrix(&videos, vocab.len());
        let mut csv = String::from("gt_class");
        for name in vocab.names() {
            csv.push(',');
            csv.push_str(name);
        }
        csv.push('\n');
        for (gt_class, row) in counts.iter().enumerate() {
            csv.push_str(vocab.name_of(gt_class).unwrap_or("?"));
            for count in row {
                csv.push_str(&format!(",{count}"));
            }
            csv.push('\n');
        }
        std::fs::write(path, csv).map_err(io_err(path))?;
    }
    Ok(())
}

fn run_gen(spec_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(spec_path).map_err(io_err(spec_path))?;
    let mut spec: ScenarioSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("bad scenario spec: {e}")))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (video, gts) = generate_scenario(&spec)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let vocab = ClassVocabulary::new(video.class_names.clone())?;
    io::save_proposals(&video, &out_dir.join("proposals.jsonl"))?;
    let mut by_video = BTreeMap::new();
    by_video.insert(video.video_id.clone(), gts);
    io::save_ground_truth(&by_video, &vocab, &out_dir.join("ground_truth.jsonl"))?;
    println!(
        "wrote {} frames and {} tubes to {}",
        video.frame_count(),
        by_video.values().map(Vec::len).sum::<usize>(),
        out_dir.display()
    );
    Ok(())
}
