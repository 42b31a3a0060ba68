//! Command-line front end. `main` only forwards to [`run`].
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 bad input
//! data, 3 numerical failure. Failures print one line to stderr:
//! `error code=<n> kind=<usage|data|numerical> msg="<text>"`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eval::{
    evaluate, generate_scenario, label_detections, long_occlusion_suite, run_tracker, standard_suite, training_samples,
    EvalError, LabeledFrame, MetricReport, Scenario, ScenarioSpec, Trajectories,
};
use crate::io::{self, DetectionRecord, FeatureRecord, FeatureSet, IoError, RunConfig};
use crate::net::{self, gradcheck, MatchNet, NetError};
use crate::track::{Detection, Matcher, TrackError, Tracker};

pub const LOG_ENV: &str = "GMTRACK_LOG";

#[derive(Debug, Parser)]
#[command(name = "gmtrack", version, about = "Graph-matching multi-object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. --set tracker.delta=30
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for every random choice (overrides the config's `seed`)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatcherArg {
    Gm,
    Hungarian,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Standard,
    Long,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track a detection file and write a result file. The tracker itself
    /// is deterministic; --seed is recorded and used by nothing else.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        det: Option<PathBuf>,
        #[arg(long)]
        feat: Option<PathBuf>,
        /// Read features as CSV instead of the binary format
        #[arg(long)]
        feat_csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Trained network; raw features are matched directly without one
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Per-frame camera warps
        #[arg(long)]
        warps: Option<PathBuf>,
        #[arg(long, value_enum)]
        matcher: Option<MatcherArg>,
    },
    /// Train the matching network on labeled sequences and save a
    /// checkpoint. --seed drives initialization and sample order.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        det: Option<PathBuf>,
        #[arg(long)]
        feat: Option<PathBuf>,
        #[arg(long)]
        feat_csv: bool,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Also train on a built-in synthetic scenario (repeatable)
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Start from these weights instead of a fresh initialization
        #[arg(long)]
        init: Option<PathBuf>,
        /// Checkpoint to write
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a result file against ground truth. Deterministic; --seed is
    /// accepted for uniformity.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        res: PathBuf,
        /// IoU needed for a match
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Print the report as key=value
        #[arg(long)]
        kv: bool,
    },
    /// Compare analytic gradients with central finite differences. --seed
    /// picks the random instances.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        qp_instances: usize,
        #[arg(long, default_value_t = 20)]
        e2e_instances: usize,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Write a built-in synthetic scenario to disk. --seed replaces the
    /// scenario's own seed.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Scenario name; see --list
        #[arg(long, default_value = "single")]
        scenario: String,
        #[arg(long)]
        list: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        frames: Option<u32>,
        #[arg(long)]
        objects: Option<usize>,
        #[arg(long)]
        feat_csv: bool,
    },
    /// Graph matching against the Hungarian baseline over a scenario
    /// suite. A nonzero --seed is added to every scenario seed.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "standard")]
        suite: SuiteArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Also print every report as key=value
        #[arg(long)]
        kv: bool,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            msg: msg.into(),
        }
    }
    fn data(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }
    fn numerical(msg: impl Into<String>) -> Self {
        Self {
            code: 3,
            msg: msg.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.code {
            1 => "usage",
            2 => "data",
            _ => "numerical",
        }
    }

    pub fn line(&self) -> String {
        let flat = self.msg.replace(['\n', '\r'], " ");
        format!("error code={} kind={} msg={:?}", self.code, self.kind(), flat)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Config(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::InvalidConfig(_) => Self::usage(e.to_string()),
            NetError::EmptyHistory | NetError::ShapeMismatch(_) | NetError::Checkpoint(_) | NetError::Io(_) => {
                Self::data(e.to_string())
            }
            _ => Self::numerical(e.to_string()),
        }
    }
}

impl From<TrackError> for CliError {
    fn from(e: TrackError) -> Self {
        match e {
            TrackError::InvalidConfig(_) => Self::usage(e.to_string()),
            TrackError::InvalidDetection(..) | TrackError::FrameOrder { .. } => Self::data(e.to_string()),
            other => Self::numerical(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments, runs the subcommand and maps failures to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let text: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            let text = text.join(" ");
            eprintln!("{}", CliError::usage(text.trim_start_matches("error: ")).line());
            return ExitCode::from(1);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code)
        }
    }
}

fn load_config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for pair in &c.overrides {
        cfg.set_pair(pair)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn require(p: Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    p.ok_or_else(|| CliError::usage(format!("missing --{what} (or path.{what} in the config)")))
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Track {
            common,
            det,
            feat,
            feat_csv,
            out,
            checkpoint,
            warps,
            matcher,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.feat_csv |= feat_csv;
            if let Some(m) = matcher {
                cfg.matcher = match m {
                    MatcherArg::Gm => Matcher::GraphMatching,
                    MatcherArg::Hungarian => Matcher::HungarianOnAffinity,
                };
            }
            let det = require(det.or(cfg.det.clone()), "det")?;
            let feat = require(feat.or(cfg.feat.clone()), "feat")?;
            let out = require(out.or(cfg.out.clone()), "out")?;
            let checkpoint = checkpoint.or(cfg.checkpoint.clone());
            let warps = warps.or(cfg.warps.clone());
            cmd_track(&cfg, &det, &feat, &out, checkpoint.as_deref(), warps.as_deref())
        }
        Command::Train {
            common,
            det,
            feat,
            feat_csv,
            gt,
            scenarios,
            init,
            out,
            epochs,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.feat_csv |= feat_csv;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let det = det.or(cfg.det.clone());
            let feat = feat.or(cfg.feat.clone());
            let gt = gt.or(cfg.gt.clone());
            let out = require(out.or(cfg.checkpoint.clone()), "out")?;
            let files = match (det, feat, gt) {
                (Some(d), Some(f), Some(g)) => Some((d, f, g)),
                (None, None, None) => None,
                _ => return Err(CliError::usage("train needs --det, --feat and --gt together")),
            };
            if files.is_none() && scenarios.is_empty() {
                return Err(CliError::usage(
                    "train needs --det/--feat/--gt or at least one --scenario",
                ));
            }
            cmd_train(&cfg, files, &scenarios, init.as_deref(), &out)
        }
        Command::Eval {
            common,
            gt,
            res,
            iou,
            kv,
        } => {
            load_config(&common)?;
            cmd_eval(&gt, &res, iou, kv)
        }
        Command::Gradcheck {
            common,
            qp_instances,
            e2e_instances,
            tol,
        } => {
            let cfg = load_config(&common)?;
            cmd_gradcheck(cfg.seed, qp_instances, e2e_instances, tol)
        }
        Command::Synth {
            common,
            scenario,
            list,
            out_dir,
            frames,
            objects,
            feat_csv,
        } => {
            if list {
                for s in standard_suite().into_iter().chain(long_occlusion_suite()) {
                    println!("{}", s.name);
                }
                return Ok(());
            }
            let cfg = load_config(&common)?;
            let mut spec = find_scenario(&scenario)?;
            if common.seed.is_some() || common.config.is_some() {
                spec.seed = cfg.seed;
            }
            if let Some(f) = frames {
                spec.frames = f;
            }
            if let Some(o) = objects {
                spec.objects = o;
            }
            cmd_synth(&spec, &out_dir, feat_csv || cfg.feat_csv)
        }
        Command::Bench {
            common,
            suite,
            checkpoint,
            iou,
            kv,
        } => {
            let cfg = load_config(&common)?;
            let mut specs = match suite {
                SuiteArg::Standard => standard_suite(),
                SuiteArg::Long => long_occlusion_suite(),
                SuiteArg::All => standard_suite().into_iter().chain(long_occlusion_suite()).collect(),
            };
            for s in &mut specs {
                s.seed = s.seed.wrapping_add(cfg.seed);
            }
            let net = checkpoint
                .or(cfg.checkpoint.clone())
                .map(|p| net::load_checkpoint(&p))
                .transpose()?;
            cmd_bench(&cfg, &specs, net.as_ref(), iou, kv)
        }
    }
}

fn find_scenario(name: &str) -> CliResult<ScenarioSpec> {
    standard_suite()
        .into_iter()
        .chain(long_occlusion_suite())
        .find(|s| s.name == name)
        .ok_or_else(|| CliError::usage(format!("unknown scenario {name:?}; try synth --list")))
}

fn read_features(path: &Path, csv: bool) -> CliResult<FeatureSet> {
    Ok(if csv {
        io::read_feature_csv(path)?
    } else {
        io::read_feature_file(path)?
    })
}

fn load_frames(det: &Path, feat: &Path, csv: bool) -> CliResult<BTreeMap<u32, Vec<Detection>>> {
    let records = io::parse_detections(det)?;
    let features = read_features(feat, csv)?;
    Ok(io::attach_features(&records, &features)?)
}

fn cmd_track(
    cfg: &RunConfig,
    det: &Path,
    feat: &Path,
    out: &Path,
    checkpoint: Option<&Path>,
    warps: Option<&Path>,
) -> CliResult<()> {
    let frames = load_frames(det, feat, cfg.feat_csv)?;
    let warps = warps.map(io::parse_warps).transpose()?.unwrap_or_default();
    let mut tracker = Tracker::new(cfg.tracker_config()?, cfg.matcher)?;
    if let Some(p) = checkpoint {
        let mut net = net::load_checkpoint(p)?;
        net.aggregation = cfg.tracker.aggregation;
        tracker = tracker.with_net(net);
    }
    let (first, last) = match (frames.keys().next(), frames.keys().next_back()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (1, 0),
    };
    let empty = Vec::new();
    let mut failures = 0;
    for f in first..=last {
        let report = tracker.step_with_warp(f, frames.get(&f).unwrap_or(&empty), warps.get(&f))?;
        failures += report.matcher_failed as usize;
    }
    let tracks = tracker.tracks();
    io::write_results(&tracks, out)?;
    println!(
        "frames={} tracks={} matcher_fallbacks={} seed={} out={}",
        last.saturating_sub(first) + u32::from(last >= first),
        tracks.len(),
        failures,
        cfg.seed,
        out.display()
    );
    Ok(())
}

fn labeled_from_files(det: &Path, feat: &Path, gt: &Path, cfg: &RunConfig) -> CliResult<Vec<LabeledFrame>> {
    let frames = load_frames(det, feat, cfg.feat_csv)?;
    let gt = io::parse_ground_truth(gt)?;
    Ok(frames
        .into_iter()
        .map(|(frame, detections)| {
            let labels = label_detections(&gt, frame, &detections, cfg.label_iou);
            LabeledFrame {
                frame,
                detections,
                labels,
            }
        })
        .collect())
}

fn cmd_train(
    cfg: &RunConfig,
    files: Option<(PathBuf, PathBuf, PathBuf)>,
    scenarios: &[String],
    init: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let tcfg = cfg.train_config()?;
    let mut sequences = Vec::new();
    if let Some((d, f, g)) = files {
        sequences.push(labeled_from_files(&d, &f, &g, cfg)?);
    }
    for name in scenarios {
        let mut spec = find_scenario(name)?;
        spec.seed = spec.seed.wrapping_add(cfg.seed);
        sequences.push(generate_scenario(&spec)?.labeled_frames());
    }
    let mut samples = Vec::new();
    for seq in &sequences {
        samples.extend(training_samples(seq, cfg.max_history)?);
    }
    if samples.is_empty() {
        return Err(CliError::data(
            "no training samples: need labeled detections in consecutive frames",
        ));
    }
    let d_in = samples[0].det_features.nrows();
    let mut model = match init {
        Some(p) => net::load_checkpoint(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            MatchNet::init(&mut rng, d_in, cfg.hidden, cfg.out_dim, cfg.gcn_config())
        }
    };
    model.aggregation = cfg.tracker.aggregation;
    if model.input_dim() != d_in {
        return Err(CliError::data(format!(
            "features have width {d_in} but the network expects {}",
            model.input_dim()
        )));
    }
    let losses = net::train(&mut model, &samples, &tcfg)?;
    net::save_checkpoint(&model, out)?;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    let w = losses.len().min(20);
    println!(
        "samples={} steps={} first_loss={:.6e} last_loss={:.6e} head_mean={:.6e} tail_mean={:.6e} seed={} out={}",
        samples.len(),
        losses.len(),
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN),
        mean(&losses[..w]),
        mean(&losses[losses.len() - w..]),
        cfg.seed,
        out.display()
    );
    Ok(())
}

fn cmd_eval(gt: &Path, res: &Path, iou: f64, kv: bool) -> CliResult<()> {
    let gt = io::parse_ground_truth(gt)?;
    let hyp: Trajectories = io::records_to_trajectories(&io::parse_detections(res)?);
    gt.validate()?;
    hyp.validate()?;
    let name = res
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = evaluate(&name, &gt, &hyp, iou)?;
    println!("MOTA={:.3} IDF1={:.3}", report.mota, report.idf1);
    if kv {
        println!("{}", report.to_kv());
    } else {
        println!("{}", MetricReport::table_header());
        println!("{report}");
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64, qp_n: usize, e2e_n: usize, tol: f64) -> CliResult<()> {
    let reports = [gradcheck::qp_suite(seed, qp_n)?, gradcheck::e2e_suite(seed, e2e_n)?];
    let mut ok = true;
    for r in &reports {
        let pass = r.max_rel_error <= tol;
        ok &= pass;
        println!(
            "suite={} instances={} max_rel_error={:.3e} tol={:.0e} {}",
            r.suite,
            r.instances,
            r.max_rel_error,
            tol,
            if pass { "ok" } else { "FAIL" }
        );
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::numerical(format!("gradient error above {tol:e}")))
    }
}

/// Detection, feature and ground-truth records of a generated scenario.
pub fn scenario_records(sc: &Scenario) -> (Vec<DetectionRecord>, FeatureSet, Vec<DetectionRecord>) {
    let mut dets = Vec::new();
    let mut feats = FeatureSet {
        dim: sc.spec.feature_dim,
        records: Vec::new(),
    };
    for f in &sc.frames {
        for (k, d) in f.detections.iter().enumerate() {
            let [x, y, w, h] = d.bbox.to_tlwh();
            dets.push(DetectionRecord {
                frame: f.frame,
                id: -1,
                x,
                y,
                w,
                h,
                confidence: d.confidence,
            });
            feats.records.push(FeatureRecord {
                frame: f.frame,
                index: k as u32,
                values: d.feature.iter().map(|&v| v as f32).collect(),
            });
        }
    }
    (dets, feats, io::trajectories_to_records(&sc.gt.trajectories))
}

fn cmd_synth(spec: &ScenarioSpec, dir: &Path, csv: bool) -> CliResult<()> {
    let sc = generate_scenario(spec)?;
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let (dets, feats, gt) = scenario_records(&sc);
    let write = |name: &str, text: String| -> CliResult<()> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
    };
    write("det.txt", io::format_records(&dets))?;
    write("gt.txt", io::format_records(&gt))?;
    let feat_name = if csv { "feat.csv" } else { "feat.bin" };
    if csv {
        io::write_feature_csv(&feats, &dir.join(feat_name))?;
    } else {
        io::write_feature_file(&feats, &dir.join(feat_name))?;
    }
    println!(
        "scenario={} seed={} frames={} objects={} detections={} dir={}",
        spec.name,
        spec.seed,
        spec.frames,
        spec.objects,
        dets.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, specs: &[ScenarioSpec], net: Option<&MatchNet>, iou: f64, kv: bool) -> CliResult<()> {
    println!(
        "{:<28} {:>7} {:>7} {:>8} {:>8} {:>8} {:>8}",
        "scenario", "gm_idsw", "hu_idsw", "gm_idf1", "hu_idf1", "gm_mota", "hu_mota"
    );
    let mut gm_all = Vec::new();
    let mut hu_all = Vec::new();
    for spec in specs {
        let sc = generate_scenario(spec)?;
        let mut run_cfg = cfg.clone();
        run_cfg.tracker.camera_motion = spec.camera;
        let tcfg = run_cfg.tracker_config()?;
        let run = |m: Matcher| -> CliResult<MetricReport> {
            let hyp = run_tracker(&sc, &tcfg, m, net)?;
            Ok(evaluate(&spec.name, &sc.gt.trajectories, &hyp, iou)?)
        };
        let gm = run(Matcher::GraphMatching)?;
        let hu = run(Matcher::HungarianOnAffinity)?;
        println!(
            "{:<28} {:>7} {:>7} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            spec.name, gm.id_switches, hu.id_switches, gm.idf1, hu.idf1, gm.mota, hu.mota
        );
        if kv {
            println!("matcher=gm {}", gm.to_kv());
            println!("matcher=hungarian {}", hu.to_kv());
        }
        gm_all.push(gm);
        hu_all.push(hu);
    }
    let gm = MetricReport::aggregate("gm", &gm_all);
    let hu = MetricReport::aggregate("hungarian", &hu_all);
    println!();
    println!("{}", MetricReport::table_header());
    println!("{gm}");
    println!("{hu}");
    Ok(())
}
