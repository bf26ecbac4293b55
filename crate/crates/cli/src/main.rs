//! `cae`: generate data, label scenes, train zone classifiers, pick
//! resolutions, replay sessions and compare ladders.

mod files;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use cae_core::cnn::{Layout, TrainConfig};
use cae_core::eval::{
    cohens_d, evaluate_ladders, wilcoxon_signed_rank, write_decisions, write_report_csv, Alternative, EffectSize,
    FrameDropStats,
};
use cae_core::ingest::{
    generate_cc_trace, generate_synthetic_session, write_cc_trace, write_rq_table, write_scene_map, write_size_trace,
    write_stats_log, Metric, RqTable, SyntheticConfig,
};
use cae_core::ladder::upper_convex_hull;
use cae_core::pipeline::{
    build_datasets, compute_labels, frame_matrices, infer_decisions, normalization_for, oracle_decisions,
    static_decisions, train_zone_bundles, window_starts, write_labels, DEFAULT_LABEL_TARGETS,
};
use cae_core::runtime::{simulate_session, write_decision_log, write_session_summary, ChannelModel, Policy};
use clap::{Args, Parser, Subcommand, ValueEnum};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "cae", version, about = "Scene-adaptive resolution selection for low-latency streaming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic session: stats.jsonl, rq.csv, scenes.csv, sizes.csv and cc.csv
    GenSynthetic(GenArgs),
    /// Keep only the upper convex hull points of every scene
    Hull(HullArgs),
    /// Derive per-zone labels from the convex hulls
    Label(LabelArgs),
    /// Train one classifier per zone
    Train(TrainArgs),
    /// Pick a resolution for every scene and target bitrate
    Infer(InferArgs),
    /// Replay a session frame by frame through a policy and the channel
    Simulate(SimulateArgs),
    /// Compare two sets of scene decisions
    Evaluate(EvaluateArgs),
    /// Paired Wilcoxon signed-rank test and Cohen's d
    StatsTest(StatsTestArgs),
}

#[derive(Args)]
struct ZonesArg {
    /// Zone table (TOML); defaults to the built-in four-zone table
    #[arg(long, value_name = "PATH")]
    zones: Option<PathBuf>,
}

#[derive(Args)]
struct TargetsArg {
    /// Target bitrates in Mbps, comma separated
    #[arg(long, value_name = "MBPS", value_delimiter = ',', default_values_t = DEFAULT_LABEL_TARGETS)]
    targets: Vec<f64>,
}

#[derive(Args)]
struct GenArgs {
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Random seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Number of scenes
    #[arg(long, default_value_t = 500)]
    scenes: usize,
    /// Frames per scene (at least 61)
    #[arg(long, default_value_t = 90)]
    frames_per_scene: usize,
    /// Scenes sharing one clip
    #[arg(long, default_value_t = 5)]
    scenes_per_clip: usize,
    /// Measurement noise level
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
}

#[derive(Args)]
struct HullArgs {
    /// Rate-quality table
    #[arg(long, value_name = "PATH")]
    rq: PathBuf,
    /// Quality metric the hull is built on
    #[arg(long, default_value = "vmaf")]
    metric: Metric,
    /// Output CSV (same columns as the rate-quality table)
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    /// Rate-quality table
    #[arg(long, value_name = "PATH")]
    rq: PathBuf,
    #[command(flatten)]
    zones: ZonesArg,
    #[command(flatten)]
    targets: TargetsArg,
    /// Quality metric the hull is built on
    #[arg(long, default_value = "vmaf")]
    metric: Metric,
    /// Output labels CSV
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Encoder statistics log (JSON lines)
    #[arg(long, value_name = "PATH")]
    stats: PathBuf,
    /// Scene map CSV
    #[arg(long, value_name = "PATH")]
    scenes: PathBuf,
    /// Labels CSV from `label`
    #[arg(long, value_name = "PATH")]
    labels: PathBuf,
    #[command(flatten)]
    zones: ZonesArg,
    /// Train on the first N scenes of the scene map only
    #[arg(long, value_name = "N")]
    train_scenes: Option<usize>,
    /// Random seed
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Optimizer iterations per zone
    #[arg(long, default_value_t = 300)]
    iterations: usize,
    /// Mini-batch size
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Output directory for the zone-N.caew bundles
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Cae,
    Static,
    Oracle,
}

#[derive(Args)]
struct InferArgs {
    /// Scene map CSV
    #[arg(long, value_name = "PATH")]
    scenes: PathBuf,
    /// Encoder statistics log (needed by the cae policy)
    #[arg(long, value_name = "PATH")]
    stats: Option<PathBuf>,
    /// Directory of zone-N.caew bundles (needed by the cae policy)
    #[arg(long, value_name = "DIR")]
    bundles: Option<PathBuf>,
    /// Labels CSV (needed by the oracle policy)
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
    /// How resolutions are picked
    #[arg(long, value_enum, default_value_t = PolicyKind::Cae)]
    policy: PolicyKind,
    /// Skip the first N scenes of the scene map
    #[arg(long, value_name = "N", default_value_t = 0)]
    skip_scenes: usize,
    #[command(flatten)]
    zones: ZonesArg,
    #[command(flatten)]
    targets: TargetsArg,
    /// Output decisions CSV
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Encoder statistics log
    #[arg(long, value_name = "PATH")]
    stats: PathBuf,
    /// Per-frame size factors CSV
    #[arg(long, value_name = "PATH")]
    sizes: PathBuf,
    /// Per-frame congestion-control bitrate CSV
    #[arg(long, value_name = "PATH")]
    cc: PathBuf,
    /// Resolution policy (cae or static)
    #[arg(long, value_enum, default_value_t = PolicyKind::Cae)]
    policy: PolicyKind,
    /// Directory of zone-N.caew bundles (needed by the cae policy)
    #[arg(long, value_name = "DIR")]
    bundles: Option<PathBuf>,
    #[command(flatten)]
    zones: ZonesArg,
    /// Frame rate of the stream
    #[arg(long, default_value_t = 60.0)]
    fps: f64,
    /// Queue budget in frame intervals before frames are dropped
    #[arg(long, default_value_t = cae_core::runtime::DEFAULT_DROP_THRESHOLD)]
    drop_threshold: f64,
    /// Output directory for decision_log.csv and summary.csv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Rate-quality table
    #[arg(long, value_name = "PATH")]
    rq: PathBuf,
    /// Reference decisions CSV
    #[arg(long, value_name = "PATH")]
    reference: PathBuf,
    /// Test decisions CSV
    #[arg(long, value_name = "PATH")]
    test: PathBuf,
    /// Metrics to report; all three when omitted
    #[arg(long, value_delimiter = ',')]
    metric: Vec<Metric>,
    /// Session summaries of the reference policy (repeatable)
    #[arg(long, value_name = "PATH")]
    reference_drops: Vec<PathBuf>,
    /// Session summaries of the test policy (repeatable)
    #[arg(long, value_name = "PATH")]
    test_drops: Vec<PathBuf>,
    /// Output report CSV
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlternativeArg {
    Greater,
    TwoSided,
}

#[derive(Args)]
struct StatsTestArgs {
    /// CSV with a header and two numeric columns: test, reference
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Alternative hypothesis
    #[arg(long, value_enum, default_value_t = AlternativeArg::Greater)]
    alternative: AlternativeArg,
    /// Also write the result as CSV
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// A flag combination clap cannot express; exits with the usage code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str, policy: &str) -> Result<&'a Path> {
    v.as_deref().ok_or_else(|| usage(format!("--{flag} is required with --policy {policy}")))
}

fn gen_synthetic(a: &GenArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        seed: a.seed,
        n_scenes: a.scenes,
        frames_per_scene: a.frames_per_scene,
        scenes_per_clip: a.scenes_per_clip,
        noise_level: a.noise,
        ..SyntheticConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let s = generate_synthetic_session(&cfg)?;
    let cc = generate_cc_trace(s.frames.len(), a.seed.wrapping_add(1), 1.0, 20.0);
    files::ensure_dir(&a.out)?;
    files::write_atomic(&a.out.join("stats.jsonl"), |w| Ok(write_stats_log(w, &s.frames)?))?;
    files::write_atomic(&a.out.join("rq.csv"), |w| Ok(write_rq_table(w, &s.rq)?))?;
    files::write_atomic(&a.out.join("scenes.csv"), |w| Ok(write_scene_map(w, &s.scenes)?))?;
    files::write_atomic(&a.out.join("sizes.csv"), |w| Ok(write_size_trace(w, &s.sizes)?))?;
    files::write_atomic(&a.out.join("cc.csv"), |w| Ok(write_cc_trace(w, &cc)?))?;
    println!("{} scenes, {} frames written to {}", s.scenes.len(), s.frames.len(), a.out.display());
    Ok(())
}

fn hull(a: &HullArgs) -> Result<()> {
    let rq = files::rq(&a.rq)?;
    let mut out = RqTable::new();
    for (key, points) in &rq {
        let h = upper_convex_hull(points, a.metric).map_err(|e| anyhow::anyhow!("scene {key}: {e}"))?;
        out.insert(key.clone(), h.points);
    }
    files::write_atomic(&a.out, |w| Ok(write_rq_table(w, &out)?))?;
    let kept: usize = out.values().map(Vec::len).sum();
    println!("{kept} hull points over {} scenes", out.len());
    Ok(())
}

fn label(a: &LabelArgs) -> Result<()> {
    let zones = files::zones(a.zones.zones.as_deref())?;
    let rq = files::rq(&a.rq)?;
    let rows = compute_labels(&rq, &zones, &a.targets.targets, a.metric)?;
    files::write_atomic(&a.out, |w| Ok(write_labels(w, &rows)?))?;
    let high = rows.iter().filter(|r| r.label == 1).count();
    println!("{} labels, {high} pick the higher resolution", rows.len());
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let zones = files::zones(a.zones.zones.as_deref())?;
    let labels = files::labels(&a.labels)?;
    let frames = files::stats(&a.stats)?;
    let spans = files::scenes(&a.scenes)?;
    let n = a.train_scenes.unwrap_or(spans.len()).min(spans.len());
    let spans = &spans[..n];
    if a.batch == 0 {
        return Err(usage("--batch must be at least 1"));
    }
    let matrices = frame_matrices(&frames)?;
    let windows = window_starts(&frames, spans, true)?;
    let norm = normalization_for(&frames, &matrices, spans)?;
    let sets = build_datasets(&matrices, spans, &windows, &labels, &norm, &zones)?;
    let cfg = TrainConfig { iterations: a.iterations, batch_size: a.batch, seed: a.seed, ..TrainConfig::default() };
    let trained = train_zone_bundles(&sets, &norm, Layout::FramesAsChannels, &cfg)?;
    files::ensure_dir(&a.out)?;
    for ((bundle, outcome), set) in trained.iter().zip(&sets) {
        files::save_bundle(&a.out, bundle)?;
        let acc = outcome.validation_accuracy.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
        println!(
            "zone {}: {} examples ({} high), best iteration {}, validation accuracy {acc}",
            set.zone_id,
            set.examples.len(),
            set.positives(),
            outcome.best_iteration
        );
    }
    Ok(())
}

fn infer(a: &InferArgs) -> Result<()> {
    let zones = files::zones(a.zones.zones.as_deref())?;
    let spans = files::scenes(&a.scenes)?;
    let skip = a.skip_scenes.min(spans.len());
    let decisions = match a.policy {
        PolicyKind::Static => static_decisions(&spans[skip..], &zones, &a.targets.targets)?,
        PolicyKind::Oracle => {
            let labels = files::labels(required(&a.labels, "labels", "oracle")?)?;
            oracle_decisions(&labels, &spans[skip..])
        }
        PolicyKind::Cae => {
            let stats = required(&a.stats, "stats", "cae")?;
            let dir = required(&a.bundles, "bundles", "cae")?;
            let bundles = files::bundles(dir, &zones)?;
            let frames = files::stats(stats)?;
            let matrices = frame_matrices(&frames)?;
            let windows = window_starts(&frames, &spans, false)?;
            infer_decisions(&matrices, &spans[skip..], &windows[skip..], &bundles, &zones, &a.targets.targets)?
        }
    };
    files::write_atomic(&a.out, |w| Ok(write_decisions(w, &decisions)?))?;
    println!("{} decisions over {} scenes", decisions.len(), spans.len() - skip);
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let zones = files::zones(a.zones.zones.as_deref())?;
    let policy = match a.policy {
        PolicyKind::Static => Policy::Static,
        PolicyKind::Cae => Policy::cae(files::bundles(required(&a.bundles, "bundles", "cae")?, &zones)?),
        PolicyKind::Oracle => return Err(usage("simulate supports --policy cae or static")),
    };
    let frames = files::stats(&a.stats)?;
    let sizes = files::sizes(&a.sizes)?;
    let cc = files::cc(&a.cc)?;
    let first_cc = cc.first().copied().unwrap_or(1.0);
    let channel = ChannelModel::with_threshold(first_cc, a.fps, a.drop_threshold).map_err(|e| usage(e.to_string()))?;
    let report = simulate_session(&frames, &cc, &sizes, &zones, policy, &channel)?;
    files::ensure_dir(&a.out)?;
    files::write_atomic(&a.out.join("decision_log.csv"), |w| Ok(write_decision_log(w, &report)?))?;
    files::write_atomic(&a.out.join("summary.csv"), |w| Ok(write_session_summary(w, &report)?))?;
    println!(
        "{} frames, {} scenes, {} dropped ({:.3}%)",
        report.decisions.len(),
        report.scenes.len(),
        report.dropped,
        report.drop_percent
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let rq = files::rq(&a.rq)?;
    let reference = files::decisions(&a.reference)?;
    let test = files::decisions(&a.test)?;
    let metrics = if a.metric.is_empty() { Metric::ALL.to_vec() } else { a.metric.clone() };
    let drops = if a.reference_drops.is_empty() && a.test_drops.is_empty() {
        None
    } else {
        if a.reference_drops.is_empty() || a.test_drops.is_empty() {
            return Err(usage("--reference-drops and --test-drops must be given together"));
        }
        let read = |paths: &[PathBuf]| paths.iter().map(|p| files::summary_drop_percent(p)).collect::<Result<Vec<_>>>();
        Some(FrameDropStats { reference: read(&a.reference_drops)?, test: read(&a.test_drops)? })
    };
    let name = |p: &Path| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
    let report = evaluate_ladders(
        &rq,
        (&name(&a.reference), &reference),
        (&name(&a.test), &test),
        drops.as_ref(),
        &metrics,
    )?;
    files::write_atomic(&a.out, |w| Ok(write_report_csv(w, &report)?))?;
    print!("{report}");
    Ok(())
}

fn stats_test(a: &StatsTestArgs) -> Result<()> {
    let (x, y) = files::pairs(&a.input)?;
    let alt = match a.alternative {
        AlternativeArg::Greater => Alternative::Greater,
        AlternativeArg::TwoSided => Alternative::TwoSided,
    };
    let w = wilcoxon_signed_rank(&x, &y, alt)?;
    let d = cohens_d(&x, &y).ok();
    let effect = d.map(EffectSize::classify);
    let d_text = d.map_or_else(String::new, |v| format!("{v:.6}"));
    let effect_text = effect.map_or_else(String::new, |e| e.to_string());
    println!(
        "n = {}, W+ = {}, p = {:.6} ({}), Cohen's d = {}, effect {}",
        w.n,
        w.w_plus,
        w.p_value,
        if w.exact { "exact" } else { "normal approximation" },
        if d_text.is_empty() { "undefined" } else { &d_text },
        if effect_text.is_empty() { "undefined" } else { &effect_text },
    );
    if let Some(out) = &a.out {
        files::write_atomic(out, |f| {
            writeln!(f, "n,w_plus,p_value,exact,cohens_d,effect")?;
            writeln!(f, "{},{},{:.12},{},{d_text},{effect_text}", w.n, w.w_plus, w.p_value, w.exact)?;
            Ok(())
        })?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Hull(a) => hull(a),
        Command::Label(a) => label(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::StatsTest(a) => stats_test(a),
    }
}

/// Exit code 0 on success, 1 on usage errors, 2 on data errors.
fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(run(["cae", "train", "--bogus"]), 1);
        assert_eq!(run(["cae"]), 1);
        assert_eq!(run(["cae", "hull", "--rq", "x.csv", "--out", "y.csv", "--metric", "mos"]), 1);
    }

    #[test]
    fn help_succeeds() {
        assert_eq!(run(["cae", "--help"]), 0);
    }

    #[test]
    fn missing_policy_inputs_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let scenes = dir.path().join("scenes.csv");
        std::fs::write(&scenes, "clip_id,scene_id,first_frame,frame_count,complexity\nc,s,0,90,\n").unwrap();
        let out = dir.path().join("d.csv");
        let args = ["cae", "infer", "--scenes", scenes.to_str().unwrap(), "--out", out.to_str().unwrap()];
        assert_eq!(run(args), 1);
        assert!(!out.exists());
    }

    #[test]
    fn every_flag_is_documented() {
        use clap::CommandFactory;
        let cmd = Cli::command();
        for sub in cmd.get_subcommands() {
            assert!(sub.get_about().is_some(), "{}", sub.get_name());
            for arg in sub.get_arguments() {
                if arg.get_id() == "help" {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{} --{}", sub.get_name(), arg.get_id());
            }
        }
    }
}
