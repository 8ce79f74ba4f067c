use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::{ascii_timeline, binarize, multi_seed_report, svg_timeline, Confusion, EvalReport, SeedRun};
use crate::features::synth::{derive_seed, synth_dataset, SynthConfig, SyntheticEpisode};
use crate::fusion::{fuse, stream_subsets, upsample_to_frames, FrameScoreTrack};
use crate::hashmatch::frames::{frame_stem, read_frames, read_label_runs, write_label_runs, write_pgm};
use crate::hashmatch::{compute_dhash, label_frames, min_distance_table_mih, FrameHash};
use crate::model::{
    load_checkpoint, random_baseline, save_checkpoint, to_matrix, train_stream, write_history_csv, ModelKind, Scorer,
};
use crate::timeline::LabelTrack;
use crate::{Error, Result, StreamId};

use super::data::{load_stream_features, load_timeline, stream_examples};
use super::{
    assign_splits, ensure_parent, subset_name, write_json, EpisodeEntry, Manifest, RunConfig, Split, StageLog,
    SynthInfo, MANIFEST_VERSION,
};

/// Parameters of the `synth` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    pub config: SynthConfig,
    pub n_episodes: usize,
    pub seed: u64,
    /// Render episode and trailer frames to disk. Without frames the `labels`
    /// stage falls back to the planted labels.
    pub write_frames: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            config: SynthConfig::default(),
            n_episodes: 63,
            seed: 0,
            write_frames: true,
        }
    }
}

/// Writes a synthetic dataset and its manifest under `out_dir`.
pub fn synthesize(out_dir: &Path, opts: &SynthOptions) -> Result<Manifest> {
    opts.config.validate()?;
    let episodes = synth_dataset(&opts.config, opts.n_episodes, opts.seed)?;
    let splits = assign_splits(opts.n_episodes, derive_seed(opts.seed, u64::MAX));
    let entries: Vec<EpisodeEntry> = episodes
        .par_iter()
        .zip(splits)
        .enumerate()
        .map(|(i, (ep, split))| write_episode(out_dir, &format!("ep{i:03}"), ep, split, opts.write_frames))
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        fps: opts.config.fps,
        clip_len: opts.config.clip_len,
        synthetic: Some(SynthInfo {
            seed: opts.seed,
            config: opts.config.clone(),
        }),
        episodes: entries,
        root: out_dir.to_path_buf(),
    };
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    let mut log = StageLog::new("synth", opts);
    log.output(&path);
    for e in &manifest.episodes {
        log.output(&out_dir.join("episodes").join(&e.id));
    }
    log.write(&out_dir.join("synth_log.json"))?;
    info!("synth: {} episodes in {}", manifest.episodes.len(), out_dir.display());
    Ok(manifest)
}

fn write_episode(root: &Path, id: &str, ep: &SyntheticEpisode, split: Split, frames: bool) -> Result<EpisodeEntry> {
    let rel = Path::new("episodes").join(id);
    let dir = root.join(&rel);
    fs::create_dir_all(dir.join("features")).map_err(|e| Error::io(&dir, e))?;
    let mut entry = EpisodeEntry {
        id: id.to_string(),
        split,
        frames: None,
        trailer: None,
        timeline: Some(rel.join("timeline.json")),
        subtitles: Some(rel.join("subtitles.jsonl")),
        labels: Some(rel.join("planted.jsonl")),
        features: BTreeMap::new(),
    };
    if frames {
        for (name, count, render) in [
            (
                "frames",
                ep.frame_count(),
                &(|i| ep.render_frame(i)) as &dyn Fn(usize) -> _,
            ),
            ("trailer", ep.trailer_len(), &|i| ep.render_trailer_frame(i)),
        ] {
            let sub = dir.join(name);
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            for i in 0..count {
                write_pgm(&sub.join(format!("{}.pgm", frame_stem(i))), &render(i))?;
            }
        }
        entry.frames = Some(rel.join("frames"));
        entry.trailer = Some(rel.join("trailer"));
    }
    write_json(&dir.join("timeline.json"), &ep.timeline)?;
    ep.subtitles.write_jsonl(&dir.join("subtitles.jsonl"))?;
    write_label_runs(&dir.join("planted.jsonl"), &ep.frame_labels)?;
    for (stream, seq) in &ep.features {
        let file = Path::new("features").join(format!("{stream}.trlf"));
        seq.save(&dir.join(&file))?;
        entry.features.insert(*stream, rel.join(file));
    }
    Ok(entry)
}

fn load_manifest(run: &RunConfig) -> Result<Manifest> {
    run.validate()?;
    Manifest::load(&run.manifest)
}

fn hashes(frames: &[crate::hashmatch::GrayFrame]) -> Result<Vec<FrameHash>> {
    frames.iter().map(compute_dhash).collect()
}

/// Editor labels for every episode: frame hashes matched against the trailer
/// with threshold `tau`, or the manifest's precomputed labels when an
/// episode has no frames.
pub fn run_labels(run: &RunConfig) -> Result<()> {
    let manifest = load_manifest(run)?;
    let layout = run.layout();
    let mut log = StageLog::new("labels", run);
    log.input(&run.manifest)?;
    let tracks: Vec<LabelTrack> = manifest
        .episodes
        .par_iter()
        .map(|e| episode_labels(&manifest, e, run.tau))
        .collect::<Result<_>>()?;
    for (entry, track) in manifest.episodes.iter().zip(&tracks) {
        match (&entry.frames, &entry.trailer) {
            (Some(f), Some(t)) => {
                log.input(&manifest.resolve(f))?;
                log.input(&manifest.resolve(t))?;
            }
            _ => log.input(&manifest.resolve(entry.labels.as_ref().expect("checked by episode_labels")))?,
        }
        let path = layout.labels(&entry.id);
        ensure_parent(&path)?;
        write_label_runs(&path, track)?;
        log.output(&path);
    }
    log.write(&layout.stage_log("labels"))?;
    info!("labels: {} episodes", tracks.len());
    Ok(())
}

fn episode_labels(manifest: &Manifest, entry: &EpisodeEntry, tau: u32) -> Result<LabelTrack> {
    match (&entry.frames, &entry.trailer, &entry.labels) {
        (Some(f), Some(t), _) => {
            let episode = hashes(&read_frames(&manifest.resolve(f))?)?;
            let trailer = hashes(&read_frames(&manifest.resolve(t))?)?;
            label_frames(&min_distance_table_mih(&episode, &trailer, tau)?, tau)
        }
        (_, _, Some(l)) => read_label_runs(&manifest.resolve(l)),
        _ => Err(Error::invalid(format!(
            "episode {} needs frames and trailer directories or precomputed labels",
            entry.id
        ))),
    }
}

fn log_feature_inputs(log: &mut StageLog, manifest: &Manifest, run: &RunConfig, split: Option<Split>) -> Result<()> {
    for entry in manifest.episodes.iter().filter(|e| split.is_none_or(|s| e.split == s)) {
        for stream in &run.streams {
            if let Some(rel) = entry.features.get(stream) {
                log.input(&manifest.resolve(rel))?;
            }
        }
    }
    Ok(())
}

/// Trains one model per (stream, seed) on the train split, monitoring F1 on
/// the validation split.
pub fn run_train(run: &RunConfig) -> Result<()> {
    let manifest = load_manifest(run)?;
    let layout = run.layout();
    let mut log = StageLog::new("train", run);
    log.input(&run.manifest)?;
    for entry in manifest.episodes.iter().filter(|e| e.split != Split::Test) {
        log.input(&layout.labels(&entry.id))
            .map_err(|_| Error::MissingArtifact {
                path: layout.labels(&entry.id),
                hint: "frame labels not found; run the `labels` stage first".into(),
            })?;
    }
    let mut data = Vec::new();
    for &stream in &run.streams {
        let train = stream_examples(&manifest, run, stream, Split::Train)?;
        let val = stream_examples(&manifest, run, stream, Split::Val)?;
        data.push((stream, train, val));
    }
    for split in [Split::Train, Split::Val] {
        log_feature_inputs(&mut log, &manifest, run, Some(split))?;
    }
    if run.model == ModelKind::Random {
        log.write(&layout.stage_log("train"))?;
        info!("train: random baseline has nothing to train");
        return Ok(());
    }
    let jobs: Vec<(usize, u64)> = (0..data.len())
        .flat_map(|i| run.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (stream, train, val) = &data[i];
            let config = run.stream_config(*stream, seed);
            info!("train: {stream} seed {seed}");
            train_stream(train, val, run.model, &config).map(|o| (*stream, seed, o))
        })
        .collect::<Result<Vec<_>>>()?;
    for (stream, seed, outcome) in outcomes {
        let ckpt = layout.checkpoint(stream, seed);
        ensure_parent(&ckpt)?;
        save_checkpoint(&ckpt, &outcome.model)?;
        let hist = layout.history(stream, seed);
        write_history_csv(&hist, &outcome.history)?;
        log.output(&ckpt);
        log.output(&hist);
    }
    log.write(&layout.stage_log("train"))
}

/// Frame-level score tracks for every test episode, stream and seed.
pub fn run_predict(run: &RunConfig) -> Result<()> {
    let manifest = load_manifest(run)?;
    let layout = run.layout();
    let mut log = StageLog::new("predict", run);
    log.input(&run.manifest)?;
    log_feature_inputs(&mut log, &manifest, run, Some(Split::Test))?;
    let test = manifest.split(Split::Test);
    if test.is_empty() {
        return Err(Error::invalid("the manifest has no test episodes"));
    }
    for &stream in &run.streams {
        for &seed in &run.seeds {
            let model = if run.model == ModelKind::Random {
                None
            } else {
                let path = layout.checkpoint(stream, seed);
                let model = load_checkpoint(&path)?;
                log.input(&path)?;
                Some(model)
            };
            for entry in &test {
                let timeline = load_timeline(&manifest, entry, run.cut_threshold)?;
                let feats = load_stream_features(&manifest, entry, stream, &timeline, run.l2_normalize)?;
                let scores = match &model {
                    Some(m) => m.scores(&to_matrix(&feats), stream.scale)?,
                    None => random_baseline(feats.rows(), random_seed(&manifest, entry, stream, seed), stream.scale)?,
                };
                let track = upsample_to_frames(&scores, timeline.bounds(stream.scale)?, timeline.frame_count, stream)?;
                let path = layout.prediction(stream, seed, &entry.id);
                ensure_parent(&path)?;
                track.save(&path)?;
                log.output(&path);
            }
        }
    }
    log.write(&layout.stage_log("predict"))
}

fn random_seed(manifest: &Manifest, entry: &EpisodeEntry, stream: StreamId, seed: u64) -> u64 {
    let episode = manifest.episodes.iter().position(|e| e.id == entry.id).unwrap_or(0);
    let stream = StreamId::ALL.iter().position(|&s| s == stream).unwrap_or(0);
    derive_seed(derive_seed(seed, stream as u64), episode as u64)
}

fn fuse_subsets(run: &RunConfig, manifest: &Manifest, subsets: &[Vec<StreamId>], log: &mut StageLog) -> Result<()> {
    let layout = run.layout();
    for subset in subsets {
        let name = subset_name(subset);
        for &seed in &run.seeds {
            for entry in manifest.split(Split::Test) {
                let tracks = subset
                    .iter()
                    .map(|&s| {
                        let path = layout.prediction(s, seed, &entry.id);
                        log.input(&path).map_err(|_| Error::MissingArtifact {
                            path: path.clone(),
                            hint: "stream predictions not found; run the `predict` stage first".into(),
                        })?;
                        FrameScoreTrack::load(&path)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let fused = fuse(&tracks.iter().collect::<Vec<_>>())?;
                let path = layout.fused(&name, seed, &entry.id);
                ensure_parent(&path)?;
                fused.save(&path)?;
                log.output(&path);
            }
        }
    }
    Ok(())
}

/// Late fusion of the configured stream subsets.
pub fn run_fuse(run: &RunConfig) -> Result<()> {
    let manifest = load_manifest(run)?;
    let mut log = StageLog::new("fuse", run);
    log.input(&run.manifest)?;
    fuse_subsets(run, &manifest, &run.fusion_subsets(), &mut log)?;
    log.write(&run.layout().stage_log("fuse"))
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    streams: &'a [String],
    mean: crate::eval::Metrics,
    std: crate::eval::Metrics,
}

fn evaluate(
    run: &RunConfig,
    manifest: &Manifest,
    subsets: &[Vec<StreamId>],
    stage: &str,
    log: &mut StageLog,
) -> Result<Vec<EvalReport>> {
    let layout = run.layout();
    let dir = layout.reports(stage);
    let test = manifest.split(Split::Test);
    let mut gold = BTreeMap::new();
    for entry in &test {
        let path = layout.labels(&entry.id);
        gold.insert(entry.id.clone(), read_label_runs(&path)?);
        log.input(&path)?;
    }
    let mut reports = Vec::new();
    for subset in subsets {
        let name = subset_name(subset);
        let mut runs = Vec::new();
        for (k, &seed) in run.seeds.iter().enumerate() {
            let mut confusion = Confusion::default();
            for entry in &test {
                let path = layout.fused(&name, seed, &entry.id);
                let track = FrameScoreTrack::load(&path).map_err(|e| match e {
                    Error::MissingArtifact { path, .. } => Error::MissingArtifact {
                        path,
                        hint: "fused scores not found; run the `fuse` stage first".into(),
                    },
                    e => e,
                })?;
                log.input(&path)?;
                let labels = &gold[&entry.id];
                let pred = binarize(&track, run.threshold)?;
                confusion = confusion + Confusion::from_labels(pred.labels(), labels.labels())?;
                if k == 0 {
                    let plot = dir.join("plots").join(&name).join(&entry.id);
                    ensure_parent(&plot)?;
                    let txt = plot.with_extension("txt");
                    let svg = plot.with_extension("svg");
                    let ascii = ascii_timeline(&track.scores, labels.labels(), run.plot_width);
                    fs::write(&txt, ascii).map_err(|e| Error::io(&txt, e))?;
                    fs::write(&svg, svg_timeline(&track.scores, labels.labels(), 1000, 120))
                        .map_err(|e| Error::io(&svg, e))?;
                    log.output(&txt);
                    log.output(&svg);
                }
            }
            runs.push(SeedRun::new(seed, confusion));
        }
        let mut report = multi_seed_report(&runs)?;
        report.streams = subset.iter().map(ToString::to_string).collect();
        let path = dir.join("reports").join(format!("{name}.json"));
        write_json(&path, &report)?;
        log.output(&path);
        reports.push(report);
    }
    let rows: Vec<SummaryRow> = reports
        .iter()
        .map(|r| SummaryRow {
            streams: &r.streams,
            mean: r.mean,
            std: r.std,
        })
        .collect();
    write_json(&dir.join("summary.json"), &rows)?;
    let mut table = format!("{:<56} {:>15} {:>15} {:>15}\n", "streams", "precision", "recall", "F1");
    for r in &reports {
        let cell = |m: f64, s: f64| format!("{:.3} ± {:.3}", m, s);
        table.push_str(&format!(
            "{:<56} {:>15} {:>15} {:>15}\n",
            r.streams.join("+"),
            cell(r.mean.precision, r.std.precision),
            cell(r.mean.recall, r.std.recall),
            cell(r.mean.f1, r.std.f1)
        ));
    }
    let summary = dir.join("summary.txt");
    fs::write(&summary, table).map_err(|e| Error::io(&summary, e))?;
    log.output(&dir.join("summary.json"));
    log.output(&summary);
    Ok(reports)
}

/// Frame-level precision, recall and F1 on the test split for each fused subset.
pub fn run_eval(run: &RunConfig) -> Result<Vec<EvalReport>> {
    let manifest = load_manifest(run)?;
    let mut log = StageLog::new("eval", run);
    log.input(&run.manifest)?;
    let reports = evaluate(run, &manifest, &run.fusion_subsets(), "eval", &mut log)?;
    log.write(&run.layout().stage_log("eval"))?;
    Ok(reports)
}

/// Labels, training and prediction followed by fusion and evaluation of every
/// nonempty subset of the configured streams.
pub fn run_grid(run: &RunConfig) -> Result<Vec<EvalReport>> {
    run_labels(run)?;
    run_train(run)?;
    run_predict(run)?;
    let manifest = load_manifest(run)?;
    let subsets = stream_subsets(&run.streams);
    let mut log = StageLog::new("grid", run);
    log.input(&run.manifest)?;
    fuse_subsets(run, &manifest, &subsets, &mut log)?;
    let reports = evaluate(run, &manifest, &subsets, "grid", &mut log)?;
    log.write(&run.layout().stage_log("grid"))?;
    Ok(reports)
}
