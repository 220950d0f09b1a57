//! The six pipeline steps and their on-disk artifacts.
//!
//! Layout under `output_dir`:
//!
//! ```text
//! sample/                 points.jsonl, points.csv
//! fuse/                   features.jsonl, rejections.jsonl
//! simulate/<tag>/         prompts.jsonl, predictions.jsonl, failures.jsonl
//! evaluate/<tag>/         report.json, report.txt
//! analyze/<tag>/          terms_by_mmi.csv, terms_<perspective>.csv, scatter.csv, summary.json
//! export/<tag>/           choropleth.geojson, metrics.json, metrics.txt, manifest.json
//! cache/                  model responses
//! ```
//!
//! `<tag>` combines the model id and the prompt mode. Each step directory
//! holds a `.step.json` stamp with a digest of everything the step depends
//! on. A step whose stamp matches is skipped unless forced; a step whose
//! predecessor stamp is missing or stale fails with a dependency error.

mod config;

pub use config::{AnalysisSettings, DataSources, EvalSettings, ImageSource, Overrides, RunConfig, ZonesSource};

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::eval::{self, EvalError, EvalInputs, EvalReport};
use crate::exec::Execution;
use crate::export::{self, ExportError, RunManifest, RunStatus};
use crate::fusion::{
    self, AcsTable, BuildingIndex, EarthquakeParams, FusionError, FusionSources, HttpStreetView, ImageProvider, LocalDirectory,
    NoImagery, PlaceTable, RasterGrid, Rejection, SampleFeatures,
};
use crate::geo::{self, GeoError, SampledPoint, ZoneKind, ZonePolygon};
use crate::llm::{FailReason, LlmClient, LlmError, Prediction, SimFailure};
use crate::prompt::{self, BankEntry, RenderedPrompt};

pub const STEPS: [&str; 6] = ["sample", "fuse", "simulate", "evaluate", "analyze", "export"];
const STAMP: &str = ".step.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("{step} needs the output of `{requires}`: {detail}")]
    Dependency {
        step: &'static str,
        requires: &'static str,
        detail: String,
    },
    #[error("model endpoint unusable: {0}")]
    Transport(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl PipelineError {
    /// 1 user/config error, 2 data error, 3 transport error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Dependency { .. } => 1,
            PipelineError::Transport(_) | PipelineError::Fusion(FusionError::Transport(_)) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Outcome of one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub step: &'static str,
    pub dir: PathBuf,
    pub reused: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Stamp {
    step: String,
    digest: String,
}

/// SHA-256 over length-prefixed parts.
fn digest_parts<S: AsRef<[u8]>>(parts: &[S]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        let p = p.as_ref();
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn opt_file_digest(path: Option<&Path>) -> Result<String, PipelineError> {
    path.map_or(Ok(String::new()), file_digest)
}

fn dir_digest(dir: &Path) -> Result<String, PipelineError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut parts = Vec::with_capacity(entries.len() * 2);
    for p in &entries {
        parts.push(p.file_name().unwrap_or_default().to_string_lossy().into_owned());
        parts.push(file_digest(p)?);
    }
    Ok(digest_parts(&parts))
}

fn json_string<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config types serialize")
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let f = File::open(path).map_err(io_err(path))?;
    fusion::read_jsonl(BufReader::new(f)).map_err(|e| match e {
        FusionError::Input { source_name, message } => PipelineError::Fusion(FusionError::Input {
            source_name: format!("{} {source_name}", path.display()),
            message,
        }),
        other => other.into(),
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    fusion::write_jsonl(&mut buf, items).map_err(io_err(path))?;
    crate::fsutil::write_atomic(path, &buf).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    crate::fsutil::write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

fn count_by_zone<'a>(ids: impl Iterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for z in ids {
        *m.entry(z.to_string()).or_default() += 1;
    }
    m
}

/// Digests identifying the inputs of each step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepDigests {
    pub sample: String,
    pub fuse: String,
    pub simulate: String,
    pub evaluate: String,
    pub analyze: String,
    pub export: String,
}

pub struct Pipeline {
    cfg: RunConfig,
    force: bool,
    exec: Execution,
    started: DateTime<Utc>,
    digests: StepDigests,
    config_digest: String,
}

impl Pipeline {
    /// Validates the configuration (reporting every problem) and hashes the
    /// inputs.
    pub fn new(cfg: RunConfig, force: bool) -> Result<Self, PipelineError> {
        let errs = cfg.validate();
        if !errs.is_empty() {
            return Err(PipelineError::Config(errs));
        }
        let digests = Self::compute_digests(&cfg)?;
        let config_digest = digest_parts(&[json_string(&cfg)]);
        Ok(Self {
            exec: if cfg.parallel { Execution::Parallel } else { Execution::Sequential },
            cfg,
            force,
            started: Utc::now(),
            digests,
            config_digest,
        })
    }

    fn compute_digests(cfg: &RunConfig) -> Result<StepDigests, PipelineError> {
        let d = &cfg.data_sources;
        let zones = file_digest(&cfg.zones.path)?;
        let sample = digest_parts(&["sample".to_string(), zones.clone(), json_string(&cfg.zones.kind), json_string(&cfg.zones.id_property), json_string(&cfg.sample_plan)]);
        let images = match &d.images {
            None => String::new(),
            Some(ImageSource::Directory { path }) => dir_digest(path)?,
            Some(s) => json_string(s),
        };
        let fuse = digest_parts(&[
            "fuse".to_string(),
            sample.clone(),
            file_digest(&cfg.event)?,
            file_digest(&d.vs30)?,
            file_digest(&d.buildings)?,
            file_digest(&d.cbg)?,
            json_string(&d.cbg_id_property),
            file_digest(&d.acs)?,
            file_digest(&d.zip_county)?,
            images,
            d.building_radius_m.to_string(),
        ]);
        let bank = if cfg.prompt.rag_k > 0 { opt_file_digest(cfg.demonstration_bank.as_deref())? } else { String::new() };
        let simulate = digest_parts(&["simulate".to_string(), fuse.clone(), json_string(&cfg.prompt), json_string(&cfg.model), bank]);
        let evaluate = digest_parts(&[
            "evaluate".to_string(),
            simulate.clone(),
            opt_file_digest(d.dyfi.as_deref())?,
            file_digest(&d.zip_county)?,
            json_string(&cfg.evaluation),
            json_string(&cfg.zones.kind),
        ]);
        let analyze = digest_parts(&["analyze".to_string(), simulate.clone(), fuse.clone(), json_string(&cfg.analysis)]);
        let export = digest_parts(&["export".to_string(), evaluate.clone(), simulate.clone(), fuse.clone(), sample.clone(), zones]);
        Ok(StepDigests {
            sample,
            fuse,
            simulate,
            evaluate,
            analyze,
            export,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn digests(&self) -> &StepDigests {
        &self.digests
    }

    /// Model id plus prompt mode, used to name per-experiment directories.
    pub fn run_tag(&self) -> String {
        format!("{}__{}", slug(&self.cfg.model.model_id), self.cfg.prompt.mode_tag())
    }

    pub fn step_dir(&self, step: &str) -> PathBuf {
        let base = self.cfg.output_dir.join(step);
        match step {
            "sample" | "fuse" => base,
            _ => base.join(self.run_tag()),
        }
    }

    fn digest_of(&self, step: &str) -> &str {
        match step {
            "sample" => &self.digests.sample,
            "fuse" => &self.digests.fuse,
            "simulate" => &self.digests.simulate,
            "evaluate" => &self.digests.evaluate,
            "analyze" => &self.digests.analyze,
            _ => &self.digests.export,
        }
    }

    fn stamp_matches(&self, step: &str) -> Result<bool, String> {
        let path = self.step_dir(step).join(STAMP);
        let text = fs::read_to_string(&path).map_err(|_| "not run yet".to_string())?;
        let stamp: Stamp = serde_json::from_str(&text).map_err(|_| "stamp unreadable".to_string())?;
        if stamp.digest == self.digest_of(step) {
            Ok(true)
        } else {
            Err("inputs changed since it ran; run it again".to_string())
        }
    }

    fn require(&self, step: &'static str, requires: &'static str) -> Result<(), PipelineError> {
        self.stamp_matches(requires).map(|_| ()).map_err(|detail| PipelineError::Dependency { step, requires, detail })
    }

    /// Returns `Some(outcome)` if the step can be skipped, else prepares a
    /// clean directory.
    fn begin(&self, step: &'static str) -> Result<Option<StepOutcome>, PipelineError> {
        let dir = self.step_dir(step);
        if !self.force && self.stamp_matches(step).is_ok() {
            log::info!("{step}: up to date, reusing {}", dir.display());
            return Ok(Some(StepOutcome { step, dir, reused: true }));
        }
        if dir.is_symlink() {
            fs::remove_file(&dir).map_err(io_err(&dir))?;
        } else if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(None)
    }

    fn finish(&self, step: &'static str) -> Result<StepOutcome, PipelineError> {
        let dir = self.step_dir(step);
        write_json(
            &dir.join(STAMP),
            &Stamp {
                step: step.to_string(),
                digest: self.digest_of(step).to_string(),
            },
        )?;
        Ok(StepOutcome { step, dir, reused: false })
    }

    fn load_zones(&self) -> Result<Vec<ZonePolygon>, PipelineError> {
        Ok(geo::load_zones(&self.cfg.zones.path, self.cfg.zones.kind, self.cfg.zones.id_property.as_deref())?)
    }

    pub fn points_path(&self) -> PathBuf {
        self.step_dir("sample").join("points.jsonl")
    }

    pub fn features_path(&self) -> PathBuf {
        self.step_dir("fuse").join("features.jsonl")
    }

    pub fn rejections_path(&self) -> PathBuf {
        self.step_dir("fuse").join("rejections.jsonl")
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.step_dir("simulate").join("predictions.jsonl")
    }

    pub fn failures_path(&self) -> PathBuf {
        self.step_dir("simulate").join("failures.jsonl")
    }

    pub fn prompts_path(&self) -> PathBuf {
        self.step_dir("simulate").join("prompts.jsonl")
    }

    pub fn report_path(&self) -> PathBuf {
        self.step_dir("evaluate").join("report.json")
    }

    pub fn cmd_sample(&self) -> Result<StepOutcome, PipelineError> {
        if let Some(done) = self.begin("sample")? {
            return Ok(done);
        }
        let zones = self.load_zones()?;
        let points = geo::sample_all(&zones, &self.cfg.sample_plan, self.exec)?;
        log::info!("sample: {} points in {} zones", points.len(), zones.len());
        write_jsonl(&self.points_path(), &points)?;
        let csv_path = self.step_dir("sample").join("points.csv");
        let mut buf = Vec::new();
        geo::write_points_csv(&mut buf, &points)?;
        write_text(&csv_path, &String::from_utf8(buf).expect("csv is utf-8"))?;
        self.finish("sample")
    }

    fn fusion_sources(&self) -> Result<FusionSources, PipelineError> {
        let d = &self.cfg.data_sources;
        let images: Box<dyn ImageProvider> = match &d.images {
            None => Box::new(NoImagery),
            Some(ImageSource::Directory { path }) => Box::new(LocalDirectory::new(path)),
            Some(ImageSource::StreetView { endpoint, api_key_env, size }) => Box::new(HttpStreetView {
                endpoint: endpoint.clone(),
                api_key_env: api_key_env.clone(),
                cache_dir: self.cfg.output_dir.join("images"),
                size: (size[0], size[1]),
                max_attempts: self.cfg.model.retry.max_attempts,
                base_backoff: Duration::from_millis(self.cfg.model.retry.base_backoff_ms),
                timeout: Duration::from_millis(self.cfg.model.timeout_ms),
            }),
        };
        Ok(FusionSources {
            event: EarthquakeParams::load(&self.cfg.event)?,
            vs30: RasterGrid::load(&d.vs30)?,
            buildings: BuildingIndex::new(fusion::load_buildings(&d.buildings)?),
            building_radius_m: d.building_radius_m,
            cbg_zones: geo::load_zones(&d.cbg, ZoneKind::BlockGroup, d.cbg_id_property.as_deref())?,
            acs: AcsTable::load(&d.acs)?,
            places: PlaceTable::load(&d.zip_county)?,
            images,
        })
    }

    pub fn cmd_fuse(&self) -> Result<StepOutcome, PipelineError> {
        self.require("fuse", "sample")?;
        if let Some(done) = self.begin("fuse")? {
            return Ok(done);
        }
        let points: Vec<SampledPoint> = read_jsonl(&self.points_path())?;
        let src = self.fusion_sources()?;
        let out = fusion::fuse_all(&points, &src, self.exec);
        // an unreachable imagery service is a transport problem, not bad data
        if !out.rejected.is_empty() && out.features.is_empty() && out.rejected.iter().all(|r| r.reason == fusion::RejectReason::ImageTransport) {
            return Err(PipelineError::Transport(out.rejected[0].detail.clone()));
        }
        log::info!("fuse: {} fused, {} rejected", out.features.len(), out.rejected.len());
        write_jsonl(&self.features_path(), &out.features)?;
        write_jsonl(&self.rejections_path(), &out.rejected)?;
        self.finish("fuse")
    }

    /// Renders every prompt; a sample whose prompt cannot be built (image
    /// unreadable) becomes a failure.
    pub fn render_all(&self, features: &[SampleFeatures]) -> Result<Vec<Result<RenderedPrompt, SimFailure>>, PipelineError> {
        let bank: Option<Vec<BankEntry>> = match (&self.cfg.demonstration_bank, self.cfg.prompt.rag_k) {
            (Some(p), k) if k > 0 => Some(read_jsonl(p)?),
            _ => None,
        };
        let spec = &self.cfg.prompt;
        let model = &self.cfg.model.model_id;
        Ok(self.exec.map(features, |_, x| {
            prompt::render_prompt(x, spec, bank.as_deref(), model).map_err(|e| SimFailure {
                sample_id: x.sample_id.clone(),
                zone_id: x.zone_id.clone(),
                reason: FailReason::ImageRead,
                detail: e.to_string(),
            })
        }))
    }

    pub fn cmd_simulate(&self) -> Result<StepOutcome, PipelineError> {
        self.require("simulate", "fuse")?;
        if let Some(done) = self.begin("simulate")? {
            return Ok(done);
        }
        let features: Vec<SampleFeatures> = read_jsonl(&self.features_path())?;
        let rendered = self.render_all(&features)?;
        let client = LlmClient::new(self.cfg.model.clone(), Some(&self.cfg.output_dir.join("cache"))).map_err(|e| match e {
            LlmError::Config(m) => PipelineError::Config(vec![m]),
            other => PipelineError::Transport(other.to_string()),
        })?;
        let prompts: Vec<RenderedPrompt> = rendered.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
        let mut answers = client.run_batch(&prompts, self.exec).into_iter();

        let mut predictions: Vec<Prediction> = Vec::new();
        let mut failures: Vec<SimFailure> = Vec::new();
        for r in &rendered {
            let outcome = match r {
                Ok(_) => answers.next().expect("one answer per prompt"),
                Err(f) => Err(f.clone()),
            };
            match outcome {
                Ok(p) => predictions.push(p),
                Err(f) => failures.push(f),
            }
        }
        log::info!("simulate: {} predictions, {} failures, {} requests sent", predictions.len(), failures.len(), client.network_calls());
        write_jsonl(&self.prompts_path(), &prompts)?;
        write_jsonl(&self.predictions_path(), &predictions)?;
        write_jsonl(&self.failures_path(), &failures)?;
        if predictions.is_empty() && !failures.is_empty() && failures.iter().all(|f| f.reason.is_transport()) {
            // no stamp: the step did not produce a usable result
            return Err(PipelineError::Transport(failures[0].detail.clone()));
        }
        self.finish("simulate")
    }

    pub fn cmd_evaluate(&self) -> Result<StepOutcome, PipelineError> {
        self.require("evaluate", "simulate")?;
        if let Some(done) = self.begin("evaluate")? {
            return Ok(done);
        }
        let preds: Vec<Prediction> = read_jsonl(&self.predictions_path())?;
        let truth = match &self.cfg.data_sources.dyfi {
            Some(p) => eval::load_dyfi(p)?,
            None => Vec::new(),
        };
        let places = PlaceTable::load(&self.cfg.data_sources.zip_county)?;
        let zip_to_county = places.zip_to_county();
        let kind = self.cfg.zones.kind;
        let mut report = eval::evaluate(&EvalInputs {
            model_id: &self.cfg.model.model_id,
            prompt_mode: &self.cfg.prompt.mode_tag(),
            predictions: &preds,
            zip_truth: &truth,
            zip_to_county: (kind == ZoneKind::Zip).then_some(&zip_to_county),
            weighting: self.cfg.evaluation.county_weighting,
        })?;
        if kind != ZoneKind::Zip {
            for s in &mut report.zip_scores {
                s.kind = kind;
            }
        }
        if truth.is_empty() {
            report.notes.push("no ground truth configured".into());
        }
        let dir = self.step_dir("evaluate");
        write_json(&dir.join("report.json"), &report)?;
        write_text(&dir.join("report.txt"), &report.to_text_table())?;
        self.finish("evaluate")
    }

    pub fn load_report(&self) -> Result<EvalReport, PipelineError> {
        read_json(&self.report_path())
    }

    pub fn cmd_analyze(&self) -> Result<StepOutcome, PipelineError> {
        self.require("analyze", "simulate")?;
        self.require("analyze", "fuse")?;
        if let Some(done) = self.begin("analyze")? {
            return Ok(done);
        }
        let dir = self.step_dir("analyze");
        let preds: Vec<Prediction> = read_jsonl(&self.predictions_path())?;
        let features: Vec<SampleFeatures> = read_jsonl(&self.features_path())?;
        let k = self.cfg.analysis.top_k;
        let mut notes = Vec::new();

        let mut write_terms = |name: &str, filter: Option<&analysis::Perspective>| -> Result<(), PipelineError> {
            let scores = match analysis::tfidf_by_mmi(&preds, filter, k) {
                Ok(s) => s,
                Err(e @ AnalysisError::SingleLevel(_)) => {
                    notes.push(format!("{name}: {e}"));
                    Vec::new()
                }
                Err(e) => return Err(e.into()),
            };
            let mut buf = Vec::new();
            analysis::write_terms_csv(&mut buf, &scores).map_err(AnalysisError::from)?;
            write_text(&dir.join(name), &String::from_utf8(buf).expect("utf-8"))
        };
        write_terms("terms_by_mmi.csv", None)?;
        for p in &self.cfg.analysis.perspectives {
            write_terms(&format!("terms_{}.csv", slug(&p.name)), Some(p))?;
        }

        let rows = analysis::scatter_rows(&preds, &features)?;
        let mut buf = Vec::new();
        analysis::write_scatter_csv(&mut buf, &rows).map_err(AnalysisError::from)?;
        write_text(&dir.join("scatter.csv"), &String::from_utf8(buf).expect("utf-8"))?;

        let mmi: Vec<f64> = rows.iter().map(|r| f64::from(r.mmi_pred)).collect();
        let dist: Vec<f64> = rows.iter().map(|r| r.distance_km).collect();
        let vs30: Vec<f64> = rows.iter().map(|r| r.vs30_ms).collect();
        let summary = AnalysisSummary {
            n_rows: rows.len(),
            spearman_distance_mmi: analysis::spearman(&dist, &mmi).ok(),
            spearman_vs30_mmi: analysis::spearman(&vs30, &mmi).ok(),
            notes,
        };
        write_json(&dir.join("summary.json"), &summary)?;
        self.finish("analyze")
    }

    pub fn cmd_export(&self) -> Result<StepOutcome, PipelineError> {
        self.require("export", "evaluate")?;
        if let Some(done) = self.begin("export")? {
            return Ok(done);
        }
        let dir = self.step_dir("export");
        let report = self.load_report()?;
        let zones = self.load_zones()?;
        let event = EarthquakeParams::load(&self.cfg.event)?;
        let geojson = export::export_choropleth(&report.zip_scores, &zones, Some(event.epicenter))?;
        write_text(&dir.join("choropleth.geojson"), &geojson)?;
        write_json(&dir.join("metrics.json"), &report)?;
        write_text(&dir.join("metrics.txt"), &report.to_text_table())?;

        let aggregated = report.zip_scores.iter().map(|s| s.zone_id.clone()).collect();
        let manifest = self.build_manifest(aggregated, RunStatus::Complete, None)?;
        manifest.write(&dir.join("manifest.json"))?;
        self.finish("export")
    }

    /// Counts and reasons from the stage artifacts on disk.
    fn build_manifest(&self, aggregated_zones: Vec<String>, status: RunStatus, error: Option<String>) -> Result<RunManifest, PipelineError> {
        let points: Vec<SampledPoint> = read_jsonl(&self.points_path())?;
        let features: Vec<SampleFeatures> = read_jsonl(&self.features_path())?;
        let rejected: Vec<Rejection> = read_jsonl(&self.rejections_path())?;
        let preds: Vec<Prediction> = read_jsonl(&self.predictions_path())?;
        let failed: Vec<SimFailure> = read_jsonl(&self.failures_path())?;
        let counts = export::tally(
            &count_by_zone(points.iter().map(|p| p.zone_id.as_str())),
            &count_by_zone(features.iter().map(|f| f.zone_id.as_str())),
            &rejected,
            &count_by_zone(preds.iter().map(|p| p.zone_id.as_str())),
            &failed,
        );
        let mut totals = export::StageCounts::default();
        counts.values().for_each(|c| totals.add(c));
        Ok(RunManifest {
            status,
            error,
            config_digest: self.config_digest.clone(),
            seed: self.cfg.sample_plan.seed,
            model_id: self.cfg.model.model_id.clone(),
            temperature: self.cfg.model.temperature,
            prompt_mode: self.cfg.prompt.mode_tag(),
            prompt: serde_json::to_value(&self.cfg.prompt).expect("prompt spec serializes"),
            county_weighting: json_string(&self.cfg.evaluation.county_weighting).trim_matches('"').to_string(),
            counts,
            totals,
            rejection_reasons: count_by_zone(rejected.iter().map(|r| r.reason.code())),
            failure_reasons: count_by_zone(failed.iter().map(|f| f.reason.code())),
            rejected_samples: rejected,
            failed_samples: failed,
            aggregated_zones,
            started: self.started,
            finished: Utc::now(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    /// All steps in order. If a step after fusion fails, a manifest with
    /// status `failed` is still written to the export directory (without a
    /// stamp) so the accounting of the partial run is kept.
    pub fn cmd_run(&self) -> Result<Vec<StepOutcome>, PipelineError> {
        let mut out = vec![self.cmd_sample()?, self.cmd_fuse()?];
        let rest: [fn(&Self) -> Result<StepOutcome, PipelineError>; 4] = [Self::cmd_simulate, Self::cmd_evaluate, Self::cmd_analyze, Self::cmd_export];
        for step in rest {
            match step(self) {
                Ok(o) => out.push(o),
                Err(e) => {
                    self.write_failure_manifest(&e);
                    return Err(e);
                }
            }
        }
        Ok(out)
    }

    fn write_failure_manifest(&self, err: &PipelineError) {
        if !(self.predictions_path().is_file() && self.failures_path().is_file()) {
            log::warn!("no simulation results; not writing a manifest for the failed run");
            return;
        }
        let dir = self.step_dir("export");
        let written = self
            .build_manifest(Vec::new(), RunStatus::Failed, Some(err.to_string()))
            .and_then(|m| {
                // stale outputs of an earlier successful run would contradict the manifest
                if dir.is_dir() {
                    fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
                }
                fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                Ok(m.write(&dir.join("manifest.json"))?)
            });
        if let Err(e) = written {
            log::warn!("could not write manifest for the failed run: {e}");
        }
    }

    pub fn run_step(&self, step: &str) -> Result<StepOutcome, PipelineError> {
        match step {
            "sample" => self.cmd_sample(),
            "fuse" => self.cmd_fuse(),
            "simulate" => self.cmd_simulate(),
            "evaluate" => self.cmd_evaluate(),
            "analyze" => self.cmd_analyze(),
            "export" => self.cmd_export(),
            other => Err(PipelineError::Config(vec![format!("unknown step {other:?}")])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub n_rows: usize,
    pub spearman_distance_mmi: Option<f64>,
    pub spearman_vs30_mmi: Option<f64>,
    pub notes: Vec<String>,
}

#[cfg(unix)]
fn link_dir(target: &Path, link: &Path) -> std::io::Result<()> {
    std::os::unix::fs::symlink(target, link)
}

#[cfg(not(unix))]
fn link_dir(target: &Path, link: &Path) -> std::io::Result<()> {
    // no portable directory symlink; copy instead
    fs::create_dir_all(link)?;
    for e in fs::read_dir(target)? {
        let e = e?;
        fs::copy(e.path(), link.join(e.file_name()))?;
    }
    Ok(())
}

/// Runs several configurations. Sampling and fusion are computed once per
/// distinct input set; other configs with identical inputs get symlinks to
/// the first one's `sample/` and `fuse/` directories.
pub fn sweep(configs: Vec<RunConfig>, force: bool) -> Result<Vec<EvalReport>, PipelineError> {
    let pipelines = configs.into_iter().map(|c| Pipeline::new(c, force)).collect::<Result<Vec<_>, _>>()?;
    let mut owners: Vec<&Pipeline> = Vec::new();
    let mut reports = Vec::with_capacity(pipelines.len());
    for p in &pipelines {
        let owner = owners.iter().find(|o| o.digests.fuse == p.digests.fuse && o.cfg.output_dir != p.cfg.output_dir).copied();
        match owner {
            Some(o) => {
                for step in ["sample", "fuse"] {
                    let link = p.step_dir(step);
                    let target = o.step_dir(step);
                    if link.is_symlink() && fs::read_link(&link).ok().as_deref() == Some(target.as_path()) {
                        continue;
                    }
                    if link.is_symlink() {
                        fs::remove_file(&link).map_err(io_err(&link))?;
                    } else if link.exists() {
                        fs::remove_dir_all(&link).map_err(io_err(&link))?;
                    }
                    link_dir(&target, &link).map_err(io_err(&link))?;
                }
            }
            None => {
                p.cmd_sample()?;
                p.cmd_fuse()?;
                owners.push(p);
            }
        }
        p.cmd_simulate()?;
        p.cmd_evaluate()?;
        p.cmd_analyze()?;
        p.cmd_export()?;
        reports.push(p.load_report()?);
    }
    Ok(reports)
}

/// One aligned table for several reports.
pub fn sweep_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    for (i, r) in reports.iter().enumerate() {
        let table = r.to_text_table();
        let mut lines = table.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            out.push_str(header);
            out.push('\n');
        }
        if let Some(row) = lines.next() {
            out.push_str(row);
            out.push('\n');
        }
    }
    out
}

/// Deletes a step's stamp so the next run recomputes it.
pub fn invalidate(dir: &Path) -> std::io::Result<()> {
    match fs::remove_file(dir.join(STAMP)) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}

impl std::fmt::Display for StepOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let what = if self.reused { "reused" } else { "wrote" };
        write!(f, "{:<9} {what} {}", self.step, self.dir.display())
    }
}

/// Writes a line-per-step summary.
pub fn print_outcomes<W: Write>(mut w: W, outcomes: &[StepOutcome]) -> std::io::Result<()> {
    for o in outcomes {
        writeln!(w, "{o}")?;
    }
    Ok(())
}
