//! Run configuration file (JSON). Relative paths are resolved against the
//! directory containing the config file. The schema is published in
//! `docs/config.schema.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{Perspective, DEFAULT_TOP_K};
use crate::eval::CountyWeighting;
use crate::fusion::DEFAULT_BUILDING_RADIUS_M;
use crate::geo::{SamplePlan, ZoneKind};
use crate::llm::ModelConfig;
use crate::prompt::{PromptSpec, Section};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZonesSource {
    pub path: PathBuf,
    #[serde(default = "default_kind")]
    pub kind: ZoneKind,
    /// Feature property holding the zone id; defaults per kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_property: Option<String>,
}

fn default_kind() -> ZoneKind {
    ZoneKind::Zip
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImageSource {
    /// Pre-fetched images named `<sample_id>.jpg`.
    Directory { path: PathBuf },
    /// Street View Static style endpoint; images are cached under the
    /// output directory.
    StreetView {
        endpoint: String,
        api_key_env: String,
        #[serde(default = "default_image_size")]
        size: [u32; 2],
    },
}

fn default_image_size() -> [u32; 2] {
    [640, 640]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSources {
    pub vs30: PathBuf,
    pub buildings: PathBuf,
    /// Block-group polygons (GeoJSON).
    pub cbg: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cbg_id_property: Option<String>,
    pub acs: PathBuf,
    /// CSV `zip,county,city,state`.
    pub zip_county: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<ImageSource>,
    /// CSV `zone_id,cdi,nresp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dyfi: Option<PathBuf>,
    #[serde(default = "default_radius")]
    pub building_radius_m: f64,
}

fn default_radius() -> f64 {
    DEFAULT_BUILDING_RADIUS_M
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub county_weighting: CountyWeighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub top_k: usize,
    pub perspectives: Vec<Perspective>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            perspectives: Perspective::defaults(),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Event file `{id, place, lat, lon, mag, depth, date}`.
    pub event: PathBuf,
    pub zones: ZonesSource,
    #[serde(default)]
    pub sample_plan: SamplePlan,
    pub data_sources: DataSources,
    #[serde(default)]
    pub prompt: PromptSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub evaluation: EvalSettings,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    pub output_dir: PathBuf,
    /// JSONL of `{features, mmi}` records; required when `prompt.rag_k > 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demonstration_bank: Option<PathBuf>,
    /// Use the data-parallel path where available.
    #[serde(default = "yes")]
    pub parallel: bool,
}

/// Command-line adjustments applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub ablate: Vec<Section>,
    pub redact_location: bool,
    pub icl: bool,
    pub rag_k: Option<usize>,
    pub seed: Option<u64>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, Vec<String>> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| vec![format!("config: {e}")])?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("cannot read config {}: {e}", path.display())])?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.event);
        resolve(base, &mut self.zones.path);
        let d = &mut self.data_sources;
        for p in [&mut d.vs30, &mut d.buildings, &mut d.cbg, &mut d.acs, &mut d.zip_county] {
            resolve(base, p);
        }
        if let Some(p) = d.dyfi.as_mut() {
            resolve(base, p);
        }
        if let Some(ImageSource::Directory { path }) = d.images.as_mut() {
            resolve(base, path);
        }
        if let Some(p) = self.demonstration_bank.as_mut() {
            resolve(base, p);
        }
        resolve(base, &mut self.output_dir);
    }

    pub fn apply(&mut self, o: &Overrides) {
        for s in &o.ablate {
            self.prompt.sections.remove(s);
        }
        self.prompt.redact_location |= o.redact_location;
        self.prompt.icl_mmi_guide |= o.icl;
        if let Some(k) = o.rag_k {
            self.prompt.rag_k = k;
        }
        if let Some(seed) = o.seed {
            self.sample_plan.seed = seed;
        }
    }

    /// Every problem found, not only the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut need_file = |label: &str, p: &Path| {
            if !p.is_file() {
                errs.push(format!("{label}: file {} not found", p.display()));
            }
        };
        need_file("event", &self.event);
        need_file("zones.path", &self.zones.path);
        let d = &self.data_sources;
        need_file("data_sources.vs30", &d.vs30);
        need_file("data_sources.buildings", &d.buildings);
        need_file("data_sources.cbg", &d.cbg);
        need_file("data_sources.acs", &d.acs);
        need_file("data_sources.zip_county", &d.zip_county);
        if let Some(p) = &d.dyfi {
            need_file("data_sources.dyfi", p);
        }
        if let Some(p) = &self.demonstration_bank {
            need_file("demonstration_bank", p);
        }
        if let Some(ImageSource::Directory { path }) = &d.images {
            if !path.is_dir() {
                errs.push(format!("data_sources.images: directory {} not found", path.display()));
            }
        }
        if !(d.building_radius_m.is_finite() && d.building_radius_m > 0.0) {
            errs.push(format!("data_sources.building_radius_m {} must be > 0", d.building_radius_m));
        }
        if let Err(e) = self.sample_plan.validate() {
            errs.push(format!("sample_plan: {e}"));
        }
        errs.extend(self.model.validate());
        if chrono::NaiveDate::parse_from_str(&self.prompt.assumed_event_date, "%Y-%m-%d").is_err() {
            errs.push(format!("prompt.assumed_event_date {:?} is not YYYY-MM-DD", self.prompt.assumed_event_date));
        }
        if self.prompt.rag_k > 0 && self.demonstration_bank.is_none() {
            errs.push(format!("prompt.rag_k = {} requires demonstration_bank", self.prompt.rag_k));
        }
        if self.analysis.top_k == 0 {
            errs.push("analysis.top_k must be >= 1".into());
        }
        match std::fs::create_dir_all(&self.output_dir) {
            Ok(()) => {
                let probe = self.output_dir.join(".write_probe");
                if std::fs::write(&probe, b"").and_then(|_| std::fs::remove_file(&probe)).is_err() {
                    errs.push(format!("output_dir {} is not writable", self.output_dir.display()));
                }
            }
            Err(e) => errs.push(format!("output_dir {}: {e}", self.output_dir.display())),
        }
        errs
    }
}
