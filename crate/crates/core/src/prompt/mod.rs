//! Prompt rendering.
//!
//! The user message is assembled from fixed blocks: the earthquake/location
//! header, one block per enabled feature section, an optional block of
//! retrieved reference cases, and the assessment instructions with the JSON
//! output contract. Every number is formatted with a fixed precision so
//! that rendering is byte-stable:
//!
//! | field | format |
//! |---|---|
//! | coordinates | 6 decimals |
//! | magnitude | 1 decimal |
//! | depth, distance, heights | 2 decimals |
//! | VS30 | integer |
//! | density, percentages | 2 decimals |
//! | income | integer, no separators |

mod rag;
mod template;

pub use rag::{feature_vector, features_digest, select_demonstrations, BankEntry, Demonstration, Selection};
pub use template::{substitute, MMI_RANGE_LINE, SYSTEM_PROMPT};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fusion::{BuildingSummary, SampleFeatures, StreetImage, UNSPECIFIED_TYPE};
use crate::mmi::mmi_scale_text;

pub const DEFAULT_EVENT_DATE: &str = "2025-06-01";
pub const DEFAULT_RAG_K: usize = 3;
pub const REDACTION_MARK: &str = "[REDACTED]";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("placeholder {{{0}}} has no value")]
    Unresolved(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("rag_k = {0} but no demonstration bank was supplied")]
    MissingBank(usize),
    #[error("cannot read image {path}: {source}")]
    Image {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Geospatial,
    Building,
    Socioeconomic,
    Visual,
}

impl Section {
    pub const ALL: [Section; 4] = [Section::Geospatial, Section::Building, Section::Socioeconomic, Section::Visual];

    pub fn name(self) -> &'static str {
        match self {
            Section::Geospatial => "geospatial",
            Section::Building => "building",
            Section::Socioeconomic => "socioeconomic",
            Section::Visual => "visual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }

    fn header(self) -> &'static str {
        match self {
            Section::Geospatial => "## Geospatial features in YOUR LOCATION",
            Section::Building => "## Building Description in YOUR LOCATION",
            Section::Socioeconomic => "## Community Socioecnomics and Demographics in YOUR LOCATION",
            Section::Visual => "## Visual Context in YOUR LOCATION",
        }
    }
}

/// Which prompt parts are active for a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSpec {
    pub sections: BTreeSet<Section>,
    pub icl_mmi_guide: bool,
    pub rag_k: usize,
    pub redact_location: bool,
    pub assumed_event_date: String,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self {
            sections: Section::ALL.into_iter().collect(),
            icl_mmi_guide: false,
            rag_k: 0,
            redact_location: false,
            assumed_event_date: DEFAULT_EVENT_DATE.to_string(),
        }
    }
}

impl PromptSpec {
    /// Short stable label, e.g. `base`, `icl-rag3`, `redact-no_building`.
    pub fn mode_tag(&self) -> String {
        let mut parts = Vec::new();
        if self.icl_mmi_guide {
            parts.push("icl".to_string());
        }
        if self.rag_k > 0 {
            parts.push(format!("rag{}", self.rag_k));
        }
        if self.redact_location {
            parts.push("redact".to_string());
        }
        for s in Section::ALL {
            if !self.sections.contains(&s) {
                parts.push(format!("no_{}", s.name()));
            }
        }
        if self.assumed_event_date != DEFAULT_EVENT_DATE {
            parts.push(format!("date{}", self.assumed_event_date));
        }
        if parts.is_empty() {
            "base".to_string()
        } else {
            parts.join("-")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub sample_id: String,
    pub zone_id: String,
    pub system_text: String,
    pub user_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<StreetImage>,
    pub prompt_hash: String,
}

impl RenderedPrompt {
    pub fn image_path(&self) -> Option<&std::path::Path> {
        self.image.as_ref().and_then(StreetImage::path)
    }
}

/// SHA-256 over system text, user text, image bytes and model id, each
/// field length-prefixed.
pub fn prompt_hash(system: &str, user: &str, image: Option<&[u8]>, model_id: &str) -> String {
    let mut h = Sha256::new();
    for part in [system.as_bytes(), user.as_bytes(), image.unwrap_or(&[]), model_id.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

fn fmt_opt_height(v: Option<f64>) -> String {
    v.map(|h| format!("{h:.2}")).unwrap_or_default()
}

/// Deterministic narrative for the `{building}` placeholder: count, top
/// three tagged types, height range and mean, top three materials.
pub fn building_narrative(b: &BuildingSummary) -> String {
    if b.count == 0 {
        return "No buildings recorded.".to_string();
    }
    let mut out = if b.count == 1 {
        "1 building.".to_string()
    } else {
        format!("{} buildings.", b.count)
    };

    let mut types: Vec<(&String, &usize)> = b.type_distribution.iter().filter(|(t, _)| *t != UNSPECIFIED_TYPE).collect();
    types.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    if types.is_empty() {
        out.push_str(" Types: not tagged.");
    } else {
        let list: Vec<String> = types.iter().take(3).map(|(t, n)| format!("{t} ({n})")).collect();
        out.push_str(&format!(" Types: {}.", list.join(", ")));
    }

    match (b.height_min, b.height_max, b.height_avg) {
        (Some(_), Some(_), Some(avg)) => out.push_str(&format!(
            " Height range {}-{} m, average {avg:.2} m.",
            fmt_opt_height(b.height_min),
            fmt_opt_height(b.height_max)
        )),
        _ => out.push_str(" Height data unavailable."),
    }

    let mut mats: Vec<(&String, &f64)> = b.material_prevalence.iter().collect();
    mats.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    if mats.is_empty() {
        out.push_str(" Material data unavailable.");
    } else {
        let list: Vec<String> = mats.iter().take(3).map(|(m, f)| format!("{m} {:.2}%", *f * 100.0)).collect();
        out.push_str(&format!(" Materials: {}.", list.join(", ")));
    }
    out
}

fn placeholder_values<'a>(x: &SampleFeatures, spec: &PromptSpec) -> BTreeMap<&'a str, String> {
    let eq = &x.earthquake;
    let loc = &x.location;
    let s = &x.socioeconomics;
    let mut v = BTreeMap::new();
    v.insert("event_date", spec.assumed_event_date.clone());
    v.insert("eq_place", eq.place.clone());
    v.insert("eq_lat", format!("{:.6}", eq.epicenter.lat));
    v.insert("eq_lng", format!("{:.6}", eq.epicenter.lon));
    v.insert("eq_magnitude", format!("{:.1}", eq.magnitude));
    v.insert("eq_depth", format!("{:.2}", eq.depth_km));
    v.insert("state", loc.state.clone());
    v.insert("city", loc.city.clone());
    v.insert("zipcode", loc.zipcode.clone());
    v.insert("lat", format!("{:.6}", loc.coords.lat));
    v.insert("lng", format!("{:.6}", loc.coords.lon));
    v.insert("distance", format!("{:.2}", loc.epicentral_distance_km));
    v.insert("vs30", format!("{:.0}", x.site.vs30));
    v.insert("building", building_narrative(&x.buildings));
    v.insert("population_density", format!("{:.2}", s.population_density));
    v.insert("urban_population_pct", format!("{:.2}", s.urban_pct));
    v.insert("over_65_rate", format!("{:.2}", s.over65_pct));
    v.insert("median_household_income", format!("{:.0}", s.median_income));
    v.insert("education", format!("{:.2}", s.bachelor_pct));
    v.insert(
        "MMI Scale",
        if spec.icl_mmi_guide {
            format!("\n{}", mmi_scale_text())
        } else {
            MMI_RANGE_LINE.to_string()
        },
    );
    v
}

/// Sections that actually render for `x`: the visual block needs both the
/// section enabled and an available image.
pub fn effective_sections(x: &SampleFeatures, spec: &PromptSpec) -> BTreeSet<Section> {
    spec.sections
        .iter()
        .copied()
        .filter(|s| *s != Section::Visual || x.image.path().is_some())
        .collect()
}

fn redact(text: &str, needles: &[&str]) -> String {
    let mut out = text.to_string();
    for needle in needles.iter().filter(|n| !n.is_empty()) {
        let mark = if REDACTION_MARK.contains(needle) { "" } else { REDACTION_MARK };
        out = out.replace(needle, mark);
        // a replacement can splice a new occurrence together; repeat until gone
        while out.contains(needle) {
            out = out.replace(needle, "");
        }
    }
    out
}

/// Renders the system and user messages for one sample.
pub fn render_prompt(
    x: &SampleFeatures,
    spec: &PromptSpec,
    bank: Option<&[BankEntry]>,
    model_id: &str,
) -> Result<RenderedPrompt, PromptError> {
    let values = placeholder_values(x, spec);
    let sections = effective_sections(x, spec);

    let mut user = template::substitute(template::HEADER, &values)?;
    for s in &sections {
        let block = match s {
            Section::Geospatial => template::GEOSPATIAL,
            Section::Building => template::BUILDING,
            Section::Socioeconomic => template::SOCIOECONOMIC,
            Section::Visual => template::VISUAL,
        };
        user.push_str(&template::substitute(block, &values)?);
    }
    if spec.rag_k > 0 {
        let bank = bank.ok_or(PromptError::MissingBank(spec.rag_k))?;
        let selection = select_demonstrations(x, bank, spec.rag_k);
        user.push_str(template::REFERENCE_HEADER);
        for (i, d) in selection.demonstrations.iter().enumerate() {
            user.push_str(&format!("{}. {} Reported MMI: {}\n", i + 1, d.features_digest, d.reported_mmi));
        }
        user.push('\n');
    }
    user.push_str(&template::substitute(template::ASSESSMENT, &values)?);

    if spec.redact_location {
        user = redact(&user, &[&x.location.state, &x.location.city]);
    }

    let image = sections.contains(&Section::Visual).then(|| x.image.clone());
    let bytes = match image.as_ref().and_then(StreetImage::path) {
        Some(path) => Some(std::fs::read(path).map_err(|source| PromptError::Image {
            path: path.to_path_buf(),
            source,
        })?),
        None => None,
    };
    let system_text = SYSTEM_PROMPT.to_string();
    let prompt_hash = prompt_hash(&system_text, &user, bytes.as_deref(), model_id);
    Ok(RenderedPrompt {
        sample_id: x.sample_id.clone(),
        zone_id: x.zone_id.clone(),
        system_text,
        user_text: user,
        image,
        prompt_hash,
    })
}

/// Count of `## ` section headers in a rendered user message.
pub fn section_header_count(user_text: &str) -> usize {
    user_text.lines().filter(|l| l.starts_with("## ")).count()
}

/// Whether a section's header appears in a rendered user message.
pub fn has_section(user_text: &str, s: Section) -> bool {
    user_text.lines().any(|l| l.starts_with(s.header()))
}

/// `{name}` style placeholders left in text (JSON braces spanning lines do
/// not count).
pub fn unresolved_placeholders(text: &str) -> Vec<String> {
    let re = regex::Regex::new(r"\{[A-Za-z_][A-Za-z0-9_ ]*\}").expect("static regex");
    re.find_iter(text).map(|m| m.as_str().to_string()).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::fusion::ImageStatus;
    use crate::mmi::MmiLevel;
    use proptest::prelude::*;

    pub(crate) fn fixture() -> SampleFeatures {
        serde_json::from_str(include_str!("../../tests/fixtures/sample_san_diego.json")).unwrap()
    }

    fn text_only() -> SampleFeatures {
        let mut x = fixture();
        x.image = StreetImage::missing();
        x
    }

    fn with_image(dir: &std::path::Path) -> SampleFeatures {
        let mut x = fixture();
        let path = dir.join("92104-000.jpg");
        image::RgbImage::from_pixel(2, 2, image::Rgb([1, 2, 3]))
            .save_with_format(&path, image::ImageFormat::Png)
            .unwrap();
        x.image = StreetImage::available(path);
        x
    }

    fn bank(n: usize) -> Vec<BankEntry> {
        (0..n)
            .map(|i| {
                let mut f = fixture();
                f.sample_id = format!("94558-{i:03}");
                f.location.epicentral_distance_km = 5.0 + 7.0 * i as f64;
                f.site.vs30 = 250.0 + 13.0 * ((i * 7) % 11) as f64;
                f.socioeconomics.population_density = 50.0 * (1 + (i * 3) % 17) as f64;
                f.buildings.count = (i * 5) % 23;
                BankEntry {
                    features: f,
                    mmi: MmiLevel::new(1 + (i % 12) as u8).unwrap(),
                }
            })
            .collect()
    }

    #[test]
    fn golden_text_only() {
        let r = render_prompt(&text_only(), &PromptSpec::default(), None, "m").unwrap();
        assert_eq!(r.user_text, include_str!("../../tests/fixtures/golden/san_diego_text.txt"));
        assert_eq!(r.system_text, SYSTEM_PROMPT);
    }

    #[test]
    fn narrative_format() {
        let x = fixture();
        assert_eq!(
            building_narrative(&x.buildings),
            "5 buildings. Types: house (3), school (1). Height range 4.50-12.00 m, average 7.25 m. Materials: wood 40.00%, brick 20.00%."
        );
        assert_eq!(building_narrative(&BuildingSummary::default()), "No buildings recorded.");
    }

    #[test]
    fn visual_omission_equivalence() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = PromptSpec::default();
        spec.sections.remove(&Section::Visual);
        let a = render_prompt(&text_only(), &spec, None, "m").unwrap();
        let b = render_prompt(&with_image(dir.path()), &spec, None, "m").unwrap();
        assert_eq!(a.user_text, b.user_text);
        assert_eq!(a.prompt_hash, b.prompt_hash);
        assert!(b.image.is_none());
        // with the section enabled, a missing image silently degrades to text-only
        let c = render_prompt(&text_only(), &PromptSpec::default(), None, "m").unwrap();
        assert_eq!(c.user_text, a.user_text);
        let d = render_prompt(&with_image(dir.path()), &PromptSpec::default(), None, "m").unwrap();
        assert!(has_section(&d.user_text, Section::Visual));
        assert_eq!(d.image.as_ref().unwrap().status, ImageStatus::Available);
        assert_ne!(d.prompt_hash, c.prompt_hash);
    }

    #[test]
    fn hash_depends_on_model_and_is_stable() {
        let x = text_only();
        let spec = PromptSpec::default();
        let a = render_prompt(&x, &spec, None, "gpt-4.1-mini").unwrap();
        assert_eq!(a, render_prompt(&x, &spec, None, "gpt-4.1-mini").unwrap());
        assert_ne!(a.prompt_hash, render_prompt(&x, &spec, None, "claude-3-5-haiku").unwrap().prompt_hash);
        assert_eq!(a.prompt_hash.len(), 64);
    }

    #[test]
    fn ablation_removes_header_and_fields() {
        let x = text_only();
        for s in [Section::Geospatial, Section::Building, Section::Socioeconomic] {
            let mut spec = PromptSpec::default();
            spec.sections.remove(&s);
            let r = render_prompt(&x, &spec, None, "m").unwrap();
            assert!(!has_section(&r.user_text, s));
            let gone: &[&str] = match s {
                Section::Geospatial => &["VS30 at your location", "417 m/s"],
                Section::Building => &["Building description", "5 buildings"],
                Section::Socioeconomic => &["Population density:", "9318.61", "93750", "Over 65 percentage"],
                Section::Visual => unreachable!(),
            };
            for g in gone {
                assert!(!r.user_text.contains(g), "{s:?} left {g:?}");
            }
            assert_eq!(section_header_count(&r.user_text), 2);
        }
    }

    #[test]
    fn rag_requires_bank_and_inserts_block() {
        let x = text_only();
        let spec = PromptSpec {
            rag_k: 3,
            ..Default::default()
        };
        assert!(matches!(render_prompt(&x, &spec, None, "m"), Err(PromptError::MissingBank(3))));
        let b = bank(50);
        let r = render_prompt(&x, &spec, Some(&b), "m").unwrap();
        let refs = r.user_text.find("## Reference Cases").unwrap();
        assert!(refs < r.user_text.find("Based on the information provided").unwrap());
        assert_eq!(r.user_text.matches("Reported MMI: ").count(), 3);
        assert_eq!(section_header_count(&r.user_text), 4);
    }

    #[test]
    fn k_zero_and_exact_duplicate() {
        let x = text_only();
        let mut b = bank(20);
        assert!(select_demonstrations(&x, &b, 0).demonstrations.is_empty());
        let mut dup = x.clone();
        dup.sample_id = "zz-dup".into();
        b.push(BankEntry {
            features: dup,
            mmi: MmiLevel::new(3).unwrap(),
        });
        let sel = select_demonstrations(&x, &b, 4);
        assert_eq!(sel.demonstrations[0].source_sample_id, "zz-dup");
        assert!(!sel.capped);
        assert!(select_demonstrations(&x, &b, 100).capped);
        assert_eq!(select_demonstrations(&x, &b, 100).demonstrations.len(), 21);
    }

    /// Exhaustive scan with scaling computed independently via two-pass
    /// sample statistics on each column.
    #[test]
    fn knn_matches_exhaustive_oracle() {
        let b = bank(50);
        let mut x = text_only();
        x.location.epicentral_distance_km = 123.0;
        x.site.vs30 = 301.0;
        let cols: Vec<Vec<f64>> = (0..4).map(|j| b.iter().map(|e| feature_vector(&e.features)[j]).collect()).collect();
        let stats: Vec<(f64, f64)> = cols
            .iter()
            .map(|c| {
                let m = c.iter().sum::<f64>() / c.len() as f64;
                let s = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64).sqrt();
                (m, if s == 0.0 { 1.0 } else { s })
            })
            .collect();
        let xv = feature_vector(&x);
        let mut all: Vec<(f64, String)> = b
            .iter()
            .map(|e| {
                let v = feature_vector(&e.features);
                let d2: f64 = (0..4).map(|j| ((v[j] - xv[j]) / stats[j].1).powi(2)).sum();
                (d2, e.features.sample_id.clone())
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let expect: Vec<String> = all[..3].iter().map(|e| e.1.clone()).collect();
        let got: Vec<String> = select_demonstrations(&x, &b, 3).demonstrations.into_iter().map(|d| d.source_sample_id).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn unresolved_placeholder_detection() {
        assert_eq!(unresolved_placeholders("a {city} b"), vec!["{city}"]);
        let r = render_prompt(&text_only(), &PromptSpec::default(), None, "m").unwrap();
        assert!(unresolved_placeholders(&r.user_text).is_empty());
        assert!(r.user_text.contains("{\n    \"Reasoning\""));
    }

    #[test]
    fn redaction_splice() {
        assert_eq!(redact("San Diego, California", &["California", "San Diego"]), "[REDACTED], [REDACTED]");
        let out = redact("RED alert", &["RED"]);
        assert!(!out.contains("RED"));
    }

    fn arb_spec() -> impl Strategy<Value = PromptSpec> {
        (any::<[bool; 4]>(), any::<bool>(), 0usize..5, any::<bool>()).prop_map(|(mask, icl, k, redact)| PromptSpec {
            sections: Section::ALL.into_iter().zip(mask).filter(|(_, m)| *m).map(|(s, _)| s).collect(),
            icl_mmi_guide: icl,
            rag_k: k,
            redact_location: redact,
            assumed_event_date: DEFAULT_EVENT_DATE.into(),
        })
    }

    proptest! {
        #[test]
        fn render_properties(spec in arb_spec()) {
            let x = text_only();
            let b = bank(12);
            let r = render_prompt(&x, &spec, Some(&b), "m").unwrap();
            prop_assert_eq!(&r, &render_prompt(&x, &spec, Some(&b), "m").unwrap());
            prop_assert!(unresolved_placeholders(&r.user_text).is_empty());
            let expected = effective_sections(&x, &spec).len() + usize::from(spec.rag_k > 0);
            prop_assert_eq!(section_header_count(&r.user_text), expected);
            if spec.redact_location {
                prop_assert!(!r.user_text.contains(&x.location.state));
                prop_assert!(!r.user_text.contains(&x.location.city));
            }
            let mut more = spec.clone();
            more.rag_k += 1;
            let longer = render_prompt(&x, &more, Some(&b), "m").unwrap();
            prop_assert!(longer.user_text.len() > r.user_text.len());
        }
    }
}
