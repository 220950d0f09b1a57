//! Offline stand-in model: a simple magnitude/distance attenuation rule
//! read back out of the rendered prompt. Used to exercise the pipeline
//! without network access. It is not a ground-motion model.

use std::sync::OnceLock;

use regex::Regex;

use super::parse::serialize_response;
use crate::mmi::MmiLevel;
use crate::prompt::RenderedPrompt;

pub const MOCK_ENDPOINT: &str = "mock://attenuation";

pub fn attenuation_mmi(magnitude: f64, distance_km: f64) -> MmiLevel {
    let raw = (1.5 * magnitude - 3.0 * (distance_km + 10.0).log10() + 3.0).round();
    MmiLevel::new(raw.clamp(1.0, 12.0) as u8).expect("clamped into range")
}

fn field(text: &str, re: &'static OnceLock<Regex>, pattern: &str) -> Option<f64> {
    re.get_or_init(|| Regex::new(pattern).expect("static regex"))
        .captures(text)
        .and_then(|c| c[1].parse().ok())
}

/// Returns the raw answer text, or an error naming the field that could not
/// be found (which means the prompt template changed).
pub fn mock_attenuation_model(p: &RenderedPrompt) -> Result<String, String> {
    static MAG: OnceLock<Regex> = OnceLock::new();
    static DIST: OnceLock<Regex> = OnceLock::new();
    let m = field(&p.user_text, &MAG, r"(?m)^- Magnitude: (-?[0-9.]+) mw").ok_or("magnitude not found in prompt")?;
    let d = field(&p.user_text, &DIST, r"(?m)^- Distance from epicenter: ([0-9.]+) km")
        .ok_or("distance not found in prompt")?;
    let level = attenuation_mmi(m, d);
    let reasoning = format!(
        "Magnitude {m:.1} event at {d:.2} km from the epicenter. Attenuation with distance suggests intensity {}: {}",
        level.roman(),
        level.descriptor()
    );
    Ok(serialize_response(level, &reasoning))
}

/// Text that contains no JSON object, for fault-injection runs.
pub const GARBLED_RESPONSE: &str = "I am unable to determine an intensity level from this information.";
