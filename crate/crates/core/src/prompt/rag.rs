//! Nearest-neighbour selection of historical demonstrations.

use serde::{Deserialize, Serialize};

use crate::fusion::SampleFeatures;
use crate::mmi::MmiLevel;

/// A historical sample with its reported intensity (one JSONL line of the
/// demonstration bank).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub features: SampleFeatures,
    pub mmi: MmiLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub source_sample_id: String,
    pub features_digest: String,
    pub reported_mmi: MmiLevel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Selection {
    pub demonstrations: Vec<Demonstration>,
    /// `k` exceeded the bank size and was reduced to it.
    pub capped: bool,
}

/// Retrieval features: epicentral distance, VS30, log density, building count.
pub fn feature_vector(x: &SampleFeatures) -> [f64; 4] {
    [
        x.location.epicentral_distance_km,
        x.site.vs30,
        x.socioeconomics.population_density.ln_1p(),
        x.buildings.count as f64,
    ]
}

/// Compact description of a historical case. Carries no place names.
pub fn features_digest(x: &SampleFeatures) -> String {
    format!(
        "M{:.1} earthquake at {:.2} km (depth {:.2} km); VS30 {:.0} m/s; {} buildings within 100 m; population density {:.2} people per square km; median household income ${:.0}/year.",
        x.earthquake.magnitude,
        x.location.epicentral_distance_km,
        x.earthquake.depth_km,
        x.site.vs30,
        x.buildings.count,
        x.socioeconomics.population_density,
        x.socioeconomics.median_income,
    )
}

/// Per-feature mean and standard deviation over the bank; a zero spread is
/// replaced by 1 so that constant features contribute nothing.
fn bank_scaling(bank: &[BankEntry]) -> ([f64; 4], [f64; 4]) {
    let n = bank.len() as f64;
    let vectors: Vec<[f64; 4]> = bank.iter().map(|b| feature_vector(&b.features)).collect();
    let mut mean = [0.0; 4];
    let mut sd = [0.0; 4];
    for j in 0..4 {
        mean[j] = vectors.iter().map(|v| v[j]).sum::<f64>() / n;
        let var = vectors.iter().map(|v| (v[j] - mean[j]).powi(2)).sum::<f64>() / n;
        sd[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    (mean, sd)
}

/// The `k` bank entries closest to `x` in z-scored feature space, nearest
/// first, ties broken by ascending sample id.
pub fn select_demonstrations(x: &SampleFeatures, bank: &[BankEntry], k: usize) -> Selection {
    if k == 0 || bank.is_empty() {
        return Selection {
            demonstrations: Vec::new(),
            capped: k > 0,
        };
    }
    let (mean, sd) = bank_scaling(bank);
    let z = |v: [f64; 4]| -> [f64; 4] { std::array::from_fn(|j| (v[j] - mean[j]) / sd[j]) };
    let target = z(feature_vector(x));
    let mut scored: Vec<(f64, &BankEntry)> = bank
        .iter()
        .map(|b| {
            let v = z(feature_vector(&b.features));
            let d = v.iter().zip(&target).map(|(a, t)| (a - t).powi(2)).sum::<f64>().sqrt();
            (d, b)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.features.sample_id.cmp(&b.1.features.sample_id)));
    let take = k.min(bank.len());
    Selection {
        demonstrations: scored[..take]
            .iter()
            .map(|(_, b)| Demonstration {
                source_sample_id: b.features.sample_id.clone(),
                features_digest: features_digest(&b.features),
                reported_mmi: b.mmi,
            })
            .collect(),
        capped: k > bank.len(),
    }
}
