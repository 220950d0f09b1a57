//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and
//! exits non-zero if any check fails.
//!
//! The live model check runs only when built with `--features live` and the
//! key variable named by `QUAKESIM_LIVE_KEY_ENV` (default `OPENAI_API_KEY`)
//! is set. `QUAKESIM_LIVE_ENDPOINT` and `QUAKESIM_LIVE_MODEL` choose the
//! endpoint and model.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use quakesim::eval::{self, CountyWeighting, ZoneScore};
use quakesim::export::RunManifest;
use quakesim::fusion::{Rejection, SampleFeatures, StreetImage};
use quakesim::geo::{SamplePlan, ZoneKind};
use quakesim::llm::{parse_response, serialize_response, FailReason, ParseError, Prediction, SimFailure};
use quakesim::prompt::{self, PromptSpec, Section};
use quakesim::scenario::{self, RadialScenario};
use quakesim::MmiLevel;
use rand::{Rng, SeedableRng};
use serde_json::Value;
use statrs::distribution::{ChiSquared, ContinuousCDF};

enum Verdict {
    Pass(String),
    Skip(String),
}

type Check = Result<Verdict, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn core_fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

fn quakesim(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_quakesim")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("quakesim {} exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn run_scenario(dir: &Path, s: &RadialScenario) -> Result<PathBuf, String> {
    let cfg = s.write(dir).map_err(|e| e.to_string())?;
    quakesim(&["run", "--config", cfg.to_str().unwrap()])?;
    Ok(dir.join("out"))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(p: &Path) -> Result<Vec<T>, String> {
    let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

fn read_json(p: &Path) -> Result<Value, String> {
    serde_json::from_str(&fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?).map_err(|e| e.to_string())
}

const TAG: &str = "mock-attenuation__base";

fn sampling_uniformity() -> Check {
    let zone = scenario::l_shaped_zone().map_err(|e| e.to_string())?;
    let plan = SamplePlan {
        points_per_zone: 20_000,
        seed: 2024,
        ..Default::default()
    };
    let t = Instant::now();
    let pts = quakesim::geo::sample_uniform(&zone, &plan, 0).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure!(pts.len() == 20_000, "{} points", pts.len());

    // 16 vertical strips of width 1/8 degree: the western 8 span 2 degrees
    // of latitude, the eastern 8 only 1, so expectations are 2:1.
    let inside = |lat: f64, lon: f64| (0.0..=2.0).contains(&lon) && (0.0..=2.0).contains(&lat) && !(lon > 1.0 && lat > 1.0);
    let mut counts = [0f64; 16];
    for p in &pts {
        ensure!(inside(p.lat, p.lon), "point {p:?} outside the L");
        counts[((p.lon / 0.125) as usize).min(15)] += 1.0;
    }
    let n = pts.len() as f64;
    let stat: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &o)| {
            let area = 0.125 * if i < 8 { 2.0 } else { 1.0 };
            let e = n * area / 3.0;
            (o - e).powi(2) / e
        })
        .sum();
    let crit = ChiSquared::new(15.0).unwrap().inverse_cdf(0.999);
    ensure!(stat < crit, "chi-square {stat:.2} >= critical {crit:.2}");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(Verdict::Pass(format!("chi2={stat:.2} < {crit:.2}, 100% inside, {:.0} ms", elapsed.as_secs_f64() * 1e3)))
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(work: &Path) -> Check {
    let s = RadialScenario::default();
    let cfg = s.write(work).map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().unwrap();
    let t = Instant::now();
    quakesim(&["run", "--config", cfg])?;
    let elapsed = t.elapsed();
    let first = work.join("out_first");
    fs::rename(work.join("out"), &first).map_err(|e| e.to_string())?;
    quakesim(&["run", "--config", cfg])?;
    let second = work.join("out");

    let (a, b) = (files_under(&first), files_under(&second));
    ensure!(a == b, "different file sets");
    for want in [
        format!("simulate/{TAG}/predictions.jsonl"),
        format!("evaluate/{TAG}/report.json"),
        format!("analyze/{TAG}/terms_by_mmi.csv"),
        format!("analyze/{TAG}/scatter.csv"),
        format!("export/{TAG}/choropleth.geojson"),
    ] {
        ensure!(a.contains(&PathBuf::from(&want)), "missing {want}");
    }
    for rel in &a {
        let (x, y) = (first.join(rel), second.join(rel));
        if rel.file_name().is_some_and(|n| n == "manifest.json") {
            let strip = |p: &Path| -> Result<Value, String> {
                let mut v = read_json(p)?;
                let m = v.as_object_mut().ok_or("manifest is not an object")?;
                m.remove("started");
                m.remove("finished");
                Ok(v)
            };
            ensure!(strip(&x)? == strip(&y)?, "manifests differ beyond timestamps");
        } else {
            ensure!(fs::read(&x).unwrap() == fs::read(&y).unwrap(), "{} differs", rel.display());
        }
    }
    ensure!(elapsed < Duration::from_secs(60), "first run took {elapsed:?}");
    Ok(Verdict::Pass(format!("{} files identical, 10 zones x 50 samples in {:.2} s", a.len(), elapsed.as_secs_f64())))
}

fn oracle_rmse(x: &[f64], y: &[f64]) -> f64 {
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / x.len() as f64).sqrt()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn metric_oracles() -> Check {
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(3..200);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..12.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..12.0)).collect();
        let pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        let r = eval::rmse(&pairs).map_err(|e| e.to_string())?;
        let c = eval::pearson(&pairs).map_err(|e| e.to_string())?;
        worst = worst.max((r - oracle_rmse(&x, &y)).abs()).max((c - oracle_pearson(&x, &y)).abs());
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    let exact = eval::rmse(&[(4.0, 5.0), (6.0, 5.0)]).map_err(|e| e.to_string())?;
    ensure!(exact == 1.0, "rmse({{(4,5),(6,5)}}) = {exact}");
    let y: Vec<f64> = (0..50).map(|_| rng.gen_range(1.0..12.0)).collect();
    for (a, b) in [(2.5, -1.0), (0.3, 7.0), (1.0, 0.0)] {
        let pairs: Vec<(f64, f64)> = y.iter().map(|&v| (v, a * v + b)).collect();
        let c = eval::pearson(&pairs).map_err(|e| e.to_string())?;
        ensure!((c - 1.0).abs() <= 1e-12, "pearson(y, {a}y+{b}) = {c}");
    }
    Ok(Verdict::Pass(format!("max |diff| vs two-pass oracles {worst:.1e}")))
}

fn prediction(sample: &str, zone: &str, mmi: u8, reasoning: &str) -> Prediction {
    Prediction {
        sample_id: sample.into(),
        zone_id: zone.into(),
        mmi: MmiLevel::new(mmi).unwrap(),
        reasoning: reasoning.into(),
        raw_response: String::new(),
        model_id: "m".into(),
        prompt_hash: String::new(),
        latency_ms: 0,
        attempt_count: 1,
    }
}

fn aggregation() -> Check {
    let preds: Vec<Prediction> = (3..=6).map(|v| prediction(&format!("z-{v}"), "z", v, "")).collect();
    let refs: Vec<&Prediction> = preds.iter().collect();
    let zone = eval::aggregate_zone(&refs, "z", ZoneKind::Zip).map_err(|e| e.to_string())?;
    ensure!(zone.mean_pred == 4.5, "zone mean {}", zone.mean_pred);

    let zs = |id: &str, mean: f64, n: usize| ZoneScore {
        zone_id: id.into(),
        kind: ZoneKind::Zip,
        mean_pred: mean,
        n_effective: n,
        truth: None,
    };
    let map: BTreeMap<String, String> = [("a", "C"), ("b", "C")].map(|(z, c)| (z.to_string(), c.to_string())).into();
    let county = eval::county_rollup(&[zs("a", 4.0, 10), zs("b", 6.0, 30)], &map, &[], CountyWeighting::SampleWeighted).map_err(|e| e.to_string())?;
    ensure!(county.len() == 1 && county[0].mean_pred == 5.5, "county rollup {:?}", county.first().map(|c| c.mean_pred));
    Ok(Verdict::Pass("mean{3,4,5,6}=4.5, rollup (4,n=10),(6,n=30)=5.5".into()))
}

fn section_fields(s: Section) -> &'static [&'static str] {
    match s {
        Section::Geospatial => &["## Geospatial features", "VS30 at your location"],
        Section::Building => &["## Building Description", "Building description:"],
        Section::Socioeconomic => &[
            "## Community Socioecnomics",
            "Population density:",
            "Urban population percentage:",
            "Over 65 percentage:",
            "Median household income:",
            "Education (bachelor's or higher):",
        ],
        Section::Visual => &["## Visual Context", "The image provided shows"],
    }
}

fn prompt_fidelity(work: &Path) -> Check {
    let fixture: SampleFeatures = serde_json::from_str(&fs::read_to_string(core_fixture("sample_san_diego.json")).unwrap()).map_err(|e| e.to_string())?;
    let golden = fs::read_to_string(core_fixture("golden/san_diego_text.txt")).unwrap();
    let render = |x: &SampleFeatures, spec: &PromptSpec| prompt::render_prompt(x, spec, None, "mock").map_err(|e| e.to_string());
    let base = render(&fixture, &PromptSpec::default())?;
    ensure!(base.user_text == golden, "rendered prompt differs from the golden file");

    let icl = render(&fixture, &PromptSpec {
        icl_mmi_guide: true,
        ..Default::default()
    })?;
    for l in MmiLevel::all() {
        ensure!(icl.user_text.contains(l.descriptor()), "ICL prompt lacks descriptor of {}", l.roman());
    }
    for phrase in ["Not felt except by a very few", "Damage total"] {
        ensure!(icl.user_text.contains(phrase), "ICL prompt lacks {phrase:?}");
    }

    // with an image so that the visual section is live
    let imgs = work.join("imgs");
    RadialScenario {
        n_zones: 1,
        points_per_zone: 1,
        images: true,
        ..Default::default()
    }
    .write(&imgs)
    .map_err(|e| e.to_string())?;
    let mut with_image = fixture.clone();
    with_image.image = StreetImage::available(imgs.join("images/91001-000.jpg"));
    let full = render(&with_image, &PromptSpec::default())?;
    for s in Section::ALL {
        ensure!(section_fields(s).iter().all(|f| full.user_text.contains(f)), "full prompt lacks {}", s.name());
        let mut spec = PromptSpec::default();
        spec.sections.remove(&s);
        let ablated = render(&with_image, &spec)?;
        for f in section_fields(s) {
            ensure!(!ablated.user_text.contains(f), "ablating {} left {f:?}", s.name());
        }
    }

    let red = work.join("redact");
    let out = run_scenario(&red, &RadialScenario {
        redact_location: true,
        ..Default::default()
    })?;
    let prompts = fs::read_to_string(out.join(format!("simulate/mock-attenuation__redact/prompts.jsonl"))).map_err(|e| e.to_string())?;
    let n = prompts.lines().count();
    ensure!(n == 500, "{n} redacted prompts");
    for needle in scenario::CITIES.iter().chain([&scenario::STATE]) {
        let hits = prompts.matches(needle).count();
        ensure!(hits == 0, "{hits} occurrences of {needle:?} after redaction");
    }
    Ok(Verdict::Pass(format!("golden equal, 12 descriptors, 4 ablations clean, 0 location strings in {n} prompts")))
}

fn parsing() -> Check {
    let cases: Vec<Value> = serde_json::from_str(&fs::read_to_string(core_fixture("parse_corpus.json")).unwrap()).map_err(|e| e.to_string())?;
    ensure!(cases.len() == 20, "{} cases", cases.len());
    for c in &cases {
        let got = match parse_response(c["raw"].as_str().unwrap()) {
            Ok((l, _)) => format!("level:{}", l.value()),
            Err(ParseError::NoJson) => "no_json".into(),
            Err(ParseError::Schema(_)) => "schema".into(),
            Err(ParseError::Value(_)) => "value".into(),
        };
        ensure!(got == c["expect"].as_str().unwrap(), "case {}: got {got}, want {}", c["name"], c["expect"]);
    }
    for l in MmiLevel::all() {
        let back = parse_response(&serialize_response(l, "r")).map_err(|e| e.to_string())?.0;
        ensure!(back == l && MmiLevel::from_roman(l.roman()) == Some(l), "{} does not round-trip", l.roman());
    }
    Ok(Verdict::Pass("20/20 corpus cases, 12/12 numerals".into()))
}

fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn radial_sanity(work: &Path) -> Check {
    let out = work.join("out");
    let report = read_json(&out.join(format!("evaluate/{TAG}/report.json")))?;
    let zones = report["zip_scores"].as_array().ok_or("no zip_scores")?;
    ensure!(zones.len() == 10, "{} zones", zones.len());
    let s = RadialScenario::default();
    let means: BTreeMap<usize, f64> = zones
        .iter()
        .map(|z| {
            let idx = (0..s.n_zones).find(|&i| scenario::zone_id(i) == z["zone_id"].as_str().unwrap()).unwrap();
            (idx, z["mean_pred"].as_f64().unwrap())
        })
        .collect();
    let ordered: Vec<f64> = means.values().copied().collect();
    ensure!(ordered.windows(2).all(|w| w[0] >= w[1]), "zone means increase with distance: {ordered:?}");

    let csv = fs::read_to_string(out.join(format!("analyze/{TAG}/scatter.csv"))).unwrap();
    let mut lines = csv.lines();
    ensure!(lines.next() == Some("sample_id,mmi_pred,distance_km,vs30_ms"), "scatter header");
    let (mut mmi, mut dist) = (Vec::new(), Vec::new());
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        mmi.push(f[1].parse::<f64>().unwrap());
        dist.push(f[2].parse::<f64>().unwrap());
    }
    let rho = oracle_pearson(&oracle_ranks(&dist), &oracle_ranks(&mmi));
    ensure!(rho < 0.0, "spearman {rho}");
    Ok(Verdict::Pass(format!("means {:.2} .. {:.2} non-increasing, spearman {rho:.3}", ordered[0], ordered[ordered.len() - 1])))
}

fn tfidf() -> Check {
    let docs = [
        (4, "shaking felt rattle ground"),
        (6, "ground shaking plaster felt"),
        (8, "felt crack shaking ground"),
    ];
    let preds: Vec<Prediction> = docs.iter().enumerate().map(|(i, (l, r))| prediction(&format!("s{i}"), "z", *l, r)).collect();
    let top = quakesim::analysis::tfidf_by_mmi(&preds, None, 5).map_err(|e| e.to_string())?;
    let ln3 = 3f64.ln();
    for (level, term) in [(4, "rattle"), (6, "plaster"), (8, "crack")] {
        let first = top.iter().find(|t| t.mmi_level.value() == level).ok_or(format!("no terms for level {level}"))?;
        ensure!(first.term == term, "level {level} ranks {:?} first", first.term);
        ensure!(first.idf == ln3, "idf of {term} is {}", first.idf);
    }
    let table = quakesim::analysis::term_table(&preds, None).map_err(|e| e.to_string())?;
    for (level, terms) in &table {
        let sum: f64 = terms.iter().map(|t| t.tf).sum();
        ensure!((sum - 1.0).abs() <= 1e-12, "tf of level {} sums to {sum}", level.roman());
    }
    Ok(Verdict::Pass("exclusive terms rank first with idf = ln 3, tf sums to 1".into()))
}

fn fault_accounting(work: &Path) -> Check {
    let s = RadialScenario {
        nodata_zone: Some(3),
        images: true,
        corrupt_image: Some("91006-004".into()),
        garble_modulus: Some(4),
        ..Default::default()
    };
    let out = run_scenario(work, &s)?;
    let features: Vec<SampleFeatures> = read_jsonl(&out.join("fuse/features.jsonl"))?;
    let rejected: Vec<Rejection> = read_jsonl(&out.join("fuse/rejections.jsonl"))?;
    let preds: Vec<Prediction> = read_jsonl(&out.join(format!("simulate/{TAG}/predictions.jsonl")))?;
    let failed: Vec<SimFailure> = read_jsonl(&out.join(format!("simulate/{TAG}/failures.jsonl")))?;
    let missing = features.iter().filter(|f| f.image.path().is_none()).count();
    ensure!(missing > 0, "no sample lacks an image");
    ensure!(rejected.iter().any(|r| r.reason.code() == "vs30_nodata"), "no VS30 nodata rejections");
    ensure!(rejected.iter().any(|r| r.sample_id == "91006-004"), "corrupt image not rejected");
    ensure!(failed.iter().any(|f| f.reason == FailReason::ParseFailed), "no parse failures");

    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(out.join(format!("export/{TAG}/manifest.json"))).unwrap()).map_err(|e| e.to_string())?;
    manifest.check_conservation().map_err(|e| e.to_string())?;
    let t = &manifest.totals;
    ensure!(t.requested == 500, "requested {}", t.requested);
    ensure!(t.requested == t.fused_ok + t.fused_rejected, "requested != fused + rejected");
    ensure!(t.fused_ok == t.predicted + t.failed, "fused != predicted + failed");
    ensure!(t.fused_ok == features.len() && t.fused_rejected == rejected.len(), "fusion totals disagree with artifacts");
    ensure!(t.predicted == preds.len() && t.failed == failed.len(), "simulation totals disagree with artifacts");
    let per_zone_sum = manifest.counts.values().map(|c| c.requested).sum::<usize>();
    ensure!(per_zone_sum == t.requested, "per-zone counts do not add up");

    let report = read_json(&out.join(format!("evaluate/{TAG}/report.json")))?;
    let mut by_zone: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &preds {
        *by_zone.entry(&p.zone_id).or_default() += 1;
    }
    for z in report["zip_scores"].as_array().unwrap() {
        let id = z["zone_id"].as_str().unwrap();
        let n = z["n_effective"].as_u64().unwrap() as usize;
        ensure!(by_zone.get(id) == Some(&n), "zone {id} aggregates {n} samples");
    }
    let dropped: std::collections::BTreeSet<&str> = rejected.iter().map(|r| r.sample_id.as_str()).chain(failed.iter().map(|f| f.sample_id.as_str())).collect();
    ensure!(preds.iter().all(|p| !dropped.contains(p.sample_id.as_str())), "a failed sample was aggregated");
    Ok(Verdict::Pass(format!(
        "500 = {} fused + {} rejected; {} fused = {} predicted + {} failed; {missing} without image",
        t.fused_ok, t.fused_rejected, t.fused_ok, t.predicted, t.failed
    )))
}

fn live_smoke(work: &Path) -> Check {
    if !cfg!(feature = "live") {
        return Ok(Verdict::Skip("built without the live feature".into()));
    }
    let key_env = std::env::var("QUAKESIM_LIVE_KEY_ENV").unwrap_or_else(|_| "OPENAI_API_KEY".into());
    if std::env::var(&key_env).map_or(true, |v| v.is_empty()) {
        return Ok(Verdict::Skip(format!("{key_env} not set")));
    }
    let endpoint = std::env::var("QUAKESIM_LIVE_ENDPOINT").unwrap_or_else(|_| "https://api.openai.com/v1/chat/completions".into());
    let model = std::env::var("QUAKESIM_LIVE_MODEL").unwrap_or_else(|_| "gpt-4o".into());
    let s = RadialScenario {
        n_zones: 1,
        points_per_zone: 3,
        ..Default::default()
    };
    let cfg_path = s.write(work).map_err(|e| e.to_string())?;
    let mut cfg = read_json(&cfg_path)?;
    cfg["model"] = serde_json::json!({"model_id": model, "endpoint": endpoint, "api_key_env": key_env});
    fs::write(&cfg_path, cfg.to_string()).map_err(|e| e.to_string())?;
    quakesim(&["run", "--config", cfg_path.to_str().unwrap()])?;
    let dir = fs::read_dir(work.join("out/simulate")).map_err(|e| e.to_string())?.flatten().next().ok_or("no simulate output")?.path();
    let preds: Vec<Prediction> = read_jsonl(&dir.join("predictions.jsonl"))?;
    ensure!(preds.len() == 3, "{} predictions", preds.len());
    ensure!(preds.iter().all(|p| (1..=12).contains(&p.mmi.value())), "MMI outside I-XII");
    Ok(Verdict::Pass(format!("{} predictions from {model}", preds.len())))
}

fn main() {
    let work = tempfile::tempdir().expect("tempdir");
    let sub = |name: &str| {
        let d = work.path().join(name);
        fs::create_dir_all(&d).unwrap();
        d
    };
    let (det, prompt_dir, faults, live) = (sub("determinism"), sub("prompt"), sub("faults"), sub("live"));
    let checks: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("sampling uniformity", Box::new(sampling_uniformity)),
        ("end-to-end determinism", Box::new(|| determinism(&det))),
        ("metric oracles", Box::new(metric_oracles)),
        ("aggregation", Box::new(aggregation)),
        ("prompt fidelity", Box::new(|| prompt_fidelity(&prompt_dir))),
        ("parsing robustness", Box::new(parsing)),
        ("mock pipeline attenuation", Box::new(|| radial_sanity(&det))),
        ("tf-idf", Box::new(tfidf)),
        ("fault accounting", Box::new(|| fault_accounting(&faults))),
        ("live smoke test", Box::new(|| live_smoke(&live))),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match verdict {
            Ok(Verdict::Pass(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Verdict::Skip(why)) => println!("SKIP  {name}: {why}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
