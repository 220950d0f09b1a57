//! Street-level imagery providers.
//!
//! A missing image is a normal outcome (`ImageStatus::Missing`); only I/O
//! failures and undecodable files are errors.

use std::path::{Path, PathBuf};
use std::time::Duration;

use super::{FusionError, ImageStatus, StreetImage};
use crate::geo::GeoPoint;

pub trait ImageProvider: Send + Sync {
    fn fetch(&self, sample_id: &str, p: GeoPoint) -> Result<StreetImage, FusionError>;
}

/// Check that a file's header decodes as an image.
pub fn check_decodable(path: &Path) -> Result<(), FusionError> {
    image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| e.to_string())
        .and_then(|r| r.into_dimensions().map_err(|e| e.to_string()))
        .map(|_| ())
        .map_err(|message| FusionError::Undecodable {
            path: path.to_path_buf(),
            message,
        })
}

/// Images stored as `<dir>/<sample_id>.jpg`.
#[derive(Debug, Clone)]
pub struct LocalDirectory {
    pub dir: PathBuf,
}

impl LocalDirectory {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl ImageProvider for LocalDirectory {
    fn fetch(&self, sample_id: &str, _p: GeoPoint) -> Result<StreetImage, FusionError> {
        let path = self.dir.join(format!("{sample_id}.jpg"));
        match std::fs::metadata(&path) {
            Ok(m) if m.is_file() => {
                check_decodable(&path)?;
                Ok(StreetImage::available(path))
            }
            Ok(_) => Ok(StreetImage::missing()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(StreetImage::missing()),
            Err(e) => Err(FusionError::Transport(format!("{}: {e}", path.display()))),
        }
    }
}

/// No imagery at all: every sample is text-only.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoImagery;

impl ImageProvider for NoImagery {
    fn fetch(&self, _sample_id: &str, _p: GeoPoint) -> Result<StreetImage, FusionError> {
        Ok(StreetImage::missing())
    }
}

/// Street View Static style fetcher. Requests
/// `<endpoint>?size=WxH&location=lat,lon&return_error_code=true&key=...`,
/// treats 404 as "no imagery here" and stores hits in `cache_dir` so later
/// runs read from disk.
#[derive(Debug, Clone)]
pub struct HttpStreetView {
    pub endpoint: String,
    pub api_key_env: String,
    pub cache_dir: PathBuf,
    pub size: (u32, u32),
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub timeout: Duration,
}

impl ImageProvider for HttpStreetView {
    fn fetch(&self, sample_id: &str, p: GeoPoint) -> Result<StreetImage, FusionError> {
        let cached = LocalDirectory::new(&self.cache_dir).fetch(sample_id, p)?;
        if cached.status == ImageStatus::Available {
            return Ok(cached);
        }
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| FusionError::Transport(format!("environment variable {} is not set", self.api_key_env)))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| FusionError::Transport(e.to_string()))?;
        let location = format!("{},{}", p.lat, p.lon);
        let size = format!("{}x{}", self.size.0, self.size.1);
        let mut last = String::new();
        for attempt in 0..self.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.base_backoff * 2u32.saturating_pow(attempt - 1));
            }
            let resp = client
                .get(&self.endpoint)
                .query(&[
                    ("size", size.as_str()),
                    ("location", location.as_str()),
                    ("return_error_code", "true"),
                    ("key", key.as_str()),
                ])
                .send();
            match resp {
                Ok(r) if r.status() == reqwest::StatusCode::NOT_FOUND => return Ok(StreetImage::missing()),
                Ok(r) if r.status().is_success() => {
                    let bytes = r.bytes().map_err(|e| FusionError::Transport(e.to_string()))?;
                    std::fs::create_dir_all(&self.cache_dir)?;
                    let path = self.cache_dir.join(format!("{sample_id}.jpg"));
                    let tmp = path.with_extension("jpg.tmp");
                    std::fs::write(&tmp, &bytes)?;
                    std::fs::rename(&tmp, &path)?;
                    check_decodable(&path)?;
                    return Ok(StreetImage::available(path));
                }
                Ok(r) if r.status().is_server_error() || r.status() == reqwest::StatusCode::TOO_MANY_REQUESTS => {
                    last = format!("HTTP {}", r.status());
                }
                Ok(r) => return Err(FusionError::Transport(format!("HTTP {}", r.status()))),
                Err(e) => last = e.to_string(),
            }
        }
        Err(FusionError::Transport(format!(
            "image fetch for {sample_id} failed after {} attempts: {last}",
            self.max_attempts
        )))
    }
}
