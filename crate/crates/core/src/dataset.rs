//! Image set ingestion and the declarative image sources used by experiment
//! plans.

use crate::baselines::{build_transformation_domain, ChaosDomainParams, KeystreamSpec};
use crate::error::{Error, Result};
use crate::phantom::phantom_set;
use crate::raster::RasterImage;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

/// A file that could not be decoded and was left out.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct IngestReport {
    pub images: Vec<RasterImage>,
    pub files: Vec<PathBuf>,
    pub skipped: Vec<SkippedFile>,
}

/// Image files directly inside `dir`, sorted by file name bytes.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Decode every image in `dir`, convert to 3 channels and resize to
/// `resolution x resolution`. Undecodable files are skipped and listed.
pub fn ingest(dir: &Path, resolution: usize) -> Result<IngestReport> {
    if resolution == 0 {
        return Err(Error::InvalidResolution(0));
    }
    let mut report = IngestReport { images: Vec::new(), files: Vec::new(), skipped: Vec::new() };
    for path in list_images(dir)? {
        match RasterImage::load(&path) {
            Ok(img) => {
                report.images.push(img.to_rgb().resize(resolution, resolution));
                report.files.push(path);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                report.skipped.push(SkippedFile { path, reason: e.to_string() });
            }
        }
    }
    if report.images.is_empty() {
        return Err(Error::EmptyDomain(format!("no decodable PNG/PGM/PPM files in {}", dir.display())));
    }
    Ok(report)
}

/// Where an experiment gets its images from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageSource {
    /// Every image in a directory.
    Dir { path: PathBuf },
    /// Seeded synthetic phantoms.
    Phantom { count: usize, seed: u64 },
    /// Another source run through the chaotic image encryptor.
    Chaos { from: Box<ImageSource>, params: ChaosDomainParams },
    /// Images filled from a baseline keystream, one stream per image with the
    /// spec's seed material offset by the image index.
    Keystream { count: usize, spec: KeystreamSpec },
}

impl ImageSource {
    pub fn load(&self, resolution: usize) -> Result<Vec<RasterImage>> {
        match self {
            ImageSource::Dir { path } => Ok(ingest(path, resolution)?.images),
            ImageSource::Phantom { count, seed } => phantom_set(resolution, *count, *seed),
            ImageSource::Chaos { from, params } => build_transformation_domain(&from.load(resolution)?, params),
            ImageSource::Keystream { count, spec } => (0..*count)
                .map(|i| {
                    let spec = KeystreamSpec { length: resolution * resolution * 3, ..spec.offset(i as u64) };
                    RasterImage::new(resolution, resolution, 3, spec.generate()?)
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingest_orders_converts_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        RasterImage::filled(8, 8, 1, 10).unwrap().save(dir.path().join("b.pgm")).unwrap();
        RasterImage::filled(4, 4, 3, 20).unwrap().save(dir.path().join("a.png")).unwrap();
        std::fs::write(dir.path().join("c.png"), b"garbage").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let r = ingest(dir.path(), 4).unwrap();
        assert_eq!(r.images.len(), 2);
        assert_eq!(r.files[0].file_name().unwrap(), "a.png");
        assert!(r.images.iter().all(|i| i.width() == 4 && i.channels() == 3));
        assert_eq!(r.images[0].bytes(), &[20; 48]);
        assert_eq!(r.skipped.len(), 1);
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ingest(dir.path(), 8), Err(Error::EmptyDomain(_))));
    }
}
