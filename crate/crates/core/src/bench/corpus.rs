use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    TopLeft,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub width: usize,
    pub height: usize,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

/// Crop (from an anchor) followed by bilinear resize; both optional.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageRules {
    pub crop: Option<Crop>,
    pub resize: Option<Size>,
}

impl ImageRules {
    pub fn apply(&self, img: &Image) -> Result<Image> {
        let mut out = img.clone();
        if let Some(c) = self.crop {
            if c.width > out.width() || c.height > out.height() {
                return Err(Error::InvalidArgument(format!(
                    "crop {}x{} larger than {}x{} image",
                    c.width,
                    c.height,
                    out.width(),
                    out.height()
                )));
            }
            let (top, left) = match c.anchor {
                Anchor::TopLeft => (0, 0),
                Anchor::Center => ((out.height() - c.height) / 2, (out.width() - c.width) / 2),
            };
            out = out.crop(top, left, c.width, c.height)?;
        }
        if let Some(s) = self.resize {
            out = out.resize_bilinear(s.width, s.height)?;
        }
        Ok(out)
    }
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "pnm", "ppm"];

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if path.is_file() && is_image {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every image in `dir` in lexicographic file order and applies
/// `rules`. All failures are collected into one error.
pub fn ingest_corpus(dir: impl AsRef<Path>, rules: &ImageRules) -> Result<Vec<Image>> {
    let dir = dir.as_ref();
    let files = image_files(dir)?;
    if files.is_empty() {
        return Err(Error::Corpus(vec![format!("{}: no images found", dir.display())]));
    }
    let mut images = Vec::with_capacity(files.len());
    let mut failures = Vec::new();
    for f in &files {
        match load_image(f).and_then(|img| rules.apply(&img)) {
            Ok(img) => images.push(img),
            Err(e) => failures.push(format!("{}: {e}", f.display())),
        }
    }
    if failures.is_empty() {
        Ok(images)
    } else {
        Err(Error::Corpus(failures))
    }
}
