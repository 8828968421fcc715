//! The landmark exchange file shared by `detect` and `swap`.

use std::path::Path;

use dressswap::dataset::{LandmarkSet, LANDMARK_COUNT};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const ORDER: &str = "deepfashion-v1";

/// `{"landmarks": [[x, y], ...], "order": "deepfashion-v1"}`. `frame` is
/// present when the coordinates live in a resized frame (the model's
/// `[width, height]`) rather than in image pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkFile {
    pub landmarks: Vec<[f64; 2]>,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<[usize; 2]>,
}

impl LandmarkFile {
    pub fn new(set: &LandmarkSet, frame: Option<[usize; 2]>) -> Self {
        LandmarkFile {
            landmarks: set.points().iter().map(|p| [p.x, p.y]).collect(),
            order: ORDER.to_string(),
            frame,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bad = |message: String| CliError::Landmarks {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| dressswap::Error::io(path, e))?;
        let file: LandmarkFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if file.order != ORDER {
            return Err(bad(format!("order {:?}, expected {ORDER:?}", file.order)));
        }
        if file.landmarks.len() != LANDMARK_COUNT {
            return Err(bad(format!(
                "{} landmarks, expected {LANDMARK_COUNT}",
                file.landmarks.len()
            )));
        }
        if file.frame.is_some_and(|[w, h]| w == 0 || h == 0) {
            return Err(bad("frame dimensions must be positive".into()));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string(self).expect("plain data serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| dressswap::Error::io(path, e).into())
    }

    /// Landmarks in the pixel space of a `width × height` image.
    pub fn to_pixels(&self, width: usize, height: usize) -> Result<LandmarkSet, CliError> {
        let (sx, sy) = match self.frame {
            Some([fw, fh]) => (width as f64 / fw as f64, height as f64 / fh as f64),
            None => (1.0, 1.0),
        };
        let coords: Vec<f64> = self
            .landmarks
            .iter()
            .flat_map(|&[x, y]| [x * sx, y * sy])
            .collect();
        Ok(LandmarkSet::from_interleaved(&coords)?)
    }
}
