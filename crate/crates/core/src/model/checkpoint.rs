//! On-disk checkpoints: a JSON manifest next to a flat little-endian `f64`
//! blob. The blob holds, per layer, the `fan_in x fan_out` weights in
//! row-major order followed by the biases.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Layer, Mlp, TrainConfig};
use crate::error::{Error, Result};
use crate::heatmap::NormStats;
use crate::seed::sha256_hex;

pub const CHECKPOINT_FORMAT: &str = "tactile-twin-mlp/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 of the training split.
    pub data_sha256: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub face: u8,
    pub model: Mlp,
    pub norm: NormStats,
    /// Non-contact decision threshold (N) for this face.
    pub non_contact_threshold: f64,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    face: u8,
    layer_sizes: Vec<usize>,
    norm: NormStats,
    non_contact_threshold: f64,
    provenance: Provenance,
    blob: String,
    blob_bytes: usize,
    blob_sha256: String,
}

fn blob_len(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() * 8
}

impl Checkpoint {
    fn blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.model.parameter_count() * 8);
        for l in &self.model.layers {
            for v in l.weights.iter().chain(l.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn blob_path(manifest: &Path) -> PathBuf {
        manifest.with_extension("bin")
    }

    /// SHA-256 of the parameter blob.
    pub fn parameter_sha256(&self) -> String {
        sha256_hex(&self.blob())
    }

    /// Write `path` (manifest) and its sibling `.bin` blob.
    pub fn save(&self, path: &Path) -> Result<()> {
        let blob = self.blob();
        let blob_path = Self::blob_path(path);
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.into(),
            face: self.face,
            layer_sizes: self.model.sizes(),
            norm: self.norm.clone(),
            non_contact_threshold: self.non_contact_threshold,
            provenance: self.provenance.clone(),
            blob: blob_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            blob_bytes: blob.len(),
            blob_sha256: sha256_hex(&blob),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let integrity = |p: &Path, message: String| Error::Integrity {
            path: p.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| integrity(path, format!("unreadable manifest: {e}")))?;
        if m.format != CHECKPOINT_FORMAT {
            return Err(integrity(path, format!("unknown format {:?}", m.format)));
        }
        if m.layer_sizes.len() < 2 || m.layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {:?}", m.layer_sizes)));
        }
        let blob_path = path.with_file_name(&m.blob);
        let blob = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let want = blob_len(&m.layer_sizes);
        if blob.len() != m.blob_bytes || blob.len() != want {
            return Err(integrity(
                &blob_path,
                format!("blob has {} bytes, layer sizes need {want}", blob.len()),
            ));
        }
        if sha256_hex(&blob) != m.blob_sha256 {
            return Err(integrity(&blob_path, "checksum mismatch".into()));
        }
        let mut values = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut layers = Vec::new();
        for w in m.layer_sizes.windows(2) {
            let weights: Vec<f64> = values.by_ref().take(w[0] * w[1]).collect();
            let bias: Vec<f64> = values.by_ref().take(w[1]).collect();
            layers.push(Layer {
                weights: Array2::from_shape_vec((w[0], w[1]), weights).map_err(|e| Error::Shape(e.to_string()))?,
                bias: Array1::from(bias),
            });
        }
        let model = Mlp { layers };
        if !model.is_finite() {
            return Err(integrity(&blob_path, "non-finite parameters".into()));
        }
        Ok(Checkpoint {
            face: m.face,
            model,
            norm: m.norm,
            non_contact_threshold: m.non_contact_threshold,
            provenance: m.provenance,
        })
    }

    /// Load and require a specific layer sizing.
    pub fn load_expecting(path: &Path, sizes: &[usize]) -> Result<Self> {
        let c = Self::load(path)?;
        if c.model.sizes() != sizes {
            return Err(Error::Shape(format!(
                "checkpoint has layer sizes {:?}, expected {sizes:?}",
                c.model.sizes()
            )));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SMALL_LAYERS;

    fn sample() -> Checkpoint {
        Checkpoint {
            face: 2,
            model: Mlp::init(&SMALL_LAYERS, 5).unwrap(),
            norm: NormStats {
                input_min: [-1.5; 9],
                input_max: [2.0 / 3.0; 9],
                force_max: 17.3,
                degenerate_channels: vec![],
            },
            non_contact_threshold: 0.216,
            provenance: Provenance {
                seed: 5,
                data_sha256: "ab".repeat(32),
                epochs_run: 3,
                best_epoch: 2,
                train_config: TrainConfig::default(),
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("face2.json");
        let c = sample();
        c.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, c);
        let x = ndarray::Array2::from_shape_fn((5, 9), |(i, j)| (i * 9 + j) as f64 / 45.0);
        let a = c.model.forward(x.view()).unwrap();
        let b = back.model.forward(x.view()).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        // saving again reproduces identical bytes
        let p2 = dir.path().join("again.json");
        back.save(&p2).unwrap();
        assert_eq!(std::fs::read(Checkpoint::blob_path(&p)).unwrap(), std::fs::read(Checkpoint::blob_path(&p2)).unwrap());
    }

    #[test]
    fn truncated_or_corrupt_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        sample().save(&p).unwrap();
        let bp = Checkpoint::blob_path(&p);
        let blob = std::fs::read(&bp).unwrap();
        std::fs::write(&bp, &blob[..blob.len() - 8]).unwrap();
        assert!(matches!(Checkpoint::load(&p), Err(Error::Integrity { .. })));
        let mut flipped = blob.clone();
        flipped[100] ^= 1;
        std::fs::write(&bp, &flipped).unwrap();
        assert!(matches!(Checkpoint::load(&p), Err(Error::Integrity { .. })));
        std::fs::write(&bp, &blob).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, &text[..text.len() / 2]).unwrap();
        assert!(matches!(Checkpoint::load(&p), Err(Error::Integrity { .. })));
    }

    #[test]
    fn wrong_sizing_is_a_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        sample().save(&p).unwrap();
        assert!(Checkpoint::load_expecting(&p, &SMALL_LAYERS).is_ok());
        assert!(matches!(
            Checkpoint::load_expecting(&p, &crate::model::FULL_LAYERS),
            Err(Error::Shape(_))
        ));
    }
}
