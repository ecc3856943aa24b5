//! Dataset wire format: JSON lines, one example per line, plus the
//! conversion into the training-ready representation.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bpe::{encode, MergeTable, Vocab};
use crate::error::{Error, Result};
use crate::metrics::tokenize;
use crate::model::ImageFeatures;
use crate::numerics::{Real, Tensor2D};
use crate::training::TrainExample;

/// One captioned image: an identifier, the pooled feature vector standing
/// in for the image, and 1..5 reference captions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub features: Vec<f64>,
    pub captions: Vec<String>,
}

impl Example {
    pub fn validate(&self, v_dim: usize) -> Result<()> {
        if self.features.len() != v_dim {
            return Err(Error::Validation(format!(
                "example {}: feature length {} does not match v_dim {}",
                self.id,
                self.features.len(),
                v_dim
            )));
        }
        if self.captions.is_empty() || self.captions.len() > 5 {
            return Err(Error::Validation(format!(
                "example {}: expected 1..5 captions, got {}",
                self.id,
                self.captions.len()
            )));
        }
        if self.captions.iter().any(|c| c.trim().is_empty()) {
            return Err(Error::Validation(format!(
                "example {}: empty caption",
                self.id
            )));
        }
        Ok(())
    }
}

/// Write one JSON object per line.
pub fn save_dataset(examples: &[Example], path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        let line = serde_json::to_string(ex).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Parse and validate a JSONL dataset. Errors carry the 1-based line.
pub fn load_dataset(path: &Path, v_dim: usize) -> Result<Vec<Example>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(line).map_err(|e| Error::Dataset {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        ex.validate(v_dim).map_err(|e| Error::Dataset {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

/// Write the per-example references as one tab-separated line each, in
/// dataset order, for the scoring pipeline.
pub fn save_references(examples: &[Example], path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        writeln!(w, "{}", ex.captions.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}

/// The example's feature vector as a pooled model input.
pub fn features_of<T: Real>(ex: &Example) -> Result<ImageFeatures<T>> {
    let pooled = Tensor2D::from_vec(
        1,
        ex.features.len(),
        ex.features.iter().map(|&v| T::from_f64(v)).collect(),
    )?;
    Ok(ImageFeatures { pooled, grid: None })
}

/// Encode examples for the training loops: subword ids of the first
/// caption as the teacher target, every caption word-tokenized as a
/// scoring reference.
pub fn prepare_examples<T: Real>(
    examples: &[Example],
    merges: &MergeTable,
    vocab: &Vocab,
) -> Result<Vec<TrainExample<T>>> {
    examples
        .iter()
        .map(|ex| {
            let subwords = encode(&ex.captions[0], merges);
            let target_ids = vocab.ids(&subwords);
            let references = ex.captions.iter().map(|c| tokenize(c)).collect();
            Ok(TrainExample {
                id: ex.id.clone(),
                features: features_of(ex)?,
                target_ids,
                references,
            })
        })
        .collect()
}

/// All captions of a dataset, in order, for subword learning.
pub fn all_captions(examples: &[Example]) -> Vec<String> {
    examples
        .iter()
        .flat_map(|e| e.captions.iter().cloned())
        .collect()
}
