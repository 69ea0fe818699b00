//! Controller weights persistence.
//!
//! One self-describing JSON file: format tag, version, architecture,
//! parameter count, seed, and every parameter block in declared order.
//! f64 values survive the JSON round trip bit-exactly (shortest-roundtrip
//! float formatting), which the tests pin down.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Architecture, ControllerWeights, BLOCK_NAMES};

pub const WEIGHTS_FORMAT: &str = "arclr-weights";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct WeightsFile {
    format: String,
    version: u32,
    seed: u64,
    arch: Architecture,
    param_count: usize,
    blocks: Vec<WeightsBlock>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsBlock {
    name: String,
    values: Vec<f64>,
}

pub fn weights_to_json(weights: &ControllerWeights) -> Result<String> {
    let blocks = BLOCK_NAMES
        .iter()
        .map(|name| WeightsBlock {
            name: (*name).into(),
            values: weights.block(name).expect("declared block").to_vec(),
        })
        .collect();
    let file = WeightsFile {
        format: WEIGHTS_FORMAT.into(),
        version: WEIGHTS_VERSION,
        seed: weights.seed(),
        arch: *weights.arch(),
        param_count: weights.param_count(),
        blocks,
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn weights_from_json(text: &str) -> Result<ControllerWeights> {
    let file: WeightsFile = serde_json::from_str(text)?;
    if file.format != WEIGHTS_FORMAT {
        return Err(Error::data(format!("unexpected weights format '{}'", file.format)));
    }
    if file.version != WEIGHTS_VERSION {
        return Err(Error::data(format!("unsupported weights version {}", file.version)));
    }
    let layout = file.arch.layout();
    if file.blocks.len() != layout.blocks.len() {
        return Err(Error::data(format!(
            "expected {} parameter blocks, got {}",
            layout.blocks.len(),
            file.blocks.len()
        )));
    }
    let mut params = Vec::with_capacity(layout.total);
    for (block, &(name, _, len)) in file.blocks.iter().zip(&layout.blocks) {
        if block.name != name {
            return Err(Error::data(format!(
                "parameter block '{}' out of order (expected '{name}')",
                block.name
            )));
        }
        if block.values.len() != len {
            return Err(Error::data(format!(
                "block '{name}' has {} values, expected {len}",
                block.values.len()
            )));
        }
        params.extend_from_slice(&block.values);
    }
    if file.param_count != params.len() {
        return Err(Error::data(format!(
            "declared param_count {} does not match {} stored values",
            file.param_count,
            params.len()
        )));
    }
    ControllerWeights::from_parts(file.arch, file.seed, params)
}

pub fn save_weights(weights: &ControllerWeights, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, weights_to_json(weights)? + "\n")?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ControllerWeights> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot open weights {}: {e}", path.display())))?;
    weights_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let weights = ControllerWeights::init(Architecture::default(), 21).unwrap();
        let json = weights_to_json(&weights).unwrap();
        let loaded = weights_from_json(&json).unwrap();
        assert_eq!(loaded.param_count(), weights.param_count());
        assert_eq!(loaded.seed(), weights.seed());
        assert_eq!(loaded.arch(), weights.arch());
        for (a, b) in weights.params().iter().zip(loaded.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Serializing again yields the same bytes.
        assert_eq!(weights_to_json(&loaded).unwrap(), json);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let weights = ControllerWeights::init(Architecture::default(), 5).unwrap();
        save_weights(&weights, &path).unwrap();
        let loaded = load_weights(&path).unwrap();
        assert_eq!(loaded.params(), weights.params());
    }

    #[test]
    fn corrupted_metadata_is_rejected() {
        let weights = ControllerWeights::init(Architecture::default(), 1).unwrap();
        let json = weights_to_json(&weights).unwrap();

        let bad = json.replace("\"arclr-weights\"", "\"other\"");
        assert!(matches!(weights_from_json(&bad), Err(Error::Data(_))));

        let bad = json.replace("\"version\":1", "\"version\":9");
        assert!(matches!(weights_from_json(&bad), Err(Error::Data(_))));

        let bad = json.replace("\"conv1_w\"", "\"conv9_w\"");
        assert!(matches!(weights_from_json(&bad), Err(Error::Data(_))));
    }

    #[test]
    fn param_count_mismatch_is_rejected() {
        let weights = ControllerWeights::init(Architecture::default(), 1).unwrap();
        let json = weights_to_json(&weights).unwrap();
        let actual = weights.param_count();
        let bad = json.replace(
            &format!("\"param_count\":{actual}"),
            &format!("\"param_count\":{}", actual + 1),
        );
        assert!(matches!(weights_from_json(&bad), Err(Error::Data(_))));
    }
}
