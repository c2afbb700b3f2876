//! `<stem>.json` manifest of layer specs plus `<stem>.bin`, a flat
//! little-endian f64 blob. Blob order per layer: dense weight (row-major),
//! dense bias; batch-norm gamma, beta, running mean, running var.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{BatchNorm, Dense, Layer, LayerSpec, Mlp};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub layers: Vec<LayerSpec>,
    /// Number of f64 values in the blob.
    pub value_count: usize,
}

fn value_count(specs: &[LayerSpec]) -> usize {
    specs
        .iter()
        .map(|s| match *s {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            LayerSpec::BatchNorm { dim, .. } => 4 * dim,
            LayerSpec::Relu { .. } => 0,
        })
        .sum()
}

pub fn save_checkpoint(net: &Mlp, stem: &Path) -> Result<()> {
    let layers = net.specs();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        value_count: value_count(&layers),
        layers,
    };
    let mut blob = Vec::with_capacity(manifest.value_count * 8);
    let mut put = |values: &[f64]| {
        for v in values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    };
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                put(d.weight.as_slice().expect("standard layout"));
                put(d.bias.as_slice().expect("standard layout"));
            }
            Layer::BatchNorm(bn) => {
                for a in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                    put(a.as_slice().expect("standard layout"));
                }
            }
            Layer::Relu(_) => {}
        }
    }
    fs::write(stem.with_extension("json"), serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(stem.with_extension("bin"), blob)?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<Mlp> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let expected = value_count(&manifest.layers);
    if manifest.value_count != expected {
        return Err(Error::Checkpoint(format!(
            "manifest declares {} values but its layers need {expected}",
            manifest.value_count
        )));
    }
    let bytes = fs::read(stem.with_extension("bin"))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Checkpoint(format!(
            "blob holds {} bytes, manifest needs {}",
            bytes.len(),
            expected * 8
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for spec in &manifest.layers {
        layers.push(match *spec {
            LayerSpec::Dense { inputs, outputs } => Layer::Dense(Dense {
                weight: Array2::from_shape_vec((inputs, outputs), take(inputs * outputs))
                    .map_err(|e| Error::Checkpoint(e.to_string()))?,
                bias: Array1::from(take(outputs)),
            }),
            LayerSpec::BatchNorm { dim, momentum, eps } => Layer::BatchNorm(BatchNorm {
                gamma: Array1::from(take(dim)),
                beta: Array1::from(take(dim)),
                running_mean: Array1::from(take(dim)),
                running_var: Array1::from(take(dim)),
                momentum,
                eps,
            }),
            LayerSpec::Relu { dim } => Layer::Relu(dim),
        });
    }
    Mlp::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::Mode;
    use crate::rng::stream_rng;

    #[test]
    fn round_trip_preserves_parameters_and_running_stats() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("net");
        let mut net = Mlp::classifier(3, &[5, 4], true, 2, &mut stream_rng(1, 0)).unwrap();
        let x = ndarray::Array2::from_shape_fn((6, 3), |(i, j)| (i + 2 * j) as f64 * 0.1);
        net.forward(x.view(), Mode::Train).unwrap();
        save_checkpoint(&net, &stem).unwrap();
        let back = load_checkpoint(&stem).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.predict(x.view()).unwrap(), net.predict(x.view()).unwrap());
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("net");
        let net = Mlp::classifier(3, &[4], false, 2, &mut stream_rng(1, 0)).unwrap();
        save_checkpoint(&net, &stem).unwrap();
        let mut blob = fs::read(stem.with_extension("bin")).unwrap();
        blob.truncate(blob.len() - 8);
        fs::write(stem.with_extension("bin"), blob).unwrap();
        assert!(matches!(load_checkpoint(&stem), Err(Error::Checkpoint(_))));
    }
}
