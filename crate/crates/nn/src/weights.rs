//! Versioned weight container: a JSON document whose header carries the
//! layer chain and provenance, followed by a base64 payload of every tensor
//! in declaration order as little-endian `f64`.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::{init_weights, NetworkParams};
use crate::spec::NetworkSpec;

pub const WEIGHTS_FORMAT: &str = "myosynth-weights";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub seed: u64,
    /// Identifies the normalization the network was trained against.
    pub normalization_ref: Option<String>,
    /// Caller-defined metadata (architecture config, input config, …).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct WeightDocument {
    header: WeightHeader,
    shapes: Vec<Vec<usize>>,
    payload: String,
}

pub fn encode(header: &WeightHeader, params: &NetworkParams) -> Result<String> {
    params.check_against(&header.spec)?;
    let mut bytes = Vec::with_capacity(params.parameter_count() * 8);
    for t in params.tensors() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let doc = WeightDocument {
        header: header.clone(),
        shapes: params.tensors().map(|t| t.shape().to_vec()).collect(),
        payload: STANDARD.encode(bytes),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn decode(text: &str) -> Result<(WeightHeader, NetworkParams)> {
    let doc: WeightDocument = serde_json::from_str(text)?;
    if doc.header.format != WEIGHTS_FORMAT {
        return Err(NnError::Format(format!("unknown format {:?}", doc.header.format)));
    }
    if doc.header.version != WEIGHTS_VERSION {
        return Err(NnError::Format(format!("unsupported version {}", doc.header.version)));
    }
    let bytes = STANDARD
        .decode(doc.payload.as_bytes())
        .map_err(|e| NnError::Format(format!("payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(NnError::Format("payload is not a whole number of doubles".into()));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut params = init_weights(&doc.header.spec, 0);
    let shapes: Vec<Vec<usize>> = params.tensors().map(|t| t.shape().to_vec()).collect();
    if shapes != doc.shapes {
        return Err(NnError::Format("tensor shapes disagree with the layer chain".into()));
    }
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = values
                .next()
                .ok_or_else(|| NnError::Format("payload too short".into()))?;
        }
    }
    if values.next().is_some() {
        return Err(NnError::Format("payload too long".into()));
    }
    Ok((doc.header, params))
}

pub fn save(path: &Path, header: &WeightHeader, params: &NetworkParams) -> Result<()> {
    let text = encode(header, params)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(WeightHeader, NetworkParams)> {
    decode(&fs::read_to_string(path)?)
}

impl WeightHeader {
    pub fn new(spec: NetworkSpec, seed: u64) -> Self {
        Self {
            format: WEIGHTS_FORMAT.to_string(),
            version: WEIGHTS_VERSION,
            spec,
            seed,
            normalization_ref: None,
            extra: serde_json::Value::Null,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::spec::LayerSpec;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec::new(
            3,
            vec![
                LayerSpec::Lstm {
                    units: 2,
                    stateful: true,
                    return_sequences: true,
                },
                LayerSpec::Dense {
                    units: 1,
                    activation: Activation::Linear,
                },
            ],
        )
        .unwrap();
        let mut params = init_weights(&spec, 5);
        params.tensors_mut().next().unwrap().data_mut()[0] = 0.1 + 0.2;
        let header = WeightHeader::new(spec, 5);
        let (h2, p2) = decode(&encode(&header, &params).unwrap()).unwrap();
        assert_eq!(h2, header);
        for (a, b) in params.tensors().zip(p2.tensors()) {
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let spec = NetworkSpec::new(
            2,
            vec![LayerSpec::Dense {
                units: 2,
                activation: Activation::Relu,
            }],
        )
        .unwrap();
        let params = init_weights(&spec, 1);
        let text = encode(&WeightHeader::new(spec, 1), &params).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["payload"] = serde_json::Value::String(STANDARD.encode([0u8; 16]));
        assert!(decode(&doc.to_string()).is_err());
    }
}
