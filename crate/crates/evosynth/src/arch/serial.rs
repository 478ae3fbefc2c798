//! Versioned JSON on-disk format for architectures.
//!
//! The document is self-describing: `{version, network_id, generation,
//! rng_seed, layer_widths, layers, output_weights}` with each cluster as
//! `{tag: [layer, index], mask: <base64 bit-vector>, weights: [..]}`.
//! Weights are plain JSON numbers, which serde_json prints as the shortest
//! decimal that round-trips the exact f64, so a load of a save is
//! bit-identical.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ArchError, Cluster, GeneTag, NetworkArchitecture, Validity};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArchFile {
    version: u32,
    network_id: String,
    generation: u32,
    rng_seed: u64,
    layer_widths: Vec<usize>,
    layers: Vec<LayerFile>,
    output_weights: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    clusters: Vec<ClusterFile>,
}

#[derive(Serialize, Deserialize)]
struct ClusterFile {
    tag: (usize, usize),
    mask: String,
    weights: Vec<f64>,
}

/// Packs mask bits MSB-first into bytes, padding the final byte with zeros.
fn pack_bits(mask: &[bool]) -> Vec<u8> {
    let mut bytes = vec![0u8; mask.len().div_ceil(8)];
    for (j, &bit) in mask.iter().enumerate() {
        if bit {
            bytes[j / 8] |= 1 << (7 - (j % 8));
        }
    }
    bytes
}

fn unpack_bits(bytes: &[u8], len: usize) -> Result<Vec<bool>, String> {
    if bytes.len() != len.div_ceil(8) {
        return Err(format!(
            "mask encodes {} bytes, expected {} for {} bits",
            bytes.len(),
            len.div_ceil(8),
            len
        ));
    }
    let mut mask = Vec::with_capacity(len);
    for j in 0..len {
        mask.push(bytes[j / 8] & (1 << (7 - (j % 8))) != 0);
    }
    // Padding bits must be zero; anything else is not a value we wrote.
    for j in len..bytes.len() * 8 {
        if bytes[j / 8] & (1 << (7 - (j % 8))) != 0 {
            return Err(format!("nonzero padding bit {j} in mask"));
        }
    }
    Ok(mask)
}

/// Serializes a network to the versioned JSON format. Corrupt networks are
/// refused; degenerate ones are fine.
pub fn serialize(net: &NetworkArchitecture) -> Result<Vec<u8>, ArchError> {
    if super::validate(net) == Validity::Corrupt {
        let detail = super::invariant_violations(net).join("; ");
        return Err(ArchError::Corrupt(format!(
            "refusing to serialize corrupt network: {detail}"
        )));
    }
    let out_cols = net.output_width();
    let file = ArchFile {
        version: FORMAT_VERSION,
        network_id: net.network_id().to_string(),
        generation: net.generation(),
        rng_seed: net.rng_seed(),
        layer_widths: net.layer_widths().to_vec(),
        layers: net
            .hidden_layers()
            .iter()
            .map(|clusters| LayerFile {
                clusters: clusters
                    .iter()
                    .map(|c| ClusterFile {
                        tag: (c.tag().layer, c.tag().ancestor_index),
                        mask: BASE64.encode(pack_bits(c.mask())),
                        weights: c.weights().to_vec(),
                    })
                    .collect(),
            })
            .collect(),
        output_weights: net
            .output_weights()
            .chunks(out_cols)
            .map(|row| row.to_vec())
            .collect(),
    };
    serde_json::to_vec(&file).map_err(|e| ArchError::Corrupt(format!("encoding failed: {e}")))
}

/// Parses the versioned JSON format back into a validated network.
pub fn deserialize(bytes: &[u8]) -> Result<NetworkArchitecture, ArchError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| ArchError::Malformed {
            offset: byte_offset(bytes, e.line(), e.column()),
            detail: e.to_string(),
        })?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ArchError::Malformed {
            offset: 0,
            detail: "missing or non-numeric version field".to_string(),
        })?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(ArchError::VersionMismatch {
            found: version as u32,
            supported: FORMAT_VERSION,
        });
    }
    let file: ArchFile = serde_json::from_value(value).map_err(|e| ArchError::Malformed {
        offset: 0,
        detail: e.to_string(),
    })?;

    let malformed = |detail: String| ArchError::Malformed { offset: 0, detail };
    if file.layer_widths.len() < 3 {
        return Err(malformed(format!(
            "layer_widths has {} entries, need at least 3",
            file.layer_widths.len()
        )));
    }
    let mut hidden_layers = Vec::with_capacity(file.layers.len());
    for (layer_idx, layer) in file.layers.into_iter().enumerate() {
        let prev_width = *file
            .layer_widths
            .get(layer_idx)
            .ok_or_else(|| malformed(format!("layer {layer_idx} beyond layer_widths")))?;
        let mut clusters = Vec::with_capacity(layer.clusters.len());
        for cf in layer.clusters {
            let raw = BASE64
                .decode(&cf.mask)
                .map_err(|e| malformed(format!("cluster {:?}: bad base64 mask: {e}", cf.tag)))?;
            let mask = unpack_bits(&raw, prev_width)
                .map_err(|e| malformed(format!("cluster {:?}: {e}", cf.tag)))?;
            let tag = GeneTag::new(cf.tag.0, cf.tag.1);
            let cluster = Cluster::new(tag, mask, cf.weights)
                .map_err(|e| malformed(format!("invalid cluster: {e}")))?;
            clusters.push(cluster);
        }
        hidden_layers.push(clusters);
    }
    let output_weights: Vec<f64> = file.output_weights.into_iter().flatten().collect();
    NetworkArchitecture::from_parts(
        file.layer_widths,
        hidden_layers,
        output_weights,
        file.generation,
        file.network_id,
        file.rng_seed,
    )
    .map_err(|e| malformed(e.to_string()))
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut line_start = 0usize;
    if line > 1 {
        let mut current = 1usize;
        for (i, &b) in bytes.iter().enumerate() {
            if b == b'\n' {
                current += 1;
                line_start = i + 1;
                if current == line {
                    break;
                }
            }
        }
    }
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::super::{ancestor_architecture, deserialize, serialize, ArchError};
    use super::*;

    #[test]
    fn round_trip_is_identity_on_ancestor() {
        let net = ancestor_architecture(&[4, 3, 2], 7).unwrap();
        let bytes = serialize(&net).unwrap();
        let back = deserialize(&bytes).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn round_trip_on_random_masked_networks() {
        for seed in 0..100u64 {
            let net = crate::testutil::random_masked_network(&[6, 5, 4, 3], seed);
            let back = deserialize(&serialize(&net).unwrap()).unwrap();
            assert_eq!(net, back, "seed {seed}");
        }
    }

    #[test]
    fn truncated_stream_is_malformed() {
        let net = ancestor_architecture(&[4, 3, 2], 7).unwrap();
        let bytes = serialize(&net).unwrap();
        let err = deserialize(&bytes[..bytes.len() / 2]).unwrap_err();
        match err {
            ArchError::Malformed { offset, .. } => assert!(offset > 0),
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_reported() {
        let net = ancestor_architecture(&[4, 3, 2], 7).unwrap();
        let text = String::from_utf8(serialize(&net).unwrap()).unwrap();
        let bumped = text.replacen("\"version\":1", "\"version\":9", 1);
        match deserialize(bumped.as_bytes()).unwrap_err() {
            ArchError::VersionMismatch { found, supported } => {
                assert_eq!(found, 9);
                assert_eq!(supported, FORMAT_VERSION);
            }
            other => panic!("expected VersionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_payload_is_rejected_with_detail() {
        let net = ancestor_architecture(&[4, 3, 2], 7).unwrap();
        let text = String::from_utf8(serialize(&net).unwrap()).unwrap();
        // Claim a weight on a masked-out synapse by clearing the first mask.
        let broken = text.replacen(&BASE64.encode(pack_bits(&[true; 4])), "AA==", 1);
        assert!(matches!(
            deserialize(broken.as_bytes()),
            Err(ArchError::Malformed { .. })
        ));
    }

    #[test]
    fn byte_offsets_account_for_newlines() {
        let text = b"{\n  \"version\": oops\n}";
        let err = deserialize(text).unwrap_err();
        match err {
            ArchError::Malformed { offset, .. } => {
                // serde_json points at line 2; the offset lands inside it.
                assert!(offset >= 2 && offset < text.len(), "offset {offset}");
            }
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn bit_packing_round_trips_odd_lengths() {
        for len in [1usize, 7, 8, 9, 13, 31] {
            let mask: Vec<bool> = (0..len).map(|i| i % 3 == 0).collect();
            assert_eq!(unpack_bits(&pack_bits(&mask), len).unwrap(), mask);
        }
    }
}
