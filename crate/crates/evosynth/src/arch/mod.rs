//! Sparse, gene-tagged network architectures.
//!
//! A network is a stack of hidden layers made of [`Cluster`]s (one hidden
//! unit plus its incoming synapses, gated by an existence mask) and a dense
//! output matrix. Every cluster carries a [`GeneTag`] naming the position it
//! occupied in the generation-0 ancestor, which is what alignment and
//! overlap measurement operate on.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

mod serial;

pub use serial::{deserialize, serialize, FORMAT_VERSION};

/// Bytes charged per live synapse in storage accounting.
pub const BYTES_PER_SYNAPSE: usize = 4;

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("corrupt architecture: {0}")]
    Corrupt(String),
    #[error("malformed input at byte {offset}: {detail}")]
    Malformed { offset: usize, detail: String },
    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
}

/// Immutable ancestor coordinate of a cluster: which hidden layer, and which
/// position in that layer of the generation-0 network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GeneTag {
    pub layer: usize,
    pub ancestor_index: usize,
}

impl GeneTag {
    pub fn new(layer: usize, ancestor_index: usize) -> Self {
        Self {
            layer,
            ancestor_index,
        }
    }
}

impl std::fmt::Display for GeneTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.layer, self.ancestor_index)
    }
}

/// One hidden unit: its gene tag, the existence mask over potential incoming
/// synapses, and the weights of those synapses. Masked-out positions hold an
/// exact 0.0 weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    tag: GeneTag,
    mask: Vec<bool>,
    weights: Vec<f64>,
}

impl Cluster {
    /// Builds a cluster, rejecting the invariant violations a caller could
    /// introduce: length mismatch, a weight under a cleared mask bit, or an
    /// all-zero mask (dead clusters are dropped, never stored).
    pub fn new(tag: GeneTag, mask: Vec<bool>, weights: Vec<f64>) -> Result<Self, ArchError> {
        if mask.len() != weights.len() {
            return Err(ArchError::Corrupt(format!(
                "cluster {tag}: mask length {} != weights length {}",
                mask.len(),
                weights.len()
            )));
        }
        if !mask.iter().any(|&b| b) {
            return Err(ArchError::Corrupt(format!(
                "cluster {tag}: all-zero mask (dead clusters may not exist)"
            )));
        }
        for (j, (&m, &w)) in mask.iter().zip(&weights).enumerate() {
            if !m && w != 0.0 {
                return Err(ArchError::Corrupt(format!(
                    "cluster {tag}: weight {w} stored under cleared mask bit {j}"
                )));
            }
        }
        Ok(Self { tag, mask, weights })
    }

    pub fn tag(&self) -> GeneTag {
        self.tag
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn live_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Mean absolute weight over live synapses, the cluster strength
    /// statistic used by survival sampling.
    pub fn mean_abs_live_weight(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (&m, &w) in self.mask.iter().zip(&self.weights) {
            if m {
                sum += w.abs();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Validity verdict for a network. `Corrupt` means a structural invariant is
/// broken; `Degenerate` means the structure is sound but the network can no
/// longer represent anything (an empty hidden layer or no live synapses).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Ok,
    Degenerate,
    Corrupt,
}

/// Storage accounting for a network: live synapse count (hidden mask-1
/// synapses plus the always-dense output matrix) at 4 bytes per weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StorageReport {
    pub live_synapses: usize,
    pub bytes: usize,
    pub live_clusters: usize,
}

/// A layered sparse network. Hidden layers hold tag-sorted clusters; the
/// output matrix stays dense and spans the ancestor width of the last hidden
/// layer, so positions whose cluster died simply contribute nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkArchitecture {
    layer_widths: Vec<usize>,
    hidden_layers: Vec<Vec<Cluster>>,
    /// Row-major `last_hidden_width x output_width`.
    output_weights: Vec<f64>,
    generation: u32,
    network_id: String,
    rng_seed: u64,
}

impl NetworkArchitecture {
    /// Assembles a network from parts, sorting each layer's clusters into
    /// canonical tag order and rejecting anything corrupt. Degenerate
    /// networks (empty hidden layers) are allowed through; `validate`
    /// reports them.
    pub fn from_parts(
        layer_widths: Vec<usize>,
        mut hidden_layers: Vec<Vec<Cluster>>,
        output_weights: Vec<f64>,
        generation: u32,
        network_id: String,
        rng_seed: u64,
    ) -> Result<Self, ArchError> {
        check_widths(&layer_widths)?;
        let hidden_count = layer_widths.len() - 2;
        if hidden_layers.len() != hidden_count {
            return Err(ArchError::Corrupt(format!(
                "expected {hidden_count} hidden layers, found {}",
                hidden_layers.len()
            )));
        }
        for (layer_idx, clusters) in hidden_layers.iter_mut().enumerate() {
            clusters.sort_by_key(|c| c.tag());
            let prev_width = layer_widths[layer_idx];
            let layer_width = layer_widths[layer_idx + 1];
            let mut seen = BTreeSet::new();
            for cluster in clusters.iter() {
                let tag = cluster.tag();
                if tag.layer != layer_idx {
                    return Err(ArchError::Corrupt(format!(
                        "cluster tagged {tag} stored in hidden layer {layer_idx}"
                    )));
                }
                if tag.ancestor_index >= layer_width {
                    return Err(ArchError::Corrupt(format!(
                        "tag {tag} outside ancestor layer width {layer_width}"
                    )));
                }
                if cluster.mask.len() != prev_width {
                    return Err(ArchError::Corrupt(format!(
                        "cluster {tag}: mask length {} != preceding width {prev_width}",
                        cluster.mask.len()
                    )));
                }
                if !seen.insert(tag) {
                    return Err(ArchError::Corrupt(format!(
                        "duplicate tag {tag} in hidden layer {layer_idx}"
                    )));
                }
            }
        }
        let out_rows = layer_widths[layer_widths.len() - 2];
        let out_cols = layer_widths[layer_widths.len() - 1];
        if output_weights.len() != out_rows * out_cols {
            return Err(ArchError::Corrupt(format!(
                "output weights: expected {out_rows}x{out_cols} entries, found {}",
                output_weights.len()
            )));
        }
        Ok(Self {
            layer_widths,
            hidden_layers,
            output_weights,
            generation,
            network_id,
            rng_seed,
        })
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Ancestor width of the hidden layer feeding the output matrix.
    pub fn last_hidden_width(&self) -> usize {
        self.layer_widths[self.layer_widths.len() - 2]
    }

    pub fn hidden_layers(&self) -> &[Vec<Cluster>] {
        &self.hidden_layers
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.output_weights
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn network_id(&self) -> &str {
        &self.network_id
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn with_network_id(mut self, id: impl Into<String>) -> Self {
        self.network_id = id.into();
        self
    }

    /// All gene tags present in the network, pooled over hidden layers (a
    /// tag already names its layer, so pooling loses nothing).
    pub fn tag_set(&self) -> BTreeSet<GeneTag> {
        self.hidden_layers
            .iter()
            .flatten()
            .map(|c| c.tag())
            .collect()
    }

    pub fn cluster_count(&self) -> usize {
        self.hidden_layers.iter().map(|l| l.len()).sum()
    }
}

fn check_widths(widths: &[usize]) -> Result<(), ArchError> {
    if widths.len() < 3 {
        return Err(ArchError::InvalidTopology(format!(
            "need at least 3 layer widths (input, hidden, output), got {}",
            widths.len()
        )));
    }
    if let Some(pos) = widths.iter().position(|&w| w == 0) {
        return Err(ArchError::InvalidTopology(format!(
            "layer width at position {pos} is zero"
        )));
    }
    Ok(())
}

/// Builds the fully dense generation-0 ancestor: every mask bit set, tags
/// assigned positionally, weights drawn from N(0, 1/sqrt(fan-in)).
/// Deterministic for a fixed seed.
pub fn ancestor_architecture(
    layer_widths: &[usize],
    seed: u64,
) -> Result<NetworkArchitecture, ArchError> {
    check_widths(layer_widths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hidden_layers = Vec::with_capacity(layer_widths.len() - 2);
    for layer_idx in 0..layer_widths.len() - 2 {
        let prev_width = layer_widths[layer_idx];
        let width = layer_widths[layer_idx + 1];
        let dist = Normal::new(0.0, 1.0 / (prev_width as f64).sqrt()).expect("finite stddev");
        let mut clusters = Vec::with_capacity(width);
        for k in 0..width {
            let weights: Vec<f64> = (0..prev_width).map(|_| dist.sample(&mut rng)).collect();
            clusters.push(Cluster {
                tag: GeneTag::new(layer_idx, k),
                mask: vec![true; prev_width],
                weights,
            });
        }
        hidden_layers.push(clusters);
    }
    let out_rows = layer_widths[layer_widths.len() - 2];
    let out_cols = layer_widths[layer_widths.len() - 1];
    let dist = Normal::new(0.0, 1.0 / (out_rows as f64).sqrt()).expect("finite stddev");
    let output_weights: Vec<f64> = (0..out_rows * out_cols)
        .map(|_| dist.sample(&mut rng))
        .collect();
    NetworkArchitecture::from_parts(
        layer_widths.to_vec(),
        hidden_layers,
        output_weights,
        0,
        "ancestor".to_string(),
        seed,
    )
}

/// Counts live weights: hidden synapses with a set mask bit plus the entire
/// output matrix, at [`BYTES_PER_SYNAPSE`] bytes each.
pub fn storage_size(net: &NetworkArchitecture) -> StorageReport {
    let hidden_live: usize = net
        .hidden_layers
        .iter()
        .flatten()
        .map(Cluster::live_count)
        .sum();
    let live_synapses = hidden_live + net.output_weights.len();
    StorageReport {
        live_synapses,
        bytes: BYTES_PER_SYNAPSE * live_synapses,
        live_clusters: net.cluster_count(),
    }
}

/// Full invariant scan. `from_parts` refuses to build corrupt networks, but
/// a deserialized or hand-assembled value can still be checked end to end.
pub fn validate(net: &NetworkArchitecture) -> Validity {
    if invariant_violations(net).is_empty() {
        let empty_layer = net.hidden_layers.iter().any(|l| l.is_empty());
        let hidden_live: usize = net
            .hidden_layers
            .iter()
            .flatten()
            .map(Cluster::live_count)
            .sum();
        if empty_layer || hidden_live == 0 {
            Validity::Degenerate
        } else {
            Validity::Ok
        }
    } else {
        Validity::Corrupt
    }
}

/// Every invariant violation in the network, as human-readable strings.
/// Empty for ok and degenerate networks.
pub fn invariant_violations(net: &NetworkArchitecture) -> Vec<String> {
    let mut problems = Vec::new();
    if net.layer_widths.len() < 3 || net.layer_widths.contains(&0) {
        problems.push("invalid layer widths".to_string());
        return problems;
    }
    if net.hidden_layers.len() != net.layer_widths.len() - 2 {
        problems.push(format!(
            "expected {} hidden layers, found {}",
            net.layer_widths.len() - 2,
            net.hidden_layers.len()
        ));
        return problems;
    }
    for (layer_idx, clusters) in net.hidden_layers.iter().enumerate() {
        let prev_width = net.layer_widths[layer_idx];
        let layer_width = net.layer_widths[layer_idx + 1];
        let mut seen = BTreeSet::new();
        for cluster in clusters {
            let tag = cluster.tag;
            if tag.layer != layer_idx {
                problems.push(format!("cluster {tag} stored in layer {layer_idx}"));
            }
            if tag.ancestor_index >= layer_width {
                problems.push(format!("tag {tag} outside ancestor width {layer_width}"));
            }
            if !seen.insert(tag) {
                problems.push(format!("duplicate tag {tag} in layer {layer_idx}"));
            }
            if cluster.mask.len() != prev_width || cluster.weights.len() != prev_width {
                problems.push(format!("cluster {tag} has wrong mask/weights length"));
                continue;
            }
            if !cluster.mask.iter().any(|&b| b) {
                problems.push(format!("cluster {tag} has all-zero mask"));
            }
            for (j, (&m, &w)) in cluster.mask.iter().zip(&cluster.weights).enumerate() {
                if !m && w != 0.0 {
                    problems.push(format!("cluster {tag}: weight under cleared mask bit {j}"));
                    break;
                }
            }
        }
    }
    let out_rows = net.layer_widths[net.layer_widths.len() - 2];
    let out_cols = net.layer_widths[net.layer_widths.len() - 1];
    if net.output_weights.len() != out_rows * out_cols {
        problems.push(format!(
            "output weights: expected {}x{} entries, found {}",
            out_rows,
            out_cols,
            net.output_weights.len()
        ));
    }
    problems
}
