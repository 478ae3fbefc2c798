//! Helpers for building randomized fixtures in tests. Not part of the
//! supported API surface.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{ancestor_architecture, Cluster, NetworkArchitecture};

/// A valid network with a random subset of clusters kept and random mask
/// bits cleared (at least one live synapse per surviving cluster).
pub fn random_masked_network(layer_widths: &[usize], seed: u64) -> NetworkArchitecture {
    let ancestor = ancestor_architecture(layer_widths, seed ^ 0xA5A5_A5A5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for clusters in ancestor.hidden_layers() {
        let mut kept = Vec::new();
        for cluster in clusters {
            if !kept.is_empty() && rng.random::<f64>() < 0.3 {
                continue; // drop this cluster entirely
            }
            let width = cluster.mask().len();
            let keep_bit: Vec<bool> = (0..width).map(|_| rng.random::<f64>() < 0.6).collect();
            let mut mask = Vec::with_capacity(width);
            let mut weights = Vec::with_capacity(width);
            for (j, (&w, &keep)) in cluster.weights().iter().zip(&keep_bit).enumerate() {
                let live = keep || j == 0; // guarantee one live synapse
                mask.push(live);
                weights.push(if live { w } else { 0.0 });
            }
            kept.push(Cluster::new(cluster.tag(), mask, weights).unwrap());
        }
        layers.push(kept);
    }
    NetworkArchitecture::from_parts(
        layer_widths.to_vec(),
        layers,
        ancestor.output_weights().to_vec(),
        rng.random_range(1..5),
        format!("random-{seed}"),
        seed,
    )
    .unwrap()
}
