//! m-parent evolutionary synthesis.
//!
//! Offspring construction factors into two sampling stages: per aligned
//! cluster group, survival is drawn from the mated cluster strengths under
//! the cluster budget; per surviving cluster, each candidate synapse
//! survives according to its mated weight magnitude under the synapse
//! budget. Alignment is either gene-tagged (only clusters born at the same
//! ancestral position mate) or positional (clusters pair up by surviving
//! rank, mismatch allowed).

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Cluster, GeneTag, NetworkArchitecture};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("lineage mismatch: parent has layer widths {found:?}, expected {expected:?}")]
    LineageMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("no survival signal: strengths are empty or all zero")]
    NoSignal,
    #[error("policy expects {policy_m} parents, got {parents}")]
    ParentCountMismatch { policy_m: usize, parents: usize },
    #[error("invalid environmental factor: {0}")]
    InvalidFactor(String),
    #[error("invalid mating policy: {0}")]
    InvalidPolicy(String),
}

/// Percentage survival budgets for clusters and synapses, both in (0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentalFactors {
    pub r_cluster: f64,
    pub r_synapse: f64,
}

impl EnvironmentalFactors {
    pub fn new(r_cluster: f64, r_synapse: f64) -> Result<Self, SynthesisError> {
        let f = Self {
            r_cluster,
            r_synapse,
        };
        f.check()?;
        Ok(f)
    }

    pub fn check(&self) -> Result<(), SynthesisError> {
        for (name, r) in [("r_cluster", self.r_cluster), ("r_synapse", self.r_synapse)] {
            if !(r > 0.0 && r <= 100.0) {
                return Err(SynthesisError::InvalidFactor(format!(
                    "{name} must lie in (0, 100], got {r}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for EnvironmentalFactors {
    fn default() -> Self {
        Self {
            r_cluster: 50.0,
            r_synapse: 50.0,
        }
    }
}

/// How per-parent contributions combine in the mating functions.
///
/// The product form collapses or explodes in scale as m grows, so the
/// geometric mean (same form, m-th root) is the default; the literal
/// product is kept for fidelity experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    GeometricMean,
    LiteralProduct,
}

/// Per-parent mating coefficients; `None` means all 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaScheme {
    pub mode: AlphaMode,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
}

impl AlphaScheme {
    fn coefficient(&self, parent: usize) -> f64 {
        self.coefficients.as_ref().map_or(1.0, |c| c[parent])
    }
}

impl Default for AlphaScheme {
    fn default() -> Self {
        Self {
            mode: AlphaMode::GeometricMean,
            coefficients: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    GeneTagged,
    Positional,
}

/// Parent count, alignment mode, and mating coefficients for one synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatingPolicy {
    pub alignment: Alignment,
    pub m: usize,
    #[serde(default)]
    pub alpha: AlphaScheme,
}

impl MatingPolicy {
    pub fn new(alignment: Alignment, m: usize) -> Self {
        Self {
            alignment,
            m,
            alpha: AlphaScheme::default(),
        }
    }

    pub fn check(&self) -> Result<(), SynthesisError> {
        if self.m == 0 {
            return Err(SynthesisError::InvalidPolicy(
                "parent count m must be at least 1".into(),
            ));
        }
        if let Some(coeffs) = &self.alpha.coefficients {
            if coeffs.len() != self.m {
                return Err(SynthesisError::InvalidPolicy(format!(
                    "alpha has {} coefficients for m = {}",
                    coeffs.len(),
                    self.m
                )));
            }
            if coeffs.iter().any(|&a| a <= 0.0 || a.is_nan()) {
                return Err(SynthesisError::InvalidPolicy(
                    "alpha coefficients must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

impl Default for MatingPolicy {
    fn default() -> Self {
        Self::new(Alignment::GeneTagged, 5)
    }
}

/// Identity of an alignment group: the shared gene tag, or the surviving
/// position when mating without tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Tag(GeneTag),
    Position(usize),
}

/// One mating group: the parents that bring a cluster to this tag or
/// position. Members are ordered by parent index and never empty.
#[derive(Debug, Clone)]
pub struct AlignmentGroup<'a> {
    pub key: GroupKey,
    pub members: Vec<(usize, &'a Cluster)>,
}

fn check_lineage(parents: &[&NetworkArchitecture]) -> Result<(), SynthesisError> {
    let expected = parents[0].layer_widths();
    for p in &parents[1..] {
        if p.layer_widths() != expected {
            return Err(SynthesisError::LineageMismatch {
                expected: expected.to_vec(),
                found: p.layer_widths().to_vec(),
            });
        }
    }
    Ok(())
}

/// Groups the parents' clusters for mating, one group list per hidden layer.
///
/// Gene-tagged: one group per tag in the union of the parents' tag sets,
/// membership being exactly the parents that still carry the tag.
/// Positional: parents' clusters stand in tag order and group i pairs the
/// i-th cluster of every parent that still has that many.
pub fn align_clusters<'a>(
    parents: &[&'a NetworkArchitecture],
    policy: &MatingPolicy,
) -> Result<Vec<Vec<AlignmentGroup<'a>>>, SynthesisError> {
    if parents.is_empty() {
        return Err(SynthesisError::ParentCountMismatch {
            policy_m: policy.m,
            parents: 0,
        });
    }
    check_lineage(parents)?;
    let hidden_count = parents[0].layer_widths().len() - 2;
    let mut per_layer = Vec::with_capacity(hidden_count);
    for layer in 0..hidden_count {
        let groups = match policy.alignment {
            Alignment::GeneTagged => {
                let mut by_tag: std::collections::BTreeMap<GeneTag, Vec<(usize, &Cluster)>> =
                    std::collections::BTreeMap::new();
                for (k, parent) in parents.iter().enumerate() {
                    for cluster in &parent.hidden_layers()[layer] {
                        by_tag.entry(cluster.tag()).or_default().push((k, cluster));
                    }
                }
                by_tag
                    .into_iter()
                    .map(|(tag, members)| AlignmentGroup {
                        key: GroupKey::Tag(tag),
                        members,
                    })
                    .collect()
            }
            Alignment::Positional => {
                let counts: Vec<usize> = parents
                    .iter()
                    .map(|p| p.hidden_layers()[layer].len())
                    .collect();
                let group_count = counts.iter().copied().max().unwrap_or(0);
                (0..group_count)
                    .map(|i| AlignmentGroup {
                        key: GroupKey::Position(i),
                        members: parents
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| counts[*k] > i)
                            .map(|(k, p)| (k, &p.hidden_layers()[layer][i]))
                            .collect(),
                    })
                    .collect()
            }
        };
        per_layer.push(groups);
    }
    Ok(per_layer)
}

/// Combined cluster strength of a group: per member, the mean absolute live
/// weight scaled by its alpha coefficient, folded as a product (literal
/// mode) or its m-th root (geometric mode). Zero strengths absorb.
pub fn mate_cluster_strengths(group: &AlignmentGroup, alpha: &AlphaScheme) -> f64 {
    let mut product = 1.0;
    for &(parent, cluster) in &group.members {
        product *= alpha.coefficient(parent) * cluster.mean_abs_live_weight();
    }
    match alpha.mode {
        AlphaMode::GeometricMean => product.powf(1.0 / group.members.len() as f64),
        AlphaMode::LiteralProduct => product,
    }
}

/// Combined synapse weights of a group, one entry per potential incoming
/// synapse. Positions no member carries stay 0. In geometric mode the
/// magnitude is the root of the product of contributor magnitudes and the
/// sign follows the contributor majority (ties go to the lowest-index
/// parent); literal mode multiplies the signed weights outright.
pub fn mate_synapse_weights(group: &AlignmentGroup, alpha: &AlphaScheme) -> Vec<f64> {
    let width = group.members[0].1.mask().len();
    let mut combined = vec![0.0; width];
    for (j, slot) in combined.iter_mut().enumerate() {
        let mut product = 1.0;
        let mut contributors = 0usize;
        let mut positive = 0usize;
        let mut first_sign = 1.0f64;
        for &(parent, cluster) in &group.members {
            if !cluster.mask()[j] {
                continue;
            }
            let w = cluster.weights()[j];
            let a = alpha.coefficient(parent);
            if contributors == 0 {
                first_sign = if w < 0.0 { -1.0 } else { 1.0 };
            }
            if w >= 0.0 {
                positive += 1;
            }
            product *= match alpha.mode {
                AlphaMode::GeometricMean => a * w.abs(),
                AlphaMode::LiteralProduct => a * w,
            };
            contributors += 1;
        }
        if contributors == 0 {
            continue;
        }
        *slot = match alpha.mode {
            AlphaMode::GeometricMean => {
                let magnitude = product.powf(1.0 / contributors as f64);
                let negative = contributors - positive;
                let sign = if positive > negative {
                    1.0
                } else if negative > positive {
                    -1.0
                } else {
                    first_sign
                };
                sign * magnitude
            }
            AlphaMode::LiteralProduct => product,
        };
    }
    combined
}

/// Maps strengths to survival probabilities under a percentage budget r:
/// `p = min(1, (r/100) * s / mean(s))`. Scale-invariant in the strengths,
/// and exactly r/100 everywhere when strengths are uniform.
pub fn survival_probabilities(strengths: &[f64], r: f64) -> Result<Vec<f64>, SynthesisError> {
    debug_assert!(strengths.iter().all(|&s| s >= 0.0));
    if strengths.is_empty() {
        return Err(SynthesisError::NoSignal);
    }
    let mean = strengths.iter().sum::<f64>() / strengths.len() as f64;
    if mean == 0.0 {
        return Err(SynthesisError::NoSignal);
    }
    Ok(strengths
        .iter()
        .map(|&s| ((r / 100.0) * (s / mean)).min(1.0))
        .collect())
}

/// Synthesizes one offspring from `parents` under the given policy and
/// environmental budgets. Deterministic for a fixed seed.
///
/// Cluster survival is drawn per alignment group from the mated strengths
/// (normalized within each hidden layer); synapse survival is drawn per
/// candidate position of each surviving cluster from the mated weight
/// magnitudes. A synthesis in which every group of a layer dies yields a
/// degenerate offspring, deliberately not an error.
pub fn synthesize_offspring(
    parents: &[&NetworkArchitecture],
    policy: &MatingPolicy,
    env: &EnvironmentalFactors,
    generation: u32,
    seed: u64,
) -> Result<NetworkArchitecture, SynthesisError> {
    policy.check()?;
    env.check()?;
    if parents.len() != policy.m {
        return Err(SynthesisError::ParentCountMismatch {
            policy_m: policy.m,
            parents: parents.len(),
        });
    }
    let aligned = align_clusters(parents, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hidden_layers = Vec::with_capacity(aligned.len());

    for groups in &aligned {
        let mut clusters: Vec<Cluster> = Vec::new();
        let mut used_tags: BTreeSet<GeneTag> = BTreeSet::new();
        if groups.is_empty() {
            hidden_layers.push(clusters);
            continue;
        }
        let strengths: Vec<f64> = groups
            .iter()
            .map(|g| mate_cluster_strengths(g, &policy.alpha))
            .collect();
        let cluster_probs = match survival_probabilities(&strengths, env.r_cluster) {
            Ok(p) => p,
            // A layer with no strength signal at all goes extinct.
            Err(SynthesisError::NoSignal) => {
                hidden_layers.push(clusters);
                continue;
            }
            Err(e) => return Err(e),
        };
        let survived: Vec<bool> = cluster_probs
            .iter()
            .map(|&p| rng.random::<f64>() < p)
            .collect();

        for (group, _) in groups.iter().zip(&survived).filter(|(_, &s)| s) {
            let combined = mate_synapse_weights(group, &policy.alpha);
            // Candidate positions: anywhere some member has a live synapse.
            let candidates: Vec<usize> = (0..combined.len())
                .filter(|&j| group.members.iter().any(|(_, c)| c.mask()[j]))
                .collect();
            let magnitudes: Vec<f64> = candidates.iter().map(|&j| combined[j].abs()).collect();
            let synapse_probs = match survival_probabilities(&magnitudes, env.r_synapse) {
                Ok(p) => p,
                Err(SynthesisError::NoSignal) => continue, // cluster dies
                Err(e) => return Err(e),
            };
            let mut mask = vec![false; combined.len()];
            let mut weights = vec![0.0; combined.len()];
            let mut any = false;
            for (&j, &p) in candidates.iter().zip(&synapse_probs) {
                if rng.random::<f64>() < p {
                    mask[j] = true;
                    weights[j] = combined[j];
                    any = true;
                }
            }
            if !any {
                continue;
            }
            let tag = match group.key {
                GroupKey::Tag(tag) => {
                    if !used_tags.insert(tag) {
                        continue; // cannot happen: tags are unique per layer
                    }
                    tag
                }
                // Positional offspring inherit the lowest-index contributing
                // parent's tag; on a collision, fall through the members in
                // parent order and drop the cluster if every tag is taken.
                GroupKey::Position(_) => {
                    match group
                        .members
                        .iter()
                        .map(|(_, c)| c.tag())
                        .find(|t| !used_tags.contains(t))
                    {
                        Some(tag) => {
                            used_tags.insert(tag);
                            tag
                        }
                        None => continue,
                    }
                }
            };
            clusters.push(
                Cluster::new(tag, mask, weights)
                    .expect("sampled cluster satisfies construction invariants"),
            );
        }
        hidden_layers.push(clusters);
    }

    let out_len = parents[0].output_weights().len();
    let mut output_weights = vec![0.0; out_len];
    for parent in parents {
        for (acc, &w) in output_weights.iter_mut().zip(parent.output_weights()) {
            *acc += w;
        }
    }
    for w in &mut output_weights {
        *w /= parents.len() as f64;
    }

    NetworkArchitecture::from_parts(
        parents[0].layer_widths().to_vec(),
        hidden_layers,
        output_weights,
        generation,
        format!("net-{seed:016x}"),
        seed,
    )
    .map_err(|e| SynthesisError::InvalidPolicy(format!("offspring assembly failed: {e}")))
}
