//! Architectural similarity as percentage overlap of gene-tagged clusters.
//!
//! `overlap(A, B) = |tags(A) ∩ tags(B)| / |tags(A)|`, the proportion of
//! A's clusters that also exist in B, asymmetric on purpose. Population
//! matrices average over all ordered off-diagonal pairs; a low average
//! means a generation of architecturally diverse networks.

use std::fmt::Write as _;

use thiserror::Error;

use crate::arch::NetworkArchitecture;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("overlap undefined: network {id} has no clusters")]
    UndefinedOverlap { id: String },
    #[error("population of {n} networks is too small for an overlap matrix (need 2)")]
    InsufficientPopulation { n: usize },
    #[error("lineage mismatch: networks do not share an ancestor tag universe")]
    LineageMismatch,
    #[error("generation {index}: {source}")]
    GenerationFailed {
        index: usize,
        source: Box<SimilarityError>,
    },
}

/// Pairwise overlap matrix for one population, with its ordered-pair
/// average.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    pub network_ids: Vec<String>,
    /// Row-major; entry (a, b) is overlap of a onto b.
    pub matrix: Vec<f64>,
    pub generation_average: f64,
}

impl OverlapReport {
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.matrix[a * self.network_ids.len() + b]
    }

    /// CSV rendering: header of network ids, one matrix row per network,
    /// then a `generation_average,<value>` trailer. Six decimal digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let n = self.network_ids.len();
        out.push_str(&self.network_ids.join(","));
        out.push('\n');
        for row in 0..n {
            for col in 0..n {
                if col > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:.6}", self.entry(row, col));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "generation_average,{:.6}", self.generation_average);
        out
    }
}

/// Proportion of `a`'s clusters that `b` also carries, by gene tag.
/// Undefined (an error) when `a` has no clusters.
pub fn percent_overlap(
    a: &NetworkArchitecture,
    b: &NetworkArchitecture,
) -> Result<f64, SimilarityError> {
    if a.layer_widths() != b.layer_widths() {
        return Err(SimilarityError::LineageMismatch);
    }
    let tags_a = a.tag_set();
    if tags_a.is_empty() {
        return Err(SimilarityError::UndefinedOverlap {
            id: a.network_id().to_string(),
        });
    }
    let tags_b = b.tag_set();
    let shared = tags_a.intersection(&tags_b).count();
    Ok(shared as f64 / tags_a.len() as f64)
}

/// Full ordered-pair overlap matrix over a population, diagonal pinned to
/// 1, average over the off-diagonal entries.
pub fn overlap_matrix(
    population: &[&NetworkArchitecture],
) -> Result<OverlapReport, SimilarityError> {
    let n = population.len();
    if n < 2 {
        return Err(SimilarityError::InsufficientPopulation { n });
    }
    let mut matrix = vec![0.0; n * n];
    let mut sum = 0.0;
    for (i, a) in population.iter().enumerate() {
        for (j, b) in population.iter().enumerate() {
            let value = if i == j { 1.0 } else { percent_overlap(a, b)? };
            matrix[i * n + j] = value;
            if i != j {
                sum += value;
            }
        }
    }
    Ok(OverlapReport {
        network_ids: population
            .iter()
            .map(|p| p.network_id().to_string())
            .collect(),
        matrix,
        generation_average: sum / (n * (n - 1)) as f64,
    })
}

/// Generation averages for a sequence of populations, in order. A failing
/// generation is reported with its index.
pub fn diversity_trajectory(
    generations: &[Vec<&NetworkArchitecture>],
) -> Result<Vec<f64>, SimilarityError> {
    generations
        .iter()
        .enumerate()
        .map(|(index, population)| {
            overlap_matrix(population)
                .map(|r| r.generation_average)
                .map_err(|source| SimilarityError::GenerationFailed {
                    index,
                    source: Box::new(source),
                })
        })
        .collect()
}
