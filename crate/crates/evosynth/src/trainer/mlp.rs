//! Masked feed-forward compute engine.
//!
//! Internal mutable mirror of a [`NetworkArchitecture`] used during
//! training: per cluster a full-width weight row plus the list of live
//! column indices, so masked positions are never read or written. Hidden
//! activations live in ancestor-width buffers (dead positions stay zero),
//! which lets synapse index j always mean "ancestor position j of the
//! previous layer".

use crate::arch::{Cluster, GeneTag, NetworkArchitecture};

use super::TrainerError;

struct Row {
    tag: GeneTag,
    /// Live column indices; `None` when the row is fully dense.
    live: Option<Vec<u32>>,
    weights: Vec<f64>,
    mask: Vec<bool>,
}

struct Layer {
    width: usize,
    rows: Vec<Row>,
}

pub(super) struct Engine {
    layer_widths: Vec<usize>,
    layers: Vec<Layer>,
    /// Row-major `last_hidden_width x out_cols`.
    output: Vec<f64>,
    out_cols: usize,
}

/// Scratch buffers reused across examples.
pub(super) struct Workspace {
    /// Per hidden layer: pre-activations per row.
    zs: Vec<Vec<f64>>,
    /// Per hidden layer: activations at ancestor positions.
    acts: Vec<Vec<f64>>,
    /// Gradient of the loss w.r.t. activations, one buffer per layer.
    dacts: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    logits: Vec<f64>,
}

pub(super) struct Gradients {
    rows: Vec<Vec<Vec<f64>>>,
    output: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut sums = [0.0f64; 4];
    let mut chunks = a.chunks_exact(4).zip(b.chunks_exact(4));
    for (ca, cb) in &mut chunks {
        sums[0] += ca[0] * cb[0];
        sums[1] += ca[1] * cb[1];
        sums[2] += ca[2] * cb[2];
        sums[3] += ca[3] * cb[3];
    }
    let mut total = (sums[0] + sums[1]) + (sums[2] + sums[3]);
    let rem = n - n % 4;
    for i in rem..n {
        total += a[i] * b[i];
    }
    total
}

impl Engine {
    pub(super) fn from_network(net: &NetworkArchitecture) -> Self {
        let layers = net
            .hidden_layers()
            .iter()
            .enumerate()
            .map(|(layer_idx, clusters)| Layer {
                width: net.layer_widths()[layer_idx + 1],
                rows: clusters
                    .iter()
                    .map(|c| {
                        let live_count = c.live_count();
                        let live = if live_count == c.mask().len() {
                            None
                        } else {
                            Some(
                                c.mask()
                                    .iter()
                                    .enumerate()
                                    .filter(|(_, &m)| m)
                                    .map(|(j, _)| j as u32)
                                    .collect(),
                            )
                        };
                        Row {
                            tag: c.tag(),
                            live,
                            weights: c.weights().to_vec(),
                            mask: c.mask().to_vec(),
                        }
                    })
                    .collect(),
            })
            .collect();
        Self {
            layer_widths: net.layer_widths().to_vec(),
            layers,
            output: net.output_weights().to_vec(),
            out_cols: net.output_width(),
        }
    }

    /// Rebuilds an architecture with the trained weights. Masks are carried
    /// over untouched from the engine rows.
    pub(super) fn into_network(self, template: &NetworkArchitecture) -> NetworkArchitecture {
        let hidden_layers = self
            .layers
            .into_iter()
            .map(|layer| {
                layer
                    .rows
                    .into_iter()
                    .map(|row| {
                        Cluster::new(row.tag, row.mask, row.weights)
                            .expect("training preserves cluster invariants")
                    })
                    .collect()
            })
            .collect();
        NetworkArchitecture::from_parts(
            self.layer_widths,
            hidden_layers,
            self.output,
            template.generation(),
            template.network_id().to_string(),
            template.rng_seed(),
        )
        .expect("training preserves network invariants")
    }

    pub(super) fn workspace(&self) -> Workspace {
        Workspace {
            zs: self
                .layers
                .iter()
                .map(|l| vec![0.0; l.rows.len()])
                .collect(),
            acts: self.layers.iter().map(|l| vec![0.0; l.width]).collect(),
            dacts: self.layers.iter().map(|l| vec![0.0; l.width]).collect(),
            probs: vec![0.0; self.out_cols],
            logits: vec![0.0; self.out_cols],
        }
    }

    pub(super) fn gradients(&self) -> Gradients {
        Gradients {
            rows: self
                .layers
                .iter()
                .map(|l| l.rows.iter().map(|r| vec![0.0; r.weights.len()]).collect())
                .collect(),
            output: vec![0.0; self.output.len()],
        }
    }

    /// Forward pass for one example; fills activations and class
    /// probabilities, returns the cross-entropy pieces (max logit and
    /// log-sum-exp) so callers can form a stable loss.
    pub(super) fn forward_example(&self, x: &[f64], ws: &mut Workspace) {
        for (layer_idx, layer) in self.layers.iter().enumerate() {
            let (prev, acts) = if layer_idx == 0 {
                (x, &mut ws.acts[0])
            } else {
                let (lower, upper) = ws.acts.split_at_mut(layer_idx);
                (&lower[layer_idx - 1][..], &mut upper[0])
            };
            acts.fill(0.0);
            let zs = &mut ws.zs[layer_idx];
            for (r, row) in layer.rows.iter().enumerate() {
                let z = match &row.live {
                    None => dot(&row.weights, prev),
                    Some(live) => {
                        let mut acc = 0.0;
                        for &j in live {
                            let j = j as usize;
                            acc += row.weights[j] * prev[j];
                        }
                        acc
                    }
                };
                zs[r] = z;
                if z > 0.0 {
                    acts[row.tag.ancestor_index] = z;
                }
            }
        }

        // Dense output layer over the last hidden activations (or straight
        // over the input when there are no hidden layers to speak of).
        ws.logits.fill(0.0);
        if let Some(last) = self.layers.last() {
            let acts = &ws.acts[self.layers.len() - 1];
            for row in &last.rows {
                let p = row.tag.ancestor_index;
                let a = acts[p];
                if a == 0.0 {
                    continue;
                }
                let wrow = &self.output[p * self.out_cols..(p + 1) * self.out_cols];
                for (logit, &w) in ws.logits.iter_mut().zip(wrow) {
                    *logit += a * w;
                }
            }
        }

        let max = ws.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (p, &z) in ws.probs.iter_mut().zip(&ws.logits) {
            let e = (z - max).exp();
            *p = e;
            sum += e;
        }
        for p in &mut ws.probs {
            *p /= sum;
        }
    }

    /// Cross-entropy of the class probabilities already in the workspace.
    pub(super) fn loss_of(ws: &Workspace, label: u8) -> f64 {
        -ws.probs[label as usize].max(1e-300).ln()
    }

    /// Accumulates gradients for one example whose forward pass is in `ws`.
    /// Gradients of masked synapses are structurally zero: only live
    /// columns are ever touched.
    pub(super) fn backward_example(
        &self,
        x: &[f64],
        label: u8,
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) {
        // dL/dz_out = probs - onehot(label)
        let mut dlogits = std::mem::take(&mut ws.logits);
        dlogits.copy_from_slice(&ws.probs);
        dlogits[label as usize] -= 1.0;

        let last_idx = self.layers.len() - 1;
        ws.dacts[last_idx].fill(0.0);
        {
            let acts = &ws.acts[last_idx];
            let dact = &mut ws.dacts[last_idx];
            for row in &self.layers[last_idx].rows {
                let p = row.tag.ancestor_index;
                let a = acts[p];
                if a == 0.0 {
                    continue;
                }
                let grow = &mut grads.output[p * self.out_cols..(p + 1) * self.out_cols];
                let wrow = &self.output[p * self.out_cols..(p + 1) * self.out_cols];
                let mut d = 0.0;
                for ((g, &dz), &w) in grow.iter_mut().zip(&dlogits).zip(wrow) {
                    *g += a * dz;
                    d += w * dz;
                }
                dact[p] = d;
            }
        }
        ws.logits = dlogits;

        for layer_idx in (0..self.layers.len()).rev() {
            if layer_idx > 0 {
                let (lower, upper) = ws.dacts.split_at_mut(layer_idx);
                let dprev = &mut lower[layer_idx - 1];
                dprev.fill(0.0);
                let dact = &upper[0];
                let prev_acts = &ws.acts[layer_idx - 1];
                for (r, row) in self.layers[layer_idx].rows.iter().enumerate() {
                    let dz = relu_backprop(ws.zs[layer_idx][r], dact[row.tag.ancestor_index]);
                    if dz == 0.0 {
                        continue;
                    }
                    let grow = &mut grads.rows[layer_idx][r];
                    match &row.live {
                        None => {
                            for ((g, &a), (d, &w)) in grow
                                .iter_mut()
                                .zip(prev_acts)
                                .zip(dprev.iter_mut().zip(&row.weights))
                            {
                                *g += dz * a;
                                *d += dz * w;
                            }
                        }
                        Some(live) => {
                            for &j in live {
                                let j = j as usize;
                                grow[j] += dz * prev_acts[j];
                                dprev[j] += dz * row.weights[j];
                            }
                        }
                    }
                }
            } else {
                // First hidden layer: gradients flow into weights only, the
                // input needs no dact.
                let dact = &ws.dacts[0];
                for (r, row) in self.layers[0].rows.iter().enumerate() {
                    let dz = relu_backprop(ws.zs[0][r], dact[row.tag.ancestor_index]);
                    if dz == 0.0 {
                        continue;
                    }
                    let grow = &mut grads.rows[0][r];
                    match &row.live {
                        None => {
                            for (g, &a) in grow.iter_mut().zip(x) {
                                *g += dz * a;
                            }
                        }
                        Some(live) => {
                            for &j in live {
                                let j = j as usize;
                                grow[j] += dz * x[j];
                            }
                        }
                    }
                }
            }
        }
    }

    /// SGD step with the accumulated gradients scaled by `rate`, then
    /// clears the buffers.
    pub(super) fn apply(&mut self, rate: f64, grads: &mut Gradients) {
        for (layer, glayer) in self.layers.iter_mut().zip(&mut grads.rows) {
            for (row, grow) in layer.rows.iter_mut().zip(glayer) {
                match &row.live {
                    None => {
                        for (w, g) in row.weights.iter_mut().zip(grow.iter_mut()) {
                            *w -= rate * *g;
                            *g = 0.0;
                        }
                    }
                    Some(live) => {
                        for &j in live {
                            let j = j as usize;
                            row.weights[j] -= rate * grow[j];
                            grow[j] = 0.0;
                        }
                    }
                }
            }
        }
        for (w, g) in self.output.iter_mut().zip(&mut grads.output) {
            *w -= rate * *g;
            *g = 0.0;
        }
    }
}

#[inline]
fn relu_backprop(z: f64, upstream: f64) -> f64 {
    if z > 0.0 {
        upstream
    } else {
        0.0
    }
}

/// Validates that a flattened input batch matches the network width.
pub(super) fn batch_rows(net: &NetworkArchitecture, inputs: &[f64]) -> Result<usize, TrainerError> {
    let width = net.input_width();
    if width == 0 || !inputs.len().is_multiple_of(width) {
        return Err(TrainerError::WidthMismatch {
            expected: width,
            found: inputs.len(),
        });
    }
    Ok(inputs.len() / width)
}
