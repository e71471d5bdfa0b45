//! One-round edge-classification GCN.
//!
//! * node encoder: `h0_v = node_encoder(f)`
//! * edge encoder: `h0_e = edge_encoder([euclidean, cosine])`
//! * edge update: `h_e = edge_update([h0_i, h0_j, h0_e])` with `i` the
//!   canonical (first) endpoint
//! * node update: `h_v = sum_j node_update([h0_v, h_(v,j)])` over neighbours
//!   `j` in ascending node order
//! * classifier: `y = softmax(classifier(h_e))`
//!
//! Only the edge predictions feed the training loss; the aggregated node
//! states are exposed in the trace and can receive an upstream gradient.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AssociationGraph;
use crate::math;
use crate::mlp::{Activation, LayerSpec, Mlp, MlpCache, MlpSpec, OutputGrad};

pub const CLASSES: usize = 2;

/// Block widths. Defaults reproduce the reference architecture
/// (2.7M parameters at `dim = 2048`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    /// Output width of each node-encoder layer; the last is the node state width.
    pub node_encoder: Vec<usize>,
    /// Output width of each edge-encoder layer; the last is the edge state width.
    pub edge_encoder: Vec<usize>,
    /// Width of the per-neighbour message.
    pub message_dim: usize,
    /// Width of the hidden edge state fed to the classifier.
    pub edge_hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_dim(crate::trajectory::DEFAULT_DIM)
    }
}

impl ModelConfig {
    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            node_encoder: vec![1024, 512, 128, 32],
            edge_encoder: vec![4, 4],
            message_dim: 32,
            edge_hidden_dim: 4,
        }
    }

    fn node_state(&self) -> usize {
        self.node_encoder.last().copied().unwrap_or(0)
    }

    fn edge_state(&self) -> usize {
        self.edge_encoder.last().copied().unwrap_or(0)
    }

    pub fn node_encoder_spec(&self) -> MlpSpec {
        MlpSpec::relu_chain(self.dim, &self.node_encoder)
    }

    pub fn edge_encoder_spec(&self) -> MlpSpec {
        MlpSpec::relu_chain(2, &self.edge_encoder)
    }

    pub fn node_update_spec(&self) -> MlpSpec {
        MlpSpec::relu_chain(self.node_state() + self.edge_hidden_dim, &[self.message_dim])
    }

    pub fn edge_update_spec(&self) -> MlpSpec {
        MlpSpec::relu_chain(2 * self.node_state() + self.edge_state(), &[self.edge_hidden_dim])
    }

    pub fn classifier_spec(&self) -> MlpSpec {
        MlpSpec {
            layers: vec![LayerSpec {
                in_dim: self.edge_hidden_dim,
                out_dim: CLASSES,
                activation: Activation::Softmax,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.message_dim == 0 || self.edge_hidden_dim == 0 {
            return Err(Error::InvalidConfig("zero model width".into()));
        }
        for spec in [
            self.node_encoder_spec(),
            self.edge_encoder_spec(),
            self.node_update_spec(),
            self.edge_update_spec(),
        ] {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Weights and biases of the five blocks. Also used for gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub node_encoder: Mlp,
    pub edge_encoder: Mlp,
    pub node_update: Mlp,
    pub edge_update: Mlp,
    pub classifier: Mlp,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParameters;

pub const BLOCK_NAMES: [&str; 5] = [
    "node_encoder",
    "edge_encoder",
    "node_update",
    "edge_update",
    "classifier",
];

impl ModelParameters {
    /// Uniform `[-sqrt(6/in), sqrt(6/in)]` weights and zero biases,
    /// deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            node_encoder: Mlp::uniform(&config.node_encoder_spec(), &mut rng),
            edge_encoder: Mlp::uniform(&config.edge_encoder_spec(), &mut rng),
            node_update: Mlp::uniform(&config.node_update_spec(), &mut rng),
            edge_update: Mlp::uniform(&config.edge_update_spec(), &mut rng),
            classifier: Mlp::uniform(&config.classifier_spec(), &mut rng),
        })
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            node_encoder: Mlp::zeros(&config.node_encoder_spec()),
            edge_encoder: Mlp::zeros(&config.edge_encoder_spec()),
            node_update: Mlp::zeros(&config.node_update_spec()),
            edge_update: Mlp::zeros(&config.edge_update_spec()),
            classifier: Mlp::zeros(&config.classifier_spec()),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config())
    }

    /// Rebuilds the configuration implied by the block shapes.
    pub fn config(&self) -> ModelConfig {
        let widths = |m: &Mlp| m.layers.iter().map(|l| l.out_dim).collect::<Vec<_>>();
        ModelConfig {
            dim: self.node_encoder.in_dim(),
            node_encoder: widths(&self.node_encoder),
            edge_encoder: widths(&self.edge_encoder),
            message_dim: self.node_update.out_dim(),
            edge_hidden_dim: self.edge_update.out_dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.node_encoder.in_dim()
    }

    pub fn blocks(&self) -> [(&'static str, &Mlp); 5] {
        [
            (BLOCK_NAMES[0], &self.node_encoder),
            (BLOCK_NAMES[1], &self.edge_encoder),
            (BLOCK_NAMES[2], &self.node_update),
            (BLOCK_NAMES[3], &self.edge_update),
            (BLOCK_NAMES[4], &self.classifier),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Mlp; 5] {
        [
            &mut self.node_encoder,
            &mut self.edge_encoder,
            &mut self.node_update,
            &mut self.edge_update,
            &mut self.classifier,
        ]
    }

    /// Checks that every block is well formed and that the blocks chain
    /// into each other, and that all values are finite.
    pub fn validate(&self) -> Result<()> {
        for (_, block) in self.blocks() {
            block.validate()?;
        }
        let config = self.config();
        config.validate()?;
        let expect = [
            (config.node_encoder_spec(), &self.node_encoder),
            (config.edge_encoder_spec(), &self.edge_encoder),
            (config.node_update_spec(), &self.node_update),
            (config.edge_update_spec(), &self.edge_update),
            (config.classifier_spec(), &self.classifier),
        ];
        for (spec, block) in expect {
            if spec != block.spec() {
                return Err(Error::InvalidConfig(alloc::format!(
                    "block shapes do not chain: expected {:?}, found {:?}",
                    spec.layers,
                    block.spec().layers
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.param_count()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.node_encoder
            .params()
            .chain(self.edge_encoder.params())
            .chain(self.node_update.params())
            .chain(self.edge_update.params())
            .chain(self.classifier.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.node_encoder
            .params_mut()
            .chain(self.edge_encoder.params_mut())
            .chain(self.node_update.params_mut())
            .chain(self.edge_update.params_mut())
            .chain(self.classifier.params_mut())
    }

    pub fn same_shape(&self, other: &ModelParameters) -> bool {
        self.blocks()
            .iter()
            .zip(other.blocks().iter())
            .all(|((_, a), (_, b))| a.spec() == b.spec())
    }
}

/// Per-node and per-edge states of one forward pass, plus the block caches
/// needed to differentiate it.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    node_state: usize,
    edge_state: usize,
    edge_hidden: usize,
    message_dim: usize,
    node_cache: MlpCache,
    edge_cache: MlpCache,
    edge_update_cache: MlpCache,
    message_cache: MlpCache,
    /// Message `2k` flows into the first endpoint of edge `k`, `2k + 1` into
    /// the second.
    aggregated: Vec<f64>,
    predictions: Vec<[f64; CLASSES]>,
    classifier_cache: MlpCache,
}

impl ForwardTrace {
    pub fn node_initial(&self, i: usize) -> &[f64] {
        self.node_cache.output_row(i, self.node_state)
    }

    pub fn edge_initial(&self, k: usize) -> &[f64] {
        self.edge_cache.output_row(k, self.edge_state)
    }

    pub fn edge_hidden(&self, k: usize) -> &[f64] {
        self.edge_update_cache.output_row(k, self.edge_hidden)
    }

    pub fn message(&self, m: usize) -> &[f64] {
        self.message_cache.output_row(m, self.message_dim)
    }

    pub fn node_aggregated(&self, i: usize) -> &[f64] {
        &self.aggregated[i * self.message_dim..(i + 1) * self.message_dim]
    }

    pub fn predictions(&self) -> &[[f64; CLASSES]] {
        &self.predictions
    }

    /// Classifier logits, row-major `edges x 2`.
    pub fn logits(&self) -> &[f64] {
        self.classifier_cache.last_pre()
    }

    pub fn message_dim(&self) -> usize {
        self.message_dim
    }
}

/// For each node, `(neighbour, message index)` pairs sorted by neighbour.
fn incoming_messages(graph: &AssociationGraph) -> Vec<Vec<(usize, usize)>> {
    let mut incoming = vec![Vec::new(); graph.node_count()];
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        incoming[i].push((j, 2 * k));
        incoming[j].push((i, 2 * k + 1));
    }
    for list in &mut incoming {
        list.sort_unstable();
    }
    incoming
}

pub fn forward(graph: &AssociationGraph, params: &ModelParameters) -> Result<ForwardTrace> {
    if graph.node_count() > 0 && graph.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            context: "graph descriptors vs model input",
            expected: params.dim(),
            found: graph.dim(),
        });
    }
    let n = graph.node_count();
    let e = graph.edge_count();
    let node_state = params.node_encoder.out_dim();
    let edge_state = params.edge_encoder.out_dim();
    let edge_hidden = params.edge_update.out_dim();
    let message_dim = params.node_update.out_dim();

    let features: Vec<f64> = graph
        .nodes()
        .iter()
        .flat_map(|node| node.feature.iter().copied())
        .collect();
    let node_cache = params.node_encoder.forward_batch(&features, n)?;

    let raw: Vec<f64> = graph.edge_raw().iter().flat_map(|r| r.as_array()).collect();
    let edge_cache = params.edge_encoder.forward_batch(&raw, e)?;

    let update_width = 2 * node_state + edge_state;
    let mut update_in = Vec::with_capacity(e * update_width);
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        update_in.extend_from_slice(node_cache.output_row(i, node_state));
        update_in.extend_from_slice(node_cache.output_row(j, node_state));
        update_in.extend_from_slice(edge_cache.output_row(k, edge_state));
    }
    let edge_update_cache = params.edge_update.forward_batch(&update_in, e)?;

    let message_width = node_state + edge_hidden;
    let mut message_in = Vec::with_capacity(2 * e * message_width);
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        for own in [i, j] {
            message_in.extend_from_slice(node_cache.output_row(own, node_state));
            message_in.extend_from_slice(edge_update_cache.output_row(k, edge_hidden));
        }
    }
    let message_cache = params.node_update.forward_batch(&message_in, 2 * e)?;

    let mut aggregated = vec![0.0; n * message_dim];
    for (i, list) in incoming_messages(graph).iter().enumerate() {
        let acc = &mut aggregated[i * message_dim..(i + 1) * message_dim];
        for &(_, m) in list {
            math::axpy(1.0, message_cache.output_row(m, message_dim), acc);
        }
    }

    let classifier_cache = params
        .classifier
        .forward_batch(&edge_update_cache.output, e)?;
    let predictions = classifier_cache
        .output
        .chunks_exact(CLASSES)
        .map(|p| [p[0], p[1]])
        .collect();

    Ok(ForwardTrace {
        node_state,
        edge_state,
        edge_hidden,
        message_dim,
        node_cache,
        edge_cache,
        edge_update_cache,
        message_cache,
        aggregated,
        predictions,
        classifier_cache,
    })
}

/// Gradients of a loss given `dL/dy` per edge (w.r.t. the softmax
/// probabilities) and, optionally, `dL/dh_v` for the aggregated node states
/// (row-major `nodes x message_dim`).
pub fn backward(
    graph: &AssociationGraph,
    params: &ModelParameters,
    trace: &ForwardTrace,
    loss_grad: &[[f64; CLASSES]],
    node_grad: Option<&[f64]>,
) -> Result<Gradients> {
    if loss_grad.len() != graph.edge_count() {
        return Err(Error::LengthMismatch {
            context: "backward loss gradient",
            left: loss_grad.len(),
            right: graph.edge_count(),
        });
    }
    let flat: Vec<f64> = loss_grad.iter().flatten().copied().collect();
    backward_inner(graph, params, trace, OutputGrad::Activation(&flat), node_grad)
}

/// As [`backward`], with the edge gradient given w.r.t. classifier logits
/// (row-major `edges x 2`). This is the path training takes, since the
/// cross-entropy is fused with the softmax.
pub fn backward_from_logits(
    graph: &AssociationGraph,
    params: &ModelParameters,
    trace: &ForwardTrace,
    logit_grad: &[f64],
    node_grad: Option<&[f64]>,
) -> Result<Gradients> {
    if logit_grad.len() != graph.edge_count() * CLASSES {
        return Err(Error::LengthMismatch {
            context: "backward logit gradient",
            left: logit_grad.len(),
            right: graph.edge_count() * CLASSES,
        });
    }
    backward_inner(graph, params, trace, OutputGrad::PreActivation(logit_grad), node_grad)
}

fn backward_inner(
    graph: &AssociationGraph,
    params: &ModelParameters,
    trace: &ForwardTrace,
    edge_grad: OutputGrad<'_>,
    node_grad: Option<&[f64]>,
) -> Result<Gradients> {
    if trace.predictions.len() != graph.edge_count() || trace.node_cache.rows != graph.node_count() {
        return Err(Error::InvalidConfig("trace does not belong to this graph".into()));
    }
    let n = graph.node_count();
    let e = graph.edge_count();
    let ns = trace.node_state;
    let es = trace.edge_state;
    let eh = trace.edge_hidden;
    let md = trace.message_dim;
    let mut grads = params.zeros_like();

    let mut d_edge_hidden = params
        .classifier
        .backward_batch(&trace.classifier_cache, edge_grad, &mut grads.classifier, true)?
        .unwrap_or_default();
    let mut d_node_initial = vec![0.0; n * ns];

    if let Some(node_grad) = node_grad {
        if node_grad.len() != n * md {
            return Err(Error::LengthMismatch {
                context: "backward node gradient",
                left: node_grad.len(),
                right: n * md,
            });
        }
        // Every message into node i receives dL/dh_i unchanged.
        let mut d_messages = vec![0.0; 2 * e * md];
        for (k, &(i, j)) in graph.edges().iter().enumerate() {
            d_messages[2 * k * md..(2 * k + 1) * md].copy_from_slice(&node_grad[i * md..(i + 1) * md]);
            d_messages[(2 * k + 1) * md..(2 * k + 2) * md]
                .copy_from_slice(&node_grad[j * md..(j + 1) * md]);
        }
        let d_message_in = params
            .node_update
            .backward_batch(
                &trace.message_cache,
                OutputGrad::Activation(&d_messages),
                &mut grads.node_update,
                true,
            )?
            .unwrap_or_default();
        let width = ns + eh;
        for (k, &(i, j)) in graph.edges().iter().enumerate() {
            for (slot, own) in [(2 * k, i), (2 * k + 1, j)] {
                let row = &d_message_in[slot * width..(slot + 1) * width];
                math::axpy(1.0, &row[..ns], &mut d_node_initial[own * ns..(own + 1) * ns]);
                math::axpy(1.0, &row[ns..], &mut d_edge_hidden[k * eh..(k + 1) * eh]);
            }
        }
    }

    let d_update_in = params
        .edge_update
        .backward_batch(
            &trace.edge_update_cache,
            OutputGrad::Activation(&d_edge_hidden),
            &mut grads.edge_update,
            true,
        )?
        .unwrap_or_default();
    let width = 2 * ns + es;
    let mut d_edge_initial = vec![0.0; e * es];
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        let row = &d_update_in[k * width..(k + 1) * width];
        math::axpy(1.0, &row[..ns], &mut d_node_initial[i * ns..(i + 1) * ns]);
        math::axpy(1.0, &row[ns..2 * ns], &mut d_node_initial[j * ns..(j + 1) * ns]);
        d_edge_initial[k * es..(k + 1) * es].copy_from_slice(&row[2 * ns..]);
    }

    params.edge_encoder.backward_batch(
        &trace.edge_cache,
        OutputGrad::Activation(&d_edge_initial),
        &mut grads.edge_encoder,
        false,
    )?;
    params.node_encoder.backward_batch(
        &trace.node_cache,
        OutputGrad::Activation(&d_node_initial),
        &mut grads.node_encoder,
        false,
    )?;
    Ok(grads)
}
