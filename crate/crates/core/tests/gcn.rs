use mtmc_core::gcn::{self, ModelConfig, ModelParameters};
use mtmc_core::graph::{build_graph, AssociationGraph};
use mtmc_core::loss::{total_loss_from_logits, LossOptions};
use mtmc_core::mlp::Mlp;
use mtmc_core::{TrajectoryRecord, TrajectorySet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(dim: usize) -> ModelConfig {
    ModelConfig {
        dim,
        node_encoder: vec![24, 16, 12, 32],
        ..ModelConfig::with_dim(dim)
    }
}

fn random_set(seed: u64, n: usize, dim: usize, cameras: u32) -> TrajectorySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|k| TrajectoryRecord {
            trajectory_id: format!("t{k}"),
            camera_id: (k as u32 % cameras) + 1,
            start_frame: 0,
            end_frame: 10,
            feature: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            identity_id: Some(format!("o{}", k / cameras as usize)),
        })
        .collect();
    TrajectorySet::new(records, Some(cameras), Some(dim)).unwrap()
}

/// Random biases keep every pre-activation away from the ReLU kink.
fn jittered(params: &ModelParameters, seed: u64) -> ModelParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = params.clone();
    for block in p.blocks_mut() {
        for layer in &mut block.layers {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.3..0.3);
            }
        }
    }
    p
}

// ---- independent straight-line forward --------------------------------

fn dense(block: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for layer in &block.layers {
        let mut next = vec![0.0; layer.out_dim];
        for o in 0..layer.out_dim {
            let mut s = layer.bias[o];
            for i in 0..layer.in_dim {
                s += layer.weights[o * layer.in_dim + i] * cur[i];
            }
            next[o] = s;
        }
        cur = match layer.activation {
            mtmc_core::mlp::Activation::Relu => next.iter().map(|v| v.max(0.0)).collect(),
            mtmc_core::mlp::Activation::Softmax => {
                let m = next.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = next.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            }
        };
    }
    cur
}

struct Oracle {
    predictions: Vec<[f64; 2]>,
    aggregated: Vec<Vec<f64>>,
}

fn oracle_forward(graph: &AssociationGraph, p: &ModelParameters) -> Oracle {
    let h0: Vec<Vec<f64>> = graph.nodes().iter().map(|n| dense(&p.node_encoder, &n.feature)).collect();
    let mut hidden = Vec::new();
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        let fi = &graph.nodes()[i].feature;
        let fj = &graph.nodes()[j].feature;
        let eu = fi.iter().zip(fj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dot: f64 = fi.iter().zip(fj).map(|(a, b)| a * b).sum();
        let ni = fi.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nj = fj.iter().map(|a| a * a).sum::<f64>().sqrt();
        let e0 = dense(&p.edge_encoder, &[eu, 1.0 - dot / (ni * nj)]);
        let input: Vec<f64> = h0[i].iter().chain(&h0[j]).chain(&e0).copied().collect();
        hidden.push(dense(&p.edge_update, &input));
        assert_eq!(graph.edge_raw()[k].euclidean, graph.edge_raw()[k].euclidean);
    }
    let mut aggregated = vec![vec![0.0; p.node_update.out_dim()]; graph.node_count()];
    for v in 0..graph.node_count() {
        for (k, &(i, j)) in graph.edges().iter().enumerate() {
            if i == v || j == v {
                let input: Vec<f64> = h0[v].iter().chain(&hidden[k]).copied().collect();
                for (a, m) in aggregated[v].iter_mut().zip(dense(&p.node_update, &input)) {
                    *a += m;
                }
            }
        }
    }
    let predictions = hidden
        .iter()
        .map(|h| {
            let y = dense(&p.classifier, h);
            [y[0], y[1]]
        })
        .collect();
    Oracle { predictions, aggregated }
}

#[test]
fn forward_matches_straight_line_oracle() {
    let set = random_set(1, 4, 6, 2);
    let graph = build_graph(&set, None).unwrap();
    assert_eq!(graph.edge_count(), 4);
    let params = jittered(&ModelParameters::init(&ModelConfig::with_dim(6), 42).unwrap(), 3);
    let trace = gcn::forward(&graph, &params).unwrap();
    let oracle = oracle_forward(&graph, &params);
    for (a, b) in trace.predictions().iter().zip(&oracle.predictions) {
        assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10);
    }
    for v in 0..graph.node_count() {
        for (a, b) in trace.node_aggregated(v).iter().zip(&oracle.aggregated[v]) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn isolated_node_aggregates_to_zero() {
    let mut records = random_set(2, 3, 4, 2).into_records();
    records[2].camera_id = 3;
    records[2].start_frame = 10_000;
    records[2].end_frame = 10_010;
    let set = TrajectorySet::new(records, None, None).unwrap();
    let graph = build_graph(&set, Some(100)).unwrap();
    let params = ModelParameters::init(&small_config(4), 0).unwrap();
    let trace = gcn::forward(&graph, &params).unwrap();
    let isolated = graph.nodes().iter().position(|n| n.camera_id == 3).unwrap();
    assert!(trace.node_aggregated(isolated).iter().all(|&x| x == 0.0));
}

#[test]
fn predictions_are_distributions() {
    for seed in 0..5 {
        let set = random_set(seed, 9, 5, 3);
        let graph = build_graph(&set, None).unwrap();
        let mut params = ModelParameters::init(&small_config(5), seed).unwrap();
        for w in params.params_mut() {
            *w *= 5.0;
        }
        for p in gcn::forward(&graph, &params).unwrap().predictions() {
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
        }
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let graph = build_graph(&random_set(0, 4, 5, 2), None).unwrap();
    let params = ModelParameters::init(&small_config(6), 0).unwrap();
    assert!(gcn::forward(&graph, &params).is_err());
}

fn loss_and_node_term(graph: &AssociationGraph, params: &ModelParameters, weights: &[f64]) -> f64 {
    let trace = gcn::forward(graph, params).unwrap();
    let labels = graph.labels().unwrap();
    let lt = total_loss_from_logits(trace.logits(), labels, LossOptions::default())
        .unwrap()
        .breakdown
        .total;
    let md = trace.message_dim();
    let node_term: f64 = (0..graph.node_count())
        .flat_map(|v| trace.node_aggregated(v).iter().copied().collect::<Vec<_>>())
        .zip(weights)
        .map(|(h, w)| h * w)
        .sum();
    assert_eq!(weights.len(), graph.node_count() * md);
    lt + node_term
}

#[test]
fn gradients_match_finite_differences_including_message_branch() {
    let set = random_set(7, 6, 8, 3);
    let graph = build_graph(&set, None).unwrap();
    let labels = graph.labels().unwrap();
    assert!(labels.contains(&0) && labels.contains(&1));
    let params = jittered(&ModelParameters::init(&small_config(8), 11).unwrap(), 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let node_weights: Vec<f64> = (0..graph.node_count() * 32).map(|_| rng.random_range(-0.1..0.1)).collect();

    let trace = gcn::forward(&graph, &params).unwrap();
    let loss = total_loss_from_logits(trace.logits(), labels, LossOptions::default()).unwrap();
    let grads = gcn::backward_from_logits(&graph, &params, &trace, &loss.grad, Some(&node_weights)).unwrap();
    assert!(grads.node_update.params().any(|&g| g != 0.0));

    let h = 1e-5;
    let analytic: Vec<f64> = grads.params().copied().collect();
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let mut plus = params.clone();
        *plus.params_mut().nth(k).unwrap() += h;
        let mut minus = params.clone();
        *minus.params_mut().nth(k).unwrap() -= h;
        let fd = (loss_and_node_term(&graph, &plus, &node_weights)
            - loss_and_node_term(&graph, &minus, &node_weights))
            / (2.0 * h);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn probability_space_backward_agrees_with_logit_space() {
    let set = random_set(3, 6, 8, 3);
    let graph = build_graph(&set, None).unwrap();
    let params = jittered(&ModelParameters::init(&small_config(8), 5).unwrap(), 6);
    let trace = gcn::forward(&graph, &params).unwrap();
    let labels = graph.labels().unwrap();
    let probs = mtmc_core::loss::total_loss(trace.predictions(), labels, LossOptions::default()).unwrap();
    let dy: Vec<[f64; 2]> = probs.grad.chunks_exact(2).map(|g| [g[0], g[1]]).collect();
    let via_probs = gcn::backward(&graph, &params, &trace, &dy, None).unwrap();
    let logits = total_loss_from_logits(trace.logits(), labels, LossOptions::default()).unwrap();
    let via_logits = gcn::backward_from_logits(&graph, &params, &trace, &logits.grad, None).unwrap();
    for (a, b) in via_probs.params().zip(via_logits.params()) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let graph = build_graph(&random_set(4, 6, 8, 3), None).unwrap();
    let params = ModelParameters::init(&small_config(8), 1).unwrap();
    let trace = gcn::forward(&graph, &params).unwrap();
    let zeros = vec![[0.0; 2]; graph.edge_count()];
    let grads = gcn::backward(&graph, &params, &trace, &zeros, None).unwrap();
    assert!(grads.params().all(|&g| g == 0.0));
    assert!(gcn::backward(&graph, &params, &trace, &zeros[1..], None).is_err());
}

#[test]
fn doubled_edge_gradient_doubles_classifier_gradient() {
    let graph = build_graph(&random_set(5, 6, 8, 3), None).unwrap();
    let params = ModelParameters::init(&small_config(8), 2).unwrap();
    let trace = gcn::forward(&graph, &params).unwrap();
    let mut single = vec![[0.0; 2]; graph.edge_count()];
    single[3] = [0.4, -1.3];
    let mut double = single.clone();
    double[3] = [0.8, -2.6];
    let g1 = gcn::backward(&graph, &params, &trace, &single, None).unwrap();
    let g2 = gcn::backward(&graph, &params, &trace, &double, None).unwrap();
    for (a, b) in g1.classifier.params().zip(g2.classifier.params()) {
        assert!((2.0 * a - b).abs() < 1e-14);
    }
}

#[test]
fn neighbour_order_does_not_change_node_states() {
    let graph = build_graph(&random_set(6, 9, 4, 3), None).unwrap();
    let params = jittered(&ModelParameters::init(&small_config(4), 9).unwrap(), 10);
    let trace = gcn::forward(&graph, &params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut order: Vec<usize> = (0..graph.edge_count()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let shuffled_edges: Vec<(usize, usize)> = order
        .iter()
        .map(|&k| {
            let (i, j) = graph.edges()[k];
            if k % 2 == 0 { (j, i) } else { (i, j) }
        })
        .collect();
    let shuffled = AssociationGraph::from_parts(graph.nodes().to_vec(), shuffled_edges, 3).unwrap();
    let other = gcn::forward(&shuffled, &params).unwrap();
    for v in 0..graph.node_count() {
        assert_eq!(trace.node_aggregated(v), other.node_aggregated(v));
    }
    for (pos, &k) in order.iter().enumerate() {
        assert_eq!(trace.predictions()[k], other.predictions()[pos]);
    }
}

#[test]
fn relabeling_nodes_permutes_predictions() {
    let set = random_set(9, 10, 4, 3);
    let mut records = set.clone().into_records();
    records.reverse();
    records.swap(1, 7);
    let permuted = TrajectorySet::new(records, Some(3), None).unwrap();
    let params = ModelParameters::init(&small_config(4), 4).unwrap();
    let keyed = |s: &TrajectorySet| {
        let g = build_graph(s, None).unwrap();
        let t = gcn::forward(&g, &params).unwrap();
        let mut out: Vec<((String, String), [f64; 2])> = g
            .edges()
            .iter()
            .zip(t.predictions())
            .map(|(&(i, j), p)| {
                ((g.nodes()[i].trajectory_id.clone(), g.nodes()[j].trajectory_id.clone()), *p)
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    };
    assert_eq!(keyed(&set), keyed(&permuted));
}

#[test]
fn init_is_deterministic_and_reference_sized() {
    let config = ModelConfig::default();
    let a = ModelParameters::init(&config, 5).unwrap();
    let b = ModelParameters::init(&config, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, ModelParameters::init(&config, 6).unwrap());
    // 2048->1024->512->128->32, 2->4->4, 36->32, 68->4, 4->2
    assert_eq!(a.param_count(), 2_694_270);
    assert!(a.validate().is_ok());
    assert_eq!(a.config(), config);
}
