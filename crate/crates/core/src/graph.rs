//! The dense inter-camera association graph.
//!
//! Nodes are sorted by `(camera_id, trajectory_id)`, so for every edge
//! `(i, j)` with `i < j` the first endpoint is the canonical one. Same-camera
//! pairs are never connected.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::trajectory::{TrajectoryRecord, TrajectorySet};

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    /// Index of the record in the source [`TrajectorySet`].
    pub source: usize,
    pub trajectory_id: String,
    pub camera_id: u32,
    pub start_frame: i64,
    pub end_frame: i64,
    pub identity_id: Option<String>,
    pub feature: Vec<f64>,
}

impl GraphNode {
    fn from_record(source: usize, r: &TrajectoryRecord) -> Self {
        Self {
            source,
            trajectory_id: r.trajectory_id.clone(),
            camera_id: r.camera_id,
            start_frame: r.start_frame,
            end_frame: r.end_frame,
            identity_id: r.identity_id.clone(),
            feature: r.feature.clone(),
        }
    }

    fn frame_gap(&self, other: &GraphNode) -> u64 {
        if self.end_frame < other.start_frame {
            (other.start_frame - self.end_frame) as u64
        } else if other.end_frame < self.start_frame {
            (self.start_frame - other.end_frame) as u64
        } else {
            0
        }
    }
}

/// Raw appearance distances feeding the edge encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeRaw {
    pub euclidean: f64,
    pub cosine: f64,
}

impl EdgeRaw {
    pub fn as_array(&self) -> [f64; 2] {
        [self.euclidean, self.cosine]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<(usize, usize)>,
    edge_raw: Vec<EdgeRaw>,
    labels: Option<Vec<u8>>,
    camera_count: u32,
    dim: usize,
}

impl AssociationGraph {
    /// Assembles a graph from explicit parts, checking every structural
    /// invariant. Edges may be listed in any order and either orientation;
    /// they are stored with `i < j`.
    pub fn from_parts(
        nodes: Vec<GraphNode>,
        edges: Vec<(usize, usize)>,
        camera_count: u32,
    ) -> Result<Self> {
        let dim = nodes.first().map_or(0, |n| n.feature.len());
        let mut canonical = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if j >= nodes.len() {
                return Err(Error::InvalidConfig(alloc::format!(
                    "edge ({a}, {b}) references a missing node"
                )));
            }
            if i == j || nodes[i].camera_id == nodes[j].camera_id {
                return Err(Error::InvalidConfig(alloc::format!(
                    "edge ({a}, {b}) joins a camera to itself"
                )));
            }
            canonical.push((i, j));
        }
        let mut sorted = canonical.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate edge".into()));
        }
        for n in &nodes {
            if n.feature.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "graph node",
                    expected: dim,
                    found: n.feature.len(),
                });
            }
        }
        let edge_raw = canonical
            .iter()
            .map(|&(i, j)| edge_raw_features(&nodes[i].feature, &nodes[j].feature))
            .collect::<Result<Vec<_>>>()?;
        let labels = labels_for(&nodes, &canonical);
        Ok(Self {
            nodes,
            edges: canonical,
            edge_raw,
            labels,
            camera_count,
            dim,
        })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_raw(&self) -> &[EdgeRaw] {
        &self.edge_raw
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn camera_count(&self) -> u32 {
        self.camera_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Replaces node descriptors (same shapes) and recomputes edge distances.
    pub fn with_features(&self, features: Vec<Vec<f64>>) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        for (n, f) in nodes.iter_mut().zip(features) {
            n.feature = f;
        }
        Self::from_parts(nodes, self.edges.clone(), self.camera_count)
    }
}

fn labels_for(nodes: &[GraphNode], edges: &[(usize, usize)]) -> Option<Vec<u8>> {
    if !nodes.iter().all(|n| n.identity_id.is_some()) {
        return None;
    }
    Some(
        edges
            .iter()
            .map(|&(i, j)| u8::from(nodes[i].identity_id == nodes[j].identity_id))
            .collect(),
    )
}

/// Builds the inter-camera graph over every trajectory in `set`. With a
/// temporal threshold, a pair is connected only when the frame gap between
/// the two spans is at most `threshold`.
pub fn build_graph(set: &TrajectorySet, temporal_threshold: Option<u64>) -> Result<AssociationGraph> {
    let mut nodes: Vec<GraphNode> = set
        .records()
        .iter()
        .enumerate()
        .map(|(k, r)| GraphNode::from_record(k, r))
        .collect();
    nodes.sort_by(|a, b| {
        (a.camera_id, a.trajectory_id.as_str()).cmp(&(b.camera_id, b.trajectory_id.as_str()))
    });

    let mut edges = Vec::new();
    let mut edge_raw = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if nodes[i].camera_id == nodes[j].camera_id {
                continue;
            }
            if let Some(t) = temporal_threshold {
                if nodes[i].frame_gap(&nodes[j]) > t {
                    continue;
                }
            }
            edges.push((i, j));
            edge_raw.push(edge_raw_features(&nodes[i].feature, &nodes[j].feature)?);
        }
    }
    let labels = labels_for(&nodes, &edges);
    Ok(AssociationGraph {
        nodes,
        edges,
        edge_raw,
        labels,
        camera_count: set.camera_count(),
        dim: set.dim(),
    })
}

/// Euclidean distance and cosine distance (`1 - cosine similarity`, in
/// `[0, 2]`) between two descriptors.
pub fn edge_raw_features(fi: &[f64], fj: &[f64]) -> Result<EdgeRaw> {
    if fi.len() != fj.len() {
        return Err(Error::DimensionMismatch {
            context: "edge_raw_features",
            expected: fi.len(),
            found: fj.len(),
        });
    }
    if !math::all_finite(fi) || !math::all_finite(fj) {
        return Err(Error::NonFinite("edge_raw_features"));
    }
    let nii = math::dot(fi, fi);
    let njj = math::dot(fj, fj);
    if nii == 0.0 || njj == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let euclidean = math::sqrt(
        fi.iter()
            .zip(fj)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>(),
    );
    let similarity = math::dot(fi, fj) / math::sqrt(nii * njj);
    let cosine = (1.0 - similarity).clamp(0.0, 2.0);
    Ok(EdgeRaw { euclidean, cosine })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: &str, camera: u32, span: (i64, i64), identity: Option<&str>) -> TrajectoryRecord {
        TrajectoryRecord {
            trajectory_id: id.to_string(),
            camera_id: camera,
            start_frame: span.0,
            end_frame: span.1,
            feature: vec![1.0, camera as f64, id.len() as f64],
            identity_id: identity.map(|s| s.to_string()),
        }
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, cameras: u32) -> TrajectorySet {
        let records = (0..n)
            .map(|k| {
                let start = rng.random_range(0..1000);
                let len = rng.random_range(0..200);
                let identity = alloc::format!("o{}", rng.random_range(0..4));
                TrajectoryRecord {
                    trajectory_id: alloc::format!("t{k}"),
                    camera_id: rng.random_range(1..=cameras),
                    start_frame: start,
                    end_frame: start + len,
                    feature: (0..4).map(|_| rng.random_range(0.1..1.0)).collect(),
                    identity_id: Some(identity),
                }
            })
            .collect();
        TrajectorySet::new(records, Some(cameras), None).unwrap()
    }

    #[test]
    fn two_identities_four_cameras_give_24_edges() {
        let mut records = Vec::new();
        for o in ["a", "b"] {
            for m in 1..=4 {
                records.push(rec(&alloc::format!("{o}{m}"), m, (0, 10), Some(o)));
            }
        }
        let set = TrajectorySet::new(records, None, None).unwrap();
        let g = build_graph(&set, None).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.edge_count(), 24);
        let positives = g.labels().unwrap().iter().filter(|&&l| l == 1).count();
        assert_eq!(positives, 12);
    }

    #[test]
    fn single_camera_has_no_edges() {
        let set = TrajectorySet::new(
            vec![rec("a", 1, (0, 5), None), rec("b", 1, (0, 5), None)],
            None,
            None,
        )
        .unwrap();
        let g = build_graph(&set, None).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(g.labels().is_none());
    }

    #[test]
    fn temporal_threshold_severs_distant_spans() {
        let set = TrajectorySet::new(
            vec![rec("a", 1, (0, 100), None), rec("b", 2, (1500, 1600), None)],
            None,
            None,
        )
        .unwrap();
        assert_eq!(build_graph(&set, Some(300)).unwrap().edge_count(), 0);
        assert_eq!(build_graph(&set, None).unwrap().edge_count(), 1);
        assert_eq!(build_graph(&set, Some(1400)).unwrap().edge_count(), 1);
    }

    #[test]
    fn nodes_sorted_by_camera_then_id() {
        let set = TrajectorySet::new(
            vec![
                rec("z", 2, (0, 1), None),
                rec("b", 1, (0, 1), None),
                rec("a", 2, (0, 1), None),
            ],
            None,
            None,
        )
        .unwrap();
        let g = build_graph(&set, None).unwrap();
        let ids: Vec<&str> = g.nodes().iter().map(|n| n.trajectory_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "z"]);
        assert_eq!(g.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(g.nodes()[2].source, 0);
    }

    #[test]
    fn raw_features_examples() {
        let same = edge_raw_features(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap();
        assert_eq!(same, EdgeRaw { euclidean: 0.0, cosine: 0.0 });
        let ortho = edge_raw_features(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((ortho.euclidean - core::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(ortho.cosine, 1.0);
        let anti = edge_raw_features(&[1.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(anti, EdgeRaw { euclidean: 2.0, cosine: 2.0 });
        assert_eq!(edge_raw_features(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm));
    }

    #[test]
    fn from_parts_rejects_same_camera_and_duplicates() {
        let set = TrajectorySet::new(
            vec![
                rec("a", 1, (0, 1), None),
                rec("b", 1, (0, 1), None),
                rec("c", 2, (0, 1), None),
            ],
            None,
            None,
        )
        .unwrap();
        let nodes = build_graph(&set, None).unwrap().nodes().to_vec();
        assert!(AssociationGraph::from_parts(nodes.clone(), vec![(0, 1)], 2).is_err());
        assert!(AssociationGraph::from_parts(nodes.clone(), vec![(0, 2), (2, 0)], 2).is_err());
        let g = AssociationGraph::from_parts(nodes, vec![(2, 1), (0, 2)], 2).unwrap();
        assert_eq!(g.edges(), &[(1, 2), (0, 2)]);
    }

    #[test]
    fn edge_count_matches_camera_product_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..=20);
            let set = random_set(&mut rng, n, 4);
            let mut per_camera = [0usize; 5];
            for r in set.records() {
                per_camera[r.camera_id as usize] += 1;
            }
            let mut expected = 0;
            for m in 1..=4 {
                for m2 in m + 1..=4 {
                    expected += per_camera[m] * per_camera[m2];
                }
            }
            assert_eq!(build_graph(&set, None).unwrap().edge_count(), expected);
        }
    }

    proptest::proptest! {
        #[test]
        fn threshold_is_monotone(seed in 0u64..500, t1 in 0u64..600, dt in 0u64..600) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = random_set(&mut rng, 12, 3);
            let small = build_graph(&set, Some(t1)).unwrap();
            let large = build_graph(&set, Some(t1 + dt)).unwrap();
            for e in small.edges() {
                proptest::prop_assert!(large.edges().contains(e));
            }
        }

        #[test]
        fn labels_do_not_depend_on_endpoint_order(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = random_set(&mut rng, 10, 3);
            let g = build_graph(&set, None).unwrap();
            let labels = g.labels().unwrap();
            for (k, &(i, j)) in g.edges().iter().enumerate() {
                let (a, b) = (&g.nodes()[i], &g.nodes()[j]);
                proptest::prop_assert_eq!(labels[k], u8::from(b.identity_id == a.identity_id));
            }
        }
    }
}
