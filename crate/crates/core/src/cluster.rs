//! From edge predictions to global trajectories: argmax pruning, connected
//! components, and refinement down to at most one trajectory per camera.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{self, ModelParameters, CLASSES};
use crate::graph::{build_graph, AssociationGraph};
use crate::trajectory::TrajectorySet;

/// A kept edge with its class-1 probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeptEdge {
    pub nodes: (usize, usize),
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    /// Node indices of each cluster, ascending; clusters ordered by their
    /// smallest node.
    pub clusters: Vec<Vec<usize>>,
    /// Cluster index of every node.
    pub assignment: Vec<usize>,
    pub kept: Vec<KeptEdge>,
}

/// Indices of edges whose class-1 probability strictly exceeds class 0.
/// There is deliberately no threshold parameter.
pub fn prune_edges(predictions: &[[f64; CLASSES]]) -> Vec<usize> {
    predictions
        .iter()
        .enumerate()
        .filter(|(_, p)| p[1] > p[0])
        .map(|(k, _)| k)
        .collect()
}

pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            core::cmp::Ordering::Less => self.parent[ra] = rb,
            core::cmp::Ordering::Greater => self.parent[rb] = ra,
            core::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Components of `members` (ascending node ids) under `edges`, each sorted,
/// ordered by smallest member.
fn components_of(members: &[usize], edges: &[KeptEdge]) -> Vec<Vec<usize>> {
    let local = |node: usize| members.binary_search(&node).ok();
    let mut uf = UnionFind::new(members.len());
    for e in edges {
        if let (Some(a), Some(b)) = (local(e.nodes.0), local(e.nodes.1)) {
            uf.union(a, b);
        }
    }
    let mut by_root: Vec<Option<usize>> = vec![None; members.len()];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (k, &node) in members.iter().enumerate() {
        let root = uf.find(k);
        let slot = *by_root[root].get_or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[slot].push(node);
    }
    out
}

fn cluster_set(node_count: usize, clusters: Vec<Vec<usize>>, kept: Vec<KeptEdge>) -> ClusterSet {
    let mut clusters = clusters;
    clusters.sort_by_key(|c| c[0]);
    let mut assignment = vec![0; node_count];
    for (c, members) in clusters.iter().enumerate() {
        for &n in members {
            assignment[n] = c;
        }
    }
    ClusterSet {
        clusters,
        assignment,
        kept,
    }
}

/// Undirected connected components over `node_count` nodes.
pub fn connected_components(node_count: usize, kept: Vec<KeptEdge>) -> Result<ClusterSet> {
    if let Some(e) = kept
        .iter()
        .find(|e| e.nodes.0 >= node_count || e.nodes.1 >= node_count)
    {
        return Err(Error::InvalidConfig(alloc::format!(
            "edge {:?} references a missing node",
            e.nodes
        )));
    }
    let members: Vec<usize> = (0..node_count).collect();
    let clusters = components_of(&members, &kept);
    Ok(cluster_set(node_count, clusters, kept))
}

fn is_valid(members: &[usize], node_cameras: &[u32], max_size: usize) -> bool {
    if members.len() > max_size {
        return false;
    }
    let mut cameras = BTreeSet::new();
    members.iter().all(|&n| cameras.insert(node_cameras[n]))
}

/// Splits clusters until each holds at most `camera_count` nodes and at most
/// one node per camera, repeatedly dropping the weakest kept edge (lowest
/// class-1 probability, ties broken by edge order) inside a violating
/// cluster.
pub fn refine_clusters(set: &ClusterSet, node_cameras: &[u32], camera_count: usize) -> ClusterSet {
    let node_count = set.assignment.len();
    let mut removed: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut done: Vec<Vec<usize>> = Vec::new();
    let mut pending: Vec<Vec<usize>> = set.clusters.iter().rev().cloned().collect();

    while let Some(members) = pending.pop() {
        if is_valid(&members, node_cameras, camera_count) {
            done.push(members);
            continue;
        }
        let inside = |e: &KeptEdge, removed: &BTreeSet<(usize, usize)>| {
            !removed.contains(&e.nodes)
                && members.binary_search(&e.nodes.0).is_ok()
                && members.binary_search(&e.nodes.1).is_ok()
        };
        let weakest = set
            .kept
            .iter()
            .filter(|e| inside(e, &removed))
            .min_by(|a, b| a.prob.total_cmp(&b.prob).then(a.nodes.cmp(&b.nodes)))
            .copied();
        let Some(weakest) = weakest else {
            // Unreachable for a connected cluster; keep the data rather than loop.
            done.extend(members.into_iter().map(|n| vec![n]));
            continue;
        };
        removed.insert(weakest.nodes);
        let remaining: Vec<KeptEdge> = set
            .kept
            .iter()
            .filter(|e| inside(e, &removed))
            .copied()
            .collect();
        let parts = components_of(&members, &remaining);
        pending.extend(parts.into_iter().rev());
    }

    let kept = set
        .kept
        .iter()
        .filter(|e| !removed.contains(&e.nodes))
        .copied()
        .collect();
    cluster_set(node_count, done, kept)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalTrajectory {
    pub global_id: usize,
    pub multi_camera: bool,
    pub trajectories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GlobalTrajectories {
    pub clusters: Vec<GlobalTrajectory>,
}

impl GlobalTrajectories {
    pub fn multi_camera(&self) -> impl Iterator<Item = &GlobalTrajectory> {
        self.clusters.iter().filter(|c| c.multi_camera)
    }
}

/// Everything produced by one inference run.
#[derive(Debug, Clone)]
pub struct Inference {
    pub graph: AssociationGraph,
    pub predictions: Vec<[f64; CLASSES]>,
    pub kept_edges: usize,
    pub clusters: ClusterSet,
    pub output: GlobalTrajectories,
}

pub fn global_trajectories(graph: &AssociationGraph, clusters: &ClusterSet) -> GlobalTrajectories {
    let clusters = clusters
        .clusters
        .iter()
        .enumerate()
        .map(|(k, members)| {
            let cameras: BTreeSet<u32> = members.iter().map(|&n| graph.nodes()[n].camera_id).collect();
            GlobalTrajectory {
                global_id: k,
                multi_camera: cameras.len() >= 2,
                trajectories: members
                    .iter()
                    .map(|&n| graph.nodes()[n].trajectory_id.clone())
                    .collect(),
            }
        })
        .collect();
    GlobalTrajectories { clusters }
}

/// Graph construction, edge classification, pruning, components and
/// refinement.
pub fn infer_detailed(
    params: &ModelParameters,
    trajectories: &TrajectorySet,
    temporal_threshold: Option<u64>,
) -> Result<Inference> {
    if !trajectories.is_empty() && trajectories.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset descriptors vs model input",
            expected: params.dim(),
            found: trajectories.dim(),
        });
    }
    let graph = build_graph(trajectories, temporal_threshold)?;
    let trace = gcn::forward(&graph, params)?;
    let predictions = trace.predictions().to_vec();
    let kept: Vec<KeptEdge> = prune_edges(&predictions)
        .into_iter()
        .map(|k| KeptEdge {
            nodes: graph.edges()[k],
            prob: predictions[k][1],
        })
        .collect();
    let kept_edges = kept.len();
    let components = connected_components(graph.node_count(), kept)?;
    let cameras: Vec<u32> = graph.nodes().iter().map(|n| n.camera_id).collect();
    let clusters = refine_clusters(&components, &cameras, graph.camera_count() as usize);
    let output = global_trajectories(&graph, &clusters);
    Ok(Inference {
        graph,
        predictions,
        kept_edges,
        clusters,
        output,
    })
}

pub fn infer(
    params: &ModelParameters,
    trajectories: &TrajectorySet,
    temporal_threshold: Option<u64>,
) -> Result<GlobalTrajectories> {
    Ok(infer_detailed(params, trajectories, temporal_threshold)?.output)
}
