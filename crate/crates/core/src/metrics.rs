//! Identity precision / recall / F1 over multi-camera trajectories.
//!
//! Each SC trajectory weighs its frame count. Predicted multi-camera
//! clusters are matched one-to-one to ground-truth identities seen by at
//! least two cameras so as to maximize matched frames; those frames are the
//! identity true positives.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::cluster::GlobalTrajectories;
use crate::error::{Error, Result};
use crate::trajectory::TrajectorySet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub idp: f64,
    pub idr: f64,
    pub idf1: f64,
    pub idtp: u64,
    pub pred_frames: u64,
    pub gt_frames: u64,
    /// Set when either side has no multi-camera trajectory; every score is
    /// then 0.
    #[serde(default)]
    pub degenerate: bool,
}

fn percent(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Frame-weighted overlap between predicted MC clusters (rows) and GT MC
/// identities (columns), plus the totals on each side.
pub struct OverlapTable {
    pub overlap: Vec<Vec<u64>>,
    pub pred_frames: u64,
    pub gt_frames: u64,
}

pub fn overlap_table(predicted: &GlobalTrajectories, ground_truth: &TrajectorySet) -> Result<OverlapTable> {
    let by_id: BTreeMap<&str, _> = ground_truth
        .records()
        .iter()
        .map(|r| (r.trajectory_id.as_str(), r))
        .collect();
    for id in predicted.clusters.iter().flat_map(|c| &c.trajectories) {
        if !by_id.contains_key(id.as_str()) {
            return Err(Error::UnknownTrajectory(id.clone()));
        }
    }

    let mut cameras_of: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for r in ground_truth.records() {
        if let Some(identity) = r.identity_id.as_deref() {
            cameras_of.entry(identity).or_default().insert(r.camera_id);
        }
    }
    let gt_ids: Vec<&str> = cameras_of
        .iter()
        .filter(|(_, cams)| cams.len() >= 2)
        .map(|(id, _)| *id)
        .collect();
    let column: BTreeMap<&str, usize> = gt_ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();

    let gt_frames = ground_truth
        .records()
        .iter()
        .filter(|r| r.identity_id.as_deref().is_some_and(|id| column.contains_key(id)))
        .map(|r| r.frames())
        .sum();

    let mut overlap = Vec::new();
    let mut pred_frames = 0;
    for cluster in predicted.multi_camera() {
        let mut row = vec![0u64; gt_ids.len()];
        for id in &cluster.trajectories {
            let record = by_id[id.as_str()];
            pred_frames += record.frames();
            if let Some(&c) = record.identity_id.as_deref().and_then(|i| column.get(i)) {
                row[c] += record.frames();
            }
        }
        overlap.push(row);
    }
    Ok(OverlapTable {
        overlap,
        pred_frames,
        gt_frames,
    })
}

pub fn id_metrics(predicted: &GlobalTrajectories, ground_truth: &TrajectorySet) -> Result<MetricsReport> {
    let table = overlap_table(predicted, ground_truth)?;
    let cols = table.overlap.first().map_or(0, Vec::len);
    let matching = max_weight_assignment(&table.overlap, cols);
    let idtp: u64 = matching
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| table.overlap[r][c]))
        .sum();
    let degenerate = table.pred_frames == 0 || table.gt_frames == 0;
    Ok(MetricsReport {
        idp: percent(idtp, table.pred_frames),
        idr: percent(idtp, table.gt_frames),
        idf1: percent(2 * idtp, table.pred_frames + table.gt_frames),
        idtp,
        pred_frames: table.pred_frames,
        gt_frames: table.gt_frames,
        degenerate,
    })
}
