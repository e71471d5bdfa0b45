//! Single-camera trajectory records and the validated set they live in.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Descriptor dimension of the upstream ReID model.
pub const DEFAULT_DIM: usize = 2048;

/// One single-camera trajectory summarized by a single appearance descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub trajectory_id: String,
    pub camera_id: u32,
    pub start_frame: i64,
    pub end_frame: i64,
    pub feature: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity_id: Option<String>,
}

impl TrajectoryRecord {
    /// Number of frames covered, both endpoints included.
    pub fn frames(&self) -> u64 {
        (self.end_frame - self.start_frame) as u64 + 1
    }

    /// Frame gap between two spans; 0 when they overlap or touch.
    pub fn frame_gap(&self, other: &TrajectoryRecord) -> u64 {
        if self.end_frame < other.start_frame {
            (other.start_frame - self.end_frame) as u64
        } else if other.end_frame < self.start_frame {
            (self.start_frame - other.end_frame) as u64
        } else {
            0
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let invalid = |reason: String| Error::InvalidRecord {
            id: self.trajectory_id.clone(),
            reason,
        };
        if self.end_frame < self.start_frame {
            return Err(invalid(format!(
                "end_frame {} precedes start_frame {}",
                self.end_frame, self.start_frame
            )));
        }
        if self.feature.len() != dim {
            return Err(invalid(format!(
                "feature has {} entries, expected {dim}",
                self.feature.len()
            )));
        }
        if !math::all_finite(&self.feature) {
            return Err(invalid("feature has non-finite entries".to_string()));
        }
        if math::norm(&self.feature) == 0.0 {
            return Err(invalid("feature has zero norm".to_string()));
        }
        if self.camera_id == 0 {
            return Err(invalid("camera_id must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// A validated, immutable collection of trajectories sharing one descriptor
/// dimension and one camera numbering `1..=camera_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    records: Vec<TrajectoryRecord>,
    camera_count: u32,
    dim: usize,
}

impl TrajectorySet {
    /// Validates `records`. `camera_count` defaults to the largest camera id
    /// present and `dim` to the first record's descriptor length (or
    /// [`DEFAULT_DIM`] for an empty set).
    pub fn new(
        records: Vec<TrajectoryRecord>,
        camera_count: Option<u32>,
        dim: Option<usize>,
    ) -> Result<Self> {
        let dim = dim
            .or_else(|| records.first().map(|r| r.feature.len()))
            .unwrap_or(DEFAULT_DIM);
        let max_camera = records.iter().map(|r| r.camera_id).max().unwrap_or(0);
        let camera_count = camera_count.unwrap_or(max_camera);
        let mut seen = BTreeSet::new();
        for record in &records {
            record.validate(dim)?;
            if record.camera_id > camera_count {
                return Err(Error::InvalidRecord {
                    id: record.trajectory_id.clone(),
                    reason: format!(
                        "camera_id {} outside 1..={camera_count}",
                        record.camera_id
                    ),
                });
            }
            if !seen.insert(record.trajectory_id.as_str()) {
                return Err(Error::DuplicateTrajectory(record.trajectory_id.clone()));
            }
        }
        Ok(Self {
            records,
            camera_count,
            dim,
        })
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TrajectoryRecord> {
        self.records
    }

    pub fn camera_count(&self) -> u32 {
        self.camera_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, trajectory_id: &str) -> Option<&TrajectoryRecord> {
        self.records.iter().find(|r| r.trajectory_id == trajectory_id)
    }

    /// True when every record carries a ground-truth identity.
    pub fn is_labeled(&self) -> bool {
        self.records.iter().all(|r| r.identity_id.is_some())
    }

    pub fn require_labels(&self) -> Result<()> {
        match self.records.iter().find(|r| r.identity_id.is_none()) {
            Some(r) => Err(Error::MissingIdentity(r.trajectory_id.clone())),
            None => Ok(()),
        }
    }

    /// Distinct identities in ascending order.
    pub fn identities(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .records
            .iter()
            .filter_map(|r| r.identity_id.as_deref())
            .collect();
        set.into_iter().collect()
    }

    /// Records whose identity is in `identities`, same camera count and dim.
    pub fn restrict_to_identities(&self, identities: &BTreeSet<&str>) -> TrajectorySet {
        let records = self
            .records
            .iter()
            .filter(|r| {
                r.identity_id
                    .as_deref()
                    .is_some_and(|id| identities.contains(id))
            })
            .cloned()
            .collect();
        TrajectorySet {
            records,
            camera_count: self.camera_count,
            dim: self.dim,
        }
    }

    /// Same records with each descriptor replaced by `f(record)`; used for
    /// descriptor-space augmentation.
    pub fn map_features<F>(&self, mut f: F) -> TrajectorySet
    where
        F: FnMut(&TrajectoryRecord) -> Vec<f64>,
    {
        let records = self
            .records
            .iter()
            .map(|r| TrajectoryRecord {
                feature: f(r),
                ..r.clone()
            })
            .collect();
        TrajectorySet {
            records,
            camera_count: self.camera_count,
            dim: self.dim,
        }
    }
}

/// Component-wise mean of per-box embeddings, yielding one descriptor per
/// trajectory.
pub fn average_descriptors(embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = embeddings.first().ok_or(Error::NoEmbeddings)?;
    let dim = first.len();
    let mut sum = alloc::vec![0.0; dim];
    for e in embeddings {
        if e.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "average_descriptors",
                expected: dim,
                found: e.len(),
            });
        }
        if !math::all_finite(e) {
            return Err(Error::NonFinite("average_descriptors"));
        }
        for (s, x) in sum.iter_mut().zip(e) {
            *s += x;
        }
    }
    let n = embeddings.len() as f64;
    for s in &mut sum {
        *s /= n;
    }
    Ok(sum)
}
