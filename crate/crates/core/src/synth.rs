//! Labeled multi-camera scenarios with controllable difficulty.
//!
//! Identity centroids are unit vectors at pairwise distance at least
//! `inter_class_min_sep`. Each (identity, camera) appearance gets the
//! centroid plus isotropic Gaussian noise with per-coordinate standard
//! deviation `intra_noise_sigma / sqrt(dim)`, so the expected noise norm is
//! about `intra_noise_sigma` whatever the dimension. An identity crosses
//! all its cameras around one moment in time; each camera clock is then
//! shifted by its own offset to emulate unsynchronized recordings.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::trajectory::{TrajectoryRecord, TrajectorySet};

const ATTEMPTS_PER_CENTROID: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub identities: usize,
    pub cameras: u32,
    pub dim: usize,
    pub presence_prob: f64,
    pub intra_noise_sigma: f64,
    pub inter_class_min_sep: f64,
    pub frames_per_camera: u64,
    pub unsync_max_offset: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            identities: 64,
            cameras: 4,
            dim: 64,
            presence_prob: 0.8,
            intra_noise_sigma: 0.1,
            inter_class_min_sep: 0.8,
            frames_per_camera: 2110,
            unsync_max_offset: 0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.identities == 0 || self.cameras == 0 || self.dim == 0 {
            return bad("identities, cameras and dim must be positive");
        }
        if !(self.presence_prob > 0.0 && self.presence_prob <= 1.0) {
            return bad("presence_prob must lie in (0, 1]");
        }
        if !(self.intra_noise_sigma.is_finite() && self.intra_noise_sigma >= 0.0) {
            return bad("intra_noise_sigma must be finite and >= 0");
        }
        if !(self.inter_class_min_sep.is_finite() && self.inter_class_min_sep > 0.0) {
            return bad("inter_class_min_sep must be finite and > 0");
        }
        if self.frames_per_camera < 20 {
            return bad("frames_per_camera must be at least 20");
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = math::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Unit-sphere centroids, pairwise at least `sep` apart.
pub fn sample_centroids(count: usize, dim: usize, sep: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(count);
    while centroids.len() < count {
        let mut placed = false;
        for _ in 0..ATTEMPTS_PER_CENTROID {
            let c = unit_vector(rng, dim);
            if centroids.iter().all(|o| distance(o, &c) >= sep) {
                centroids.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SeparationUnsatisfiable {
                identities: count,
                separation: sep,
                attempts: ATTEMPTS_PER_CENTROID,
            });
        }
    }
    Ok(centroids)
}

pub fn identity_name(o: usize) -> alloc::string::String {
    format!("o{o:04}")
}

pub fn generate_scenario(config: &SynthConfig) -> Result<TrajectorySet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centroids = sample_centroids(
        config.identities,
        config.dim,
        config.inter_class_min_sep,
        &mut rng,
    )?;
    let offsets: Vec<i64> = (0..config.cameras)
        .map(|_| rng.random_range(0..=config.unsync_max_offset) as i64)
        .collect();

    let fpc = config.frames_per_camera as i64;
    let min_len = (fpc / 50).max(1);
    let max_len = (fpc / 10).max(min_len);
    let max_transit = (fpc / 20).max(1);
    let latest_start = (fpc - max_len - max_transit).max(0);
    let min_cameras = if config.cameras >= 2 { 2 } else { 1 };
    let noise_scale = config.intra_noise_sigma / math::sqrt(config.dim as f64);

    let mut records = Vec::new();
    for (o, centroid) in centroids.iter().enumerate() {
        let present: Vec<u32> = loop {
            let cams: Vec<u32> = (1..=config.cameras)
                .filter(|_| rng.random_bool(config.presence_prob))
                .collect();
            if cams.len() >= min_cameras {
                break cams;
            }
        };
        let passage = rng.random_range(0..=latest_start);
        for camera in present {
            let start = passage + rng.random_range(0..=max_transit) + offsets[camera as usize - 1];
            let len = rng.random_range(min_len..=max_len);
            let feature = centroid
                .iter()
                .map(|&c| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + noise_scale * z
                })
                .collect();
            records.push(TrajectoryRecord {
                trajectory_id: format!("{}_c{camera}", identity_name(o)),
                camera_id: camera,
                start_frame: start,
                end_frame: start + len - 1,
                feature,
                identity_id: Some(identity_name(o)),
            });
        }
    }
    TrajectorySet::new(records, Some(config.cameras), Some(config.dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use alloc::collections::BTreeMap;
    use alloc::string::String;

    fn small() -> SynthConfig {
        SynthConfig {
            identities: 12,
            cameras: 3,
            dim: 16,
            presence_prob: 0.7,
            intra_noise_sigma: 0.1,
            inter_class_min_sep: 0.8,
            frames_per_camera: 1000,
            unsync_max_offset: 0,
            seed: 3,
        }
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(generate_scenario(&small()).unwrap(), generate_scenario(&small()).unwrap());
        let other = SynthConfig { seed: 4, ..small() };
        assert_ne!(generate_scenario(&small()).unwrap(), generate_scenario(&other).unwrap());
    }

    #[test]
    fn zero_noise_gives_identical_descriptors() {
        let set = generate_scenario(&SynthConfig { intra_noise_sigma: 0.0, ..small() }).unwrap();
        let mut by_identity: BTreeMap<&str, &Vec<f64>> = BTreeMap::new();
        for r in set.records() {
            let first = by_identity.entry(r.identity_id.as_deref().unwrap()).or_insert(&r.feature);
            assert_eq!(*first, &r.feature);
        }
    }

    #[test]
    fn two_by_two_counts() {
        let set = generate_scenario(&SynthConfig {
            identities: 2,
            cameras: 2,
            presence_prob: 1.0,
            ..small()
        })
        .unwrap();
        assert_eq!(set.len(), 4);
        let g = build_graph(&set, None).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.labels().unwrap().iter().filter(|&&l| l == 1).count(), 2);
    }

    #[test]
    fn every_identity_spans_two_cameras() {
        let set = generate_scenario(&SynthConfig { presence_prob: 0.1, ..small() }).unwrap();
        let mut cams: BTreeMap<String, usize> = BTreeMap::new();
        for r in set.records() {
            *cams.entry(r.identity_id.clone().unwrap()).or_default() += 1;
        }
        assert_eq!(cams.len(), 12);
        assert!(cams.values().all(|&c| c >= 2));
    }

    #[test]
    fn centroids_respect_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cs = sample_centroids(30, 8, 1.0, &mut rng).unwrap();
        for i in 0..cs.len() {
            assert!((math::norm(&cs[i]) - 1.0).abs() < 1e-12);
            for j in 0..i {
                assert!(distance(&cs[i], &cs[j]) >= 1.0);
            }
        }
    }

    #[test]
    fn impossible_separation_is_reported() {
        let err = generate_scenario(&SynthConfig {
            identities: 5,
            dim: 2,
            inter_class_min_sep: 1.9,
            ..small()
        })
        .unwrap_err();
        assert!(matches!(err, Error::SeparationUnsatisfiable { .. }));
    }

    #[test]
    fn nearest_centroid_recovers_identities_at_ratio_four() {
        let config = SynthConfig {
            identities: 40,
            cameras: 4,
            dim: 64,
            presence_prob: 1.0,
            inter_class_min_sep: 0.8,
            intra_noise_sigma: 0.2,
            ..small()
        };
        let set = generate_scenario(&config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let centroids = sample_centroids(40, 64, 0.8, &mut rng).unwrap();
        for r in set.records() {
            let nearest = (0..centroids.len())
                .min_by(|&a, &b| {
                    distance(&centroids[a], &r.feature).total_cmp(&distance(&centroids[b], &r.feature))
                })
                .unwrap();
            assert_eq!(identity_name(nearest), r.identity_id.clone().unwrap());
        }
    }

    #[test]
    fn unsynchronized_cameras_push_positive_pairs_apart() {
        let config = SynthConfig {
            identities: 30,
            cameras: 4,
            frames_per_camera: 2000,
            unsync_max_offset: 1000,
            seed: 5,
            ..small()
        };
        let set = generate_scenario(&config).unwrap();
        let g = build_graph(&set, None).unwrap();
        let t = 200;
        let severed = g
            .edges()
            .iter()
            .zip(g.labels().unwrap())
            .filter(|(&(i, j), &l)| {
                let (a, b) = (&set.records()[g.nodes()[i].source], &set.records()[g.nodes()[j].source]);
                l == 1 && a.frame_gap(b) > t
            })
            .count();
        assert!(severed > 0);
    }
}
