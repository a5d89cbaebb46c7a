//! Sensor isolation: intensity band-pass over a sweep, DBSCAN clustering of
//! the surviving points, and geometric validation of each cluster.
//!
//! DBSCAN here is the standard density-based algorithm with a pinned,
//! deterministic tie-break: clusters are seeded from core points in ascending
//! index order, and a border point belongs to the first cluster whose
//! expansion reaches it. This makes the partition reproducible and lets tests
//! compare against a brute-force reference exactly.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::scene::LidarFrame;

#[derive(Debug, Error, PartialEq)]
pub enum IsolateError {
    #[error("cannot summarize an empty cluster")]
    EmptyCluster,
}

/// Closed intensity pass band on the 0-255 count scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityBand {
    pub lo: f64,
    pub hi: f64,
}

impl IntensityBand {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, intensity: f64) -> bool {
        intensity >= self.lo && intensity <= self.hi
    }
}

/// Density-clustering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    /// Neighborhood radius, meters (inclusive).
    pub eps_m: f64,
    /// Minimum neighborhood size (counting the point itself) for a core point.
    pub min_pts: usize,
}

/// Result of clustering: clusters plus leftover noise, covering every input
/// index exactly once. Cluster member lists and the noise list are sorted
/// ascending; cluster order is creation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DbscanPartition {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// An isolated retroreflector candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub id: usize,
    /// Indices into the originating frame's point list.
    pub member_indices: Vec<usize>,
    pub centroid: Vec3,
    /// Mean Euclidean distance of members from the LiDAR origin, meters.
    pub mean_range_m: f64,
    pub point_count: usize,
    /// Max pairwise member distance, meters.
    pub extent_m: f64,
    pub valid: bool,
}

/// Returns with intensity inside the band, as (original index, position),
/// input order preserved.
pub fn intensity_gate(frame: &LidarFrame, band: IntensityBand) -> Vec<(usize, Vec3)> {
    frame
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| band.contains(p.intensity))
        .map(|(i, p)| (i, p.position))
        .collect()
}

/// Standard DBSCAN over Euclidean distance. Neighborhood search is brute
/// force; gated frames carry tens to a few hundred points.
pub fn dbscan(points: &[Vec3], params: &DbscanParams) -> DbscanPartition {
    let n = points.len();
    let eps2 = params.eps_m * params.eps_m;

    // Neighbor lists are inclusive of the point itself and index-ascending.
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            let d = points[i] - points[j];
            if d.dot(d) <= eps2 {
                neighbors[i].push(j);
            }
        }
    }
    let is_core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= params.min_pts).collect();

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if label[seed].is_some() || !is_core[seed] {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![seed];
        label[seed] = Some(id);
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            // Only core points extend the cluster; border points terminate it.
            if !is_core[p] {
                continue;
            }
            for &q in &neighbors[p] {
                if label[q].is_none() {
                    label[q] = Some(id);
                    members.push(q);
                    queue.push_back(q);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }

    let noise = (0..n).filter(|&i| label[i].is_none()).collect();
    DbscanPartition { clusters, noise }
}

/// Centroid, mean range and extent of a cluster's members.
pub fn summarize_cluster(
    frame: &LidarFrame,
    member_indices: &[usize],
    id: usize,
) -> Result<ClusterReport, IsolateError> {
    if member_indices.is_empty() {
        return Err(IsolateError::EmptyCluster);
    }
    let k = member_indices.len() as f64;
    let mut centroid = Vec3::ZERO;
    let mut mean_range = 0.0;
    for &i in member_indices {
        let p = frame.points[i].position;
        centroid = centroid + p;
        mean_range += p.norm();
    }
    centroid = centroid / k;
    mean_range /= k;

    let mut extent: f64 = 0.0;
    for (a, &i) in member_indices.iter().enumerate() {
        for &j in &member_indices[a + 1..] {
            extent = extent.max(frame.points[i].position.distance(frame.points[j].position));
        }
    }

    Ok(ClusterReport {
        id,
        member_indices: member_indices.to_vec(),
        centroid,
        mean_range_m: mean_range,
        point_count: member_indices.len(),
        extent_m: extent,
        valid: true,
    })
}

/// Flag clutter-like clusters: too large to be a tape patch or outside the
/// usable range gate.
pub fn validate_cluster(mut report: ClusterReport, max_extent_m: f64, range_gate_m: (f64, f64)) -> ClusterReport {
    report.valid = report.extent_m <= max_extent_m
        && report.mean_range_m >= range_gate_m.0
        && report.mean_range_m <= range_gate_m.1;
    report
}

/// Full isolation parameter set, with the tuned defaults used by the CLI and
/// the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsolationParams {
    pub band: IntensityBand,
    pub eps_m: f64,
    pub min_pts: usize,
    pub max_extent_m: f64,
    /// Validation gate on cluster mean range, meters. Slightly wider at the
    /// top than the detector's retro gate: a tape patch centered exactly at
    /// the gate ceiling has members marginally beyond it (beam obliquity).
    pub range_gate_m: (f64, f64),
}

impl Default for IsolationParams {
    fn default() -> Self {
        IsolationParams {
            band: IntensityBand::new(230.0, 255.0),
            eps_m: 0.10,
            min_pts: 5,
            max_extent_m: 0.25,
            range_gate_m: (0.8, 2.05),
        }
    }
}

/// Gate, cluster, summarize and validate one frame. Reports are ordered by
/// cluster id (creation order); member indices refer to the input frame.
pub fn detect(frame: &LidarFrame, params: &IsolationParams) -> Vec<ClusterReport> {
    let gated = intensity_gate(frame, params.band);
    let positions: Vec<Vec3> = gated.iter().map(|(_, p)| *p).collect();
    let partition = dbscan(&positions, &DbscanParams { eps_m: params.eps_m, min_pts: params.min_pts });
    partition
        .clusters
        .iter()
        .enumerate()
        .map(|(id, members)| {
            let frame_indices: Vec<usize> = members.iter().map(|&m| gated[m].0).collect();
            let report = summarize_cluster(frame, &frame_indices, id).expect("clusters are non-empty");
            validate_cluster(report, params.max_extent_m, params.range_gate_m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{render_frame_with_truth, LidarReturn, PlantSensor, SceneDescription, SurfaceKind};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame_at(positions: &[Vec3]) -> LidarFrame {
        LidarFrame {
            points: positions
                .iter()
                .map(|&position| LidarReturn {
                    position,
                    range_m: position.norm(),
                    intensity: 240.0,
                    ring: 0,
                    azimuth_deg: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn gate_on_empty_frame() {
        assert!(intensity_gate(&LidarFrame::default(), IntensityBand::new(0.0, 255.0)).is_empty());
    }

    #[test]
    fn full_band_passes_everything_and_tight_band_nothing() {
        let mut frame = frame_at(&[Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)]);
        frame.points[0].intensity = 12.0;
        frame.points[1].intensity = 254.0;
        assert_eq!(intensity_gate(&frame, IntensityBand::new(0.0, 255.0)).len(), 2);
        // lo above the max intensity in the frame
        assert!(intensity_gate(&frame, IntensityBand::new(255.0, 255.0)).is_empty());
    }

    #[test]
    fn gate_matches_material_truth_labels() {
        let mut scene = SceneDescription::empty();
        scene.lidar.azimuth_start_deg = -40.0;
        scene.lidar.azimuth_end_deg = 40.0;
        scene.background.wall_x_m = Some(5.0);
        scene.background.floor_z_m = Some(-0.8);
        scene.sensors.push(PlantSensor {
            position: Vec3::new(1.5, 0.0, 0.0),
            tape_extent_m: 0.08,
            peak_wavelength_nm: 655.0,
            peak_amplitude: 0.8,
            peak_fwhm_nm: 20.0,
            state_score: 0.5,
        });
        let (frame, truth) = render_frame_with_truth(&scene, 21);
        let gated = intensity_gate(&frame, IntensityBand::new(230.0, 255.0));
        assert!(!gated.is_empty());
        // Every gated point is a tape return; diffuse background never reaches
        // the retro band (max 80 + noise).
        for (idx, _) in &gated {
            assert_eq!(truth[*idx], SurfaceKind::Sensor(0));
        }
    }

    #[test]
    fn dense_blob_forms_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points: Vec<Vec3> = (0..10)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-0.04..0.04),
                    rng.random_range(-0.04..0.04),
                    rng.random_range(-0.04..0.04),
                )
            })
            .collect();
        let part = dbscan(&points, &DbscanParams { eps_m: 0.2, min_pts: 5 });
        assert_eq!(part.clusters.len(), 1);
        assert_eq!(part.clusters[0].len(), 10);
        assert!(part.noise.is_empty());
    }

    #[test]
    fn isolated_points_are_noise() {
        let points = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(0.0, 5.0, 0.0),
        ];
        let part = dbscan(&points, &DbscanParams { eps_m: 1.0, min_pts: 2 });
        assert!(part.clusters.is_empty());
        assert_eq!(part.noise, vec![0, 1, 2]);
    }

    #[test]
    fn partition_covers_every_index_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(0..60);
            let points: Vec<Vec3> = (0..n)
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0))
                .collect();
            let part = dbscan(&points, &DbscanParams { eps_m: 0.15, min_pts: 3 });
            let mut seen = vec![0usize; n];
            for c in &part.clusters {
                for &i in c {
                    seen[i] += 1;
                }
            }
            for &i in &part.noise {
                seen[i] += 1;
            }
            assert!(seen.iter().all(|&s| s == 1), "partition must cover each index exactly once");
        }
    }

    #[test]
    fn summarize_single_point() {
        let frame = frame_at(&[Vec3::new(1.0, 0.0, 0.0)]);
        let r = summarize_cluster(&frame, &[0], 0).unwrap();
        assert_eq!(r.centroid, Vec3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(r.mean_range_m, 1.0, epsilon = 1e-15);
        assert_eq!(r.point_count, 1);
        assert_eq!(r.extent_m, 0.0);
    }

    #[test]
    fn summarize_two_point_symmetry() {
        let frame = frame_at(&[Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)]);
        let r = summarize_cluster(&frame, &[0, 1], 0).unwrap();
        assert_eq!(r.centroid, Vec3::new(0.5, 0.5, 0.0));
        assert_abs_diff_eq!(r.mean_range_m, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn summarize_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let positions: Vec<Vec3> = (0..40)
            .map(|_| {
                Vec3::new(
                    rng.random_range(0.5..2.0),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                )
            })
            .collect();
        let frame = frame_at(&positions);
        let members: Vec<usize> = (0..40).collect();
        let r = summarize_cluster(&frame, &members, 0).unwrap();
        let expect_mean_range = positions.iter().map(|p| p.norm()).sum::<f64>() / 40.0;
        assert_abs_diff_eq!(r.mean_range_m, expect_mean_range, epsilon = 1e-12);
    }

    #[test]
    fn summarize_empty_errors() {
        let frame = frame_at(&[]);
        assert_eq!(summarize_cluster(&frame, &[], 0).unwrap_err(), IsolateError::EmptyCluster);
    }

    #[test]
    fn validation_accepts_tape_sized_cluster() {
        let frame = frame_at(&[Vec3::new(1.5, 0.0, 0.0), Vec3::new(1.5, 0.04, 0.0)]);
        let r = summarize_cluster(&frame, &[0, 1], 0).unwrap();
        let r = validate_cluster(r, 0.25, (0.8, 2.0));
        assert!(r.valid);
    }

    #[test]
    fn validation_rejects_wall_sized_cluster() {
        let frame = frame_at(&[Vec3::new(1.5, -0.6, 0.0), Vec3::new(1.5, 0.6, 0.0)]);
        let r = summarize_cluster(&frame, &[0, 1], 0).unwrap();
        let r = validate_cluster(r, 0.25, (0.8, 2.0));
        assert!(!r.valid);
    }

    #[test]
    fn validation_rejects_out_of_gate_cluster() {
        let frame = frame_at(&[Vec3::new(2.6, 0.0, 0.0), Vec3::new(2.6, 0.02, 0.0)]);
        let r = summarize_cluster(&frame, &[0, 1], 0).unwrap();
        let r = validate_cluster(r, 0.25, (0.8, 2.0));
        assert!(!r.valid);
    }

    #[test]
    fn valid_reports_always_sit_inside_gate() {
        let mut scene = SceneDescription::empty();
        scene.lidar.azimuth_start_deg = -40.0;
        scene.lidar.azimuth_end_deg = 40.0;
        scene.sensors.push(PlantSensor {
            position: Vec3::new(1.2, 0.3, 0.0),
            tape_extent_m: 0.08,
            peak_wavelength_nm: 655.0,
            peak_amplitude: 0.8,
            peak_fwhm_nm: 20.0,
            state_score: 0.5,
        });
        let frame = crate::scene::render_frame(&scene, 8);
        let params = IsolationParams::default();
        for report in detect(&frame, &params).iter().filter(|r| r.valid) {
            assert!(report.mean_range_m >= params.range_gate_m.0 && report.mean_range_m <= params.range_gate_m.1);
        }
    }
}
