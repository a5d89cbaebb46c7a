//! Shared test fixtures: scene builders that keep state and spectrum
//! consistent, and an independent brute-force DBSCAN reference.
//!
//! Each integration test target compiles this module separately and uses a
//! different subset of it.
#![allow(dead_code)]
// The reference clusterer works on index pairs throughout.
#![allow(clippy::needless_range_loop)]

use leafscope::geom::Vec3;
use leafscope::isolate::DbscanPartition;
use leafscope::scene::{ClutterPatch, PlantSensor, SceneDescription, DEFAULT_CLUTTER_BAND};
use leafscope::spectral::{encode_state, StateCoding};

/// Sensor whose spectral peak matches its declared state under `coding`.
pub fn sensor_with_state(position: Vec3, state: f64, coding: &StateCoding) -> PlantSensor {
    let (peak_wavelength_nm, peak_amplitude) = encode_state(state, coding);
    PlantSensor {
        position,
        tape_extent_m: 0.08,
        peak_wavelength_nm,
        peak_amplitude,
        peak_fwhm_nm: 20.0,
        state_score: state,
    }
}

/// Scene scanning a forward sector, with a diffuse wall well behind the
/// sensors.
pub fn sector_scene(half_angle_deg: f64, seed: u64) -> SceneDescription {
    let mut scene = SceneDescription::empty();
    scene.lidar.azimuth_start_deg = -half_angle_deg;
    scene.lidar.azimuth_end_deg = half_angle_deg;
    scene.background.wall_x_m = Some(6.0);
    scene.rng_seed = seed;
    scene
}

/// Position at `range_m` from the world origin, `azimuth_deg` off +x, height
/// `z`.
pub fn polar(range_m: f64, azimuth_deg: f64, z: f64) -> Vec3 {
    let az = azimuth_deg.to_radians();
    let horizontal = (range_m * range_m - z * z).sqrt();
    Vec3::new(horizontal * az.cos(), horizontal * az.sin(), z)
}

pub fn clutter(position: Vec3, extent_m: f64, return_density: f64) -> ClutterPatch {
    ClutterPatch { position, extent_m, return_density, intensity_band: DEFAULT_CLUTTER_BAND }
}

// ---------------------------------------------------------------------------
// Brute-force DBSCAN reference
// ---------------------------------------------------------------------------

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// O(n^2) reference DBSCAN with the same pinned semantics as the production
/// clusterer: neighborhoods are inclusive (radius and self), clusters are
/// ordered by their smallest core index, and a border point joins the
/// earliest-created cluster holding a core within eps of it.
pub fn brute_force_dbscan(points: &[Vec3], eps_m: f64, min_pts: usize) -> DbscanPartition {
    let n = points.len();
    let eps2 = eps_m * eps_m;
    let within = |i: usize, j: usize| {
        let d = points[i] - points[j];
        d.dot(d) <= eps2
    };

    let is_core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_pts)
        .collect();

    // Density-connect cores.
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        if !is_core[i] {
            continue;
        }
        for j in i + 1..n {
            if is_core[j] && within(i, j) {
                uf.union(i, j);
            }
        }
    }

    // Components in creation order = ascending smallest core index.
    let mut roots: Vec<usize> = Vec::new();
    let mut cluster_of_root = std::collections::HashMap::new();
    for i in 0..n {
        if is_core[i] {
            let r = uf.find(i);
            cluster_of_root.entry(r).or_insert_with(|| {
                roots.push(r);
                roots.len() - 1
            });
        }
    }

    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); roots.len()];
    let mut noise = Vec::new();
    for i in 0..n {
        if is_core[i] {
            let id = cluster_of_root[&uf.find(i)];
            clusters[id].push(i);
        } else {
            // Border point: earliest cluster with a core in reach.
            let id = (0..n)
                .filter(|&q| is_core[q] && within(q, i))
                .map(|q| cluster_of_root[&uf.find(q)])
                .min();
            match id {
                Some(id) => clusters[id].push(i),
                None => noise.push(i),
            }
        }
    }
    for members in &mut clusters {
        members.sort_unstable();
    }
    DbscanPartition { clusters, noise }
}
