//! Production DBSCAN against the brute-force reference.

mod common;

use common::brute_force_dbscan;
use leafscope::geom::Vec3;
use leafscope::isolate::{dbscan, DbscanParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    // A few Gaussian-ish blobs plus uniform scatter.
    let n_blobs = rng.random_range(1..5);
    let centers: Vec<Vec3> = (0..n_blobs)
        .map(|_| {
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.3..0.3),
            )
        })
        .collect();
    (0..n)
        .map(|_| {
            if rng.random_range(0.0..1.0) < 0.8 {
                let c = centers[rng.random_range(0..centers.len())];
                c + Vec3::new(
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                )
            } else {
                Vec3::new(
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-0.5..0.5),
                )
            }
        })
        .collect()
}

#[test]
fn two_gaussian_blobs_match_reference_over_100_seeds() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        for blob in 0..2 {
            let center = Vec3::new(blob as f64, 0.0, 0.0);
            for _ in 0..30 {
                points.push(
                    center
                        + Vec3::new(
                            rng.random_range(-0.03..0.03),
                            rng.random_range(-0.03..0.03),
                            rng.random_range(-0.03..0.03),
                        ),
                );
            }
        }
        let got = dbscan(&points, &DbscanParams { eps_m: 0.1, min_pts: 5 });
        let want = brute_force_dbscan(&points, 0.1, 5);
        assert_eq!(got, want, "seed {seed}");
        assert_eq!(got.clusters.len(), 2, "seed {seed}: blobs 1 m apart must stay separate");
    }
}

#[test]
fn random_sets_match_reference_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for case in 0..100 {
        let n = rng.random_range(0..=200);
        let points = random_point_set(&mut rng, n);
        let eps = rng.random_range(0.03..0.3);
        let min_pts = rng.random_range(1..=8);
        let got = dbscan(&points, &DbscanParams { eps_m: eps, min_pts });
        let want = brute_force_dbscan(&points, eps, min_pts);
        assert_eq!(got, want, "case {case}: n={n} eps={eps} min_pts={min_pts}");
    }
}

#[test]
fn core_memberships_survive_input_shuffling() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..20 {
        let points = random_point_set(&mut rng, 120);
        let params = DbscanParams { eps_m: 0.12, min_pts: 4 };

        let mut order: Vec<usize> = (0..points.len()).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<Vec3> = order.iter().map(|&i| points[i]).collect();

        // Partition core points into cluster-sets, in original index space.
        let core_partition = |pts: &[Vec3], back: Option<&[usize]>| -> Vec<Vec<usize>> {
            let eps2 = params.eps_m * params.eps_m;
            let is_core = |i: usize| {
                pts.iter().filter(|p| (**p - pts[i]).dot(**p - pts[i]) <= eps2).count() >= params.min_pts
            };
            let mut sets: Vec<Vec<usize>> = dbscan(pts, &params)
                .clusters
                .iter()
                .map(|members| {
                    let mut cores: Vec<usize> = members
                        .iter()
                        .copied()
                        .filter(|&i| is_core(i))
                        .map(|i| back.map_or(i, |b| b[i]))
                        .collect();
                    cores.sort_unstable();
                    cores
                })
                .collect();
            sets.sort();
            sets
        };

        let original = core_partition(&points, None);
        let reshuffled = core_partition(&shuffled, Some(&order));
        assert_eq!(original, reshuffled, "case {case}: core memberships must be order-independent");
    }
}
