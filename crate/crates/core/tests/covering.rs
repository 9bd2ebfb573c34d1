use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pkrg::covering::{
    barrier_search, brute_force_clear, covered_by, naughty_cover, refined_cover, refined_k_range, theta,
    vitali_cover, CoverFamily, CoverMap, NaughtyCover, DEFAULT_ETA,
};
use pkrg::packets::{cube_side, Cube, Region};

const ALPHA: f64 = 1.1;
const EPS: f64 = 0.01;

fn random_cubes(rng: &mut ChaCha8Rng, k: i32, count: usize, lo: f64, hi: f64) -> Vec<Cube> {
    (0..count)
        .map(|_| Cube::new(std::array::from_fn(|_| rng.random_range(lo..hi)), k, EPS).unwrap())
        .collect()
}

#[test]
fn vitali_kernel_is_disjoint_and_triples_cover() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for j in [2, 3, 4] {
        for _ in 0..5 {
            let n = rng.random_range(1..80);
            let bad = random_cubes(&mut rng, j, n, 0.0, 1.0);
            let v = vitali_cover(&bad, j, ALPHA, EPS, 1.0).unwrap();
            assert!(v.verified);
            for (a, p) in v.kernel.iter().enumerate() {
                for q in &v.kernel[a + 1..] {
                    assert!(!p.region().intersects(&q.region(), 1.0));
                }
            }
            for q in &bad {
                assert!(v.kernel.iter().any(|k| q.region().inside(&k.dilate(3.0), 1.0)));
                assert!(covered_by(&q.region(), &v.family.regions(), 7, 1.0));
            }
        }
    }
}

#[test]
fn mixed_levels_are_rejected() {
    let a = Cube::new([0.1; 3], 2, EPS).unwrap();
    let b = Cube::new([0.6; 3], 3, EPS).unwrap();
    assert!(vitali_cover(&[a, b], 2, ALPHA, EPS, 1.0).is_err());
}

fn bad_map(seed: u64, lo: i32, hi: i32) -> CoverMap {
    bad_map_in(seed, lo, hi, 0.3, 0.7)
}

fn bad_map_in(seed: u64, lo: i32, hi: i32, a: f64, b: f64) -> CoverMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = CoverMap::new();
    for k in lo..=hi {
        let n = rng.random_range(0..(6 * k as usize));
        let bad = random_cubes(&mut rng, k, n, a, b);
        m.insert(k, vitali_cover(&bad, k, ALPHA, EPS, 1.0).unwrap().family.cubes);
    }
    m
}

#[test]
fn same_level_bad_cubes_lie_in_the_naughty_cover() {
    for seed in 0..4 {
        let a = bad_map(seed, 2, 6);
        for j in 2..=4 {
            let b = naughty_cover(&a, j, ALPHA, EPS, DEFAULT_ETA, 1.0).unwrap();
            let regions = b.cover.regions();
            for q in &a[&j] {
                assert!(covered_by(&q.region(), &regions, 5, 1.0), "seed {seed}, j {j}");
            }
            for lvl in b.levels.values() {
                assert!(lvl.kernel.len() as f64 <= lvl.kernel_bound.max(lvl.naughty as f64));
                for (i, p) in lvl.kernel.iter().enumerate() {
                    for q in &lvl.kernel[i + 1..] {
                        assert!(!p.dilate(3.0).intersects(&q.region(), 1.0));
                    }
                }
            }
        }
    }
}

#[test]
fn refined_cover_contains_every_coarser_cover() {
    let a = bad_map(5, 1, 6);
    let mut b: BTreeMap<i32, CoverFamily> = BTreeMap::new();
    for k in 1..=4 {
        b.insert(k, naughty_cover(&a, k, ALPHA, EPS, DEFAULT_ETA, 1.0).unwrap().cover);
    }
    let th = theta(ALPHA, EPS);
    for j in 2..=4 {
        let c = refined_cover(&b, j, th, ALPHA, EPS, 1.0);
        assert!(c.cubes.iter().all(|q| q.j == j));
        let regions = c.regions();
        let (lo, hi, _) = refined_k_range(j, th, &b.keys().copied().collect::<Vec<_>>()).unwrap();
        for k in lo..=hi {
            let cubes = &b[&k].cubes;
            for q in cubes.iter().step_by(cubes.len() / 150 + 1) {
                assert!(covered_by(&q.region(), &regions, 4, 1.0), "B_{k} cube not in C_{j}");
            }
        }
    }
}

/// Surface of `r * outer` sampled on an `m x m` grid per face.
fn sampled_hits(outer: &Region, r: f64, inner: &Region, m: usize) -> bool {
    let h = 0.5 * r * outer.side;
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            for u in 0..=m {
                for v in 0..=m {
                    let mut p = outer.center;
                    p[axis] += sign * h;
                    p[(axis + 1) % 3] += h * (2.0 * u as f64 / m as f64 - 1.0);
                    p[(axis + 2) % 3] += h * (2.0 * v as f64 / m as f64 - 1.0);
                    if inner.contains(p, 1.0) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

#[test]
fn barriers_are_clear_by_an_independent_check() {
    let a = bad_map_in(9, 5, 9, 0.45, 0.55);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let j = 5;
    let b = naughty_cover(&a, j, ALPHA, EPS, DEFAULT_ETA, 1.0).unwrap();
    let mut found = 0;
    for _ in 0..200 {
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        if b.cover.contains(x, 1.0) {
            continue;
        }
        let res = barrier_search(x, j, EPS, &a, 1.0).unwrap();
        found += 1;
        assert!(res.verified && brute_force_clear(x, j, EPS, res.r, &a, 1.0));
        let outer = Region::new(x, cube_side(j, EPS));
        for cubes in a.range(j..).map(|(_, c)| c) {
            for q in cubes {
                assert!(!sampled_hits(&outer, res.r, &q.region(), 8));
            }
        }
    }
    assert!(found > 0);
}

#[test]
fn barrier_fails_when_every_radius_is_blocked() {
    // a cube almost concentric with x and wider than 2^-10 s_2 blocks every radius
    let x = [0.5; 3];
    let mut a = CoverMap::new();
    let blocker = Cube::new([0.5 + 1e-5, 0.5, 0.5], 8, EPS).unwrap();
    a.insert(8, vec![blocker]);
    let r = barrier_search(x, 2, EPS, &a, 1.0);
    assert!(matches!(r, Err(pkrg::Error::BarrierNotFound { .. })), "{r:?}");
}

#[test]
fn covers_round_trip_through_json() {
    let a = bad_map(3, 2, 5);
    let b = naughty_cover(&a, 2, ALPHA, EPS, DEFAULT_ETA, 1.0).unwrap();
    let text = serde_json::to_string(&b).unwrap();
    let back: NaughtyCover = serde_json::from_str(&text).unwrap();
    assert_eq!(back.cover.len(), b.cover.len());
    assert_eq!(back.cover.provenance, b.cover.provenance);
    assert_eq!(back.cover.cubes, b.cover.cubes);
    assert_eq!(back.levels.keys().collect::<Vec<_>>(), b.levels.keys().collect::<Vec<_>>());
    let fam: CoverFamily = serde_json::from_str(&serde_json::to_string(&b.cover).unwrap()).unwrap();
    assert_eq!(fam.measured_constant, b.cover.measured_constant);
}
