use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pkrg::covering::{geometric_interval, goodness_threshold, Verdict};
use pkrg::dimension::{box_count, CountableSet};
use pkrg::estimates::rho;
use pkrg::lp::{project, BandSelector};
use pkrg::packets::{epsilon_cap, packet_norm, Cube, Region};
use pkrg::{Grid, SpectralField};

fn field(n: usize, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpectralField::random(Grid::unit(n).unwrap(), &mut rng)
}

fn center() -> impl Strategy<Value = [f64; 3]> {
    [0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64]
}

/// Sampled oracle for "the surface of `r * outer` meets the open cube `inner`"
/// (no wrapping; all cubes stay well inside the unit box).
fn surface_hits(outer: &Region, r: f64, inner: &Region, m: usize) -> bool {
    let h = 0.5 * r * outer.side;
    let b = 0.5 * inner.side;
    let inside = |p: [f64; 3]| (0..3).all(|a| (p[a] - inner.center[a]).abs() < b);
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            for u in 0..=m {
                for v in 0..=m {
                    let mut p = outer.center;
                    p[axis] += sign * h;
                    let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                    p[a1] += h * (2.0 * u as f64 / m as f64 - 1.0);
                    p[a2] += h * (2.0 * v as f64 / m as f64 - 1.0);
                    if inside(p) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn packet_is_a_seminorm(seed in 0u64..1000, c in center(), j in 1i32..=2) {
        let (f, g) = (field(32, seed), field(32, seed + 7919));
        let q = Cube::new(c, j, 0.01).unwrap().region();
        let nf = packet_norm(&f, &q, j).unwrap();
        let ng = packet_norm(&g, &q, j).unwrap();
        let nd = packet_norm(&f.sub(&g), &q, j).unwrap();
        prop_assert!((nf - ng).abs() <= nd * (1.0 + 1e-12) + 1e-14);
        let n2 = packet_norm(&f.scaled(-2.5), &q, j).unwrap();
        prop_assert!((n2 - 2.5 * nf).abs() <= 1e-12 * nf.max(1e-300));
    }

    #[test]
    fn larger_cube_carries_more(seed in 0u64..1000, c in center(), j in 1i32..=2) {
        let f = field(32, seed);
        let cube = Cube::new(c, j, 0.01).unwrap();
        let small = packet_norm(&f, &cube.region(), j).unwrap();
        let big = packet_norm(&f, &cube.dilate(1.5), j).unwrap();
        prop_assert!(small <= big * (1.0 + 1e-12));
    }

    #[test]
    fn leray_is_an_orthogonal_projection(seed in 0u64..1000) {
        let (u, v) = (field(16, seed), field(16, seed ^ 0xabc));
        let pu = u.leray_project();
        let ppu = pu.leray_project();
        prop_assert!(ppu.sub(&pu).norm() <= 1e-12 * pu.norm());
        let lhs = pu.inner(&v);
        let rhs = u.inner(&v.leray_project());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * u.norm() * v.norm());
        prop_assert!(pu.divergence_violation() <= 1e-12);
    }

    #[test]
    fn low_and_high_parts_partition(seed in 0u64..1000, j in 1i32..=2) {
        let f = field(32, seed);
        let mut s = project(&f, BandSelector::Leq(j)).unwrap();
        s.add_assign(&project(&f, BandSelector::Geq(j + 1)).unwrap());
        prop_assert!(s.sub(&f).norm() <= 1e-12 * f.norm());
        let mut singles = project(&f, BandSelector::Single(j)).unwrap();
        singles.add_assign(&project(&f, BandSelector::Single(j + 1)).unwrap());
        let range = project(&f, BandSelector::Range(j, j + 1)).unwrap();
        prop_assert!(range.sub(&singles).norm() <= 1e-12 * f.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dyadic_box_counts_are_monotone(pts in prop::collection::vec(center(), 1..60), m in 1i32..7) {
        let set = CountableSet::Points(pts);
        let coarse = box_count(&set, (-(m as f64)).exp2(), 1.0).unwrap();
        let fine = box_count(&set, (-(m as f64 + 1.0)).exp2(), 1.0).unwrap();
        prop_assert!(coarse <= fine && fine <= 8 * coarse);
    }

    #[test]
    fn cube_union_count_is_monotone(cs in prop::collection::vec(([0.2..0.8f64, 0.2..0.8f64, 0.2..0.8f64], 0.01..0.2f64), 1..20), m in 1i32..6) {
        let set = CountableSet::Cubes(cs.iter().map(|(c, s)| Region::new(*c, *s)).collect());
        let coarse = box_count(&set, (-(m as f64)).exp2(), 1.0).unwrap();
        let fine = box_count(&set, (-(m as f64 + 1.0)).exp2(), 1.0).unwrap();
        prop_assert!(coarse <= fine);
    }

    #[test]
    fn sampled_hit_implies_interval(
        x in [0.4..0.6f64, 0.4..0.6f64, 0.4..0.6f64],
        y in [0.4..0.6f64, 0.4..0.6f64, 0.4..0.6f64],
        outer_side in 0.05..0.2f64,
        inner_side in 0.001..0.05f64,
        r in 0.01..1.0f64,
    ) {
        let outer = Region::new(x, outer_side);
        let inner = Region::new(y, inner_side);
        if surface_hits(&outer, r, &inner, 24) {
            let iv = geometric_interval(&outer, &inner, 1.0);
            prop_assert!(iv.lo <= r && r <= iv.hi, "r = {r} outside [{}, {}]", iv.lo, iv.hi);
        }
    }

    #[test]
    fn rho_range_and_monotonicity(alpha in 1.0001..1.5f64, frac in 0.01..0.99f64, delta in 0u32..10_000) {
        let eps = frac * epsilon_cap(alpha);
        let base = 5.0 - 4.0 * alpha;
        let r = rho(alpha, eps, delta);
        prop_assert!(r >= base && r <= base + 10.0);
        prop_assert!(rho(alpha, eps, delta + 1) >= r);
    }

    #[test]
    fn verdict_matches_threshold(j in 1i32..12, alpha in 1.0001..1.5f64, frac in 0.01..0.99f64, scale in 0.0..2.0f64) {
        let eps = frac * epsilon_cap(alpha);
        let t = goodness_threshold(j, alpha, eps);
        let x = scale * t;
        prop_assert_eq!(Verdict::of(x, t) == Verdict::Good, x <= t);
    }
}
