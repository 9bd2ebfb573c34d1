//! End-to-end verification suites shared by the `verify` command and the
//! acceptance tests. Each suite returns one [`SuiteOutcome`] per criterion.

use std::collections::BTreeMap;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::covering::{
    barrier_search, covered_by, geometric_interval, naughty_cover, surface_meets, vitali_cover,
    CoverMap, DEFAULT_ETA,
};
use crate::dimension::{self, CountableSet};
use crate::error::{Error, Result};
use crate::estimates::flux_checks;
use crate::field::{SpectralField, Spectrum};
use crate::grid::Grid;
use crate::lp::{self, BandSelector, Paraproduct};
use crate::packets::{self, BumpMoveConfig, Cube, Region};
use crate::solver::{self, InitialCondition, SolverConfig};

/// Suite names accepted by [`run_suite`], in criterion order.
pub const SUITES: [&str; 11] = [
    "paraproduct",
    "leray",
    "flux",
    "energy",
    "bump-move",
    "geometry",
    "covers",
    "cardinality",
    "dimension",
    "bounds",
    "alpha-big",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub metrics: serde_json::Value,
    pub seconds: f64,
}

impl SuiteOutcome {
    fn new(criterion: u8, passed: bool, summary: String, metrics: serde_json::Value, started: Instant) -> Self {
        Self {
            criterion,
            name: SUITES[criterion as usize - 1].to_string(),
            passed,
            summary,
            metrics,
            seconds: started.elapsed().as_secs_f64(),
        }
    }

    fn failed(criterion: u8, err: &Error, started: Instant) -> Self {
        Self::new(criterion, false, format!("error: {err}"), json!({ "error": err.to_string() }), started)
    }

    /// `criterion N [name] PASS|FAIL: summary (t s)`
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {} ({:.1} s)",
            self.criterion,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.summary,
            self.seconds
        )
    }
}

fn guarded(criterion: u8, f: impl FnOnce(Instant) -> Result<SuiteOutcome>) -> SuiteOutcome {
    let t = Instant::now();
    f(t).unwrap_or_else(|e| SuiteOutcome::failed(criterion, &e, t))
}

/// Run one suite by name. `flux`/`energy` and `covers`/`cardinality` share a
/// computation and are returned together.
pub fn run_suite(name: &str) -> Result<Vec<SuiteOutcome>> {
    Ok(match name {
        "paraproduct" => vec![paraproduct()],
        "leray" => vec![leray()],
        "flux" | "energy" => {
            let (a, b) = flux_and_energy();
            vec![a, b]
        }
        "bump-move" => vec![bump_move()],
        "geometry" => vec![geometry()],
        "covers" | "cardinality" => {
            let (a, b) = synthetic_covers();
            vec![a, b]
        }
        "dimension" => vec![dimension_estimator()],
        "bounds" => vec![bounds()],
        "alpha-big" => vec![alpha_big()],
        other => return Err(Error::Config(format!("unknown suite '{other}'"))),
    })
}

/// Every suite, each computation once.
pub fn run_all() -> Vec<SuiteOutcome> {
    let (flux, energy) = flux_and_energy();
    let (covers, card) = synthetic_covers();
    vec![
        paraproduct(),
        leray(),
        flux,
        energy,
        bump_move(),
        geometry(),
        covers,
        card,
        dimension_estimator(),
        bounds(),
        alpha_big(),
    ]
}

/// Paraproduct reconstruction on 50 seeded pairs at `N = 64`.
pub fn paraproduct() -> SuiteOutcome {
    guarded(1, |t| {
        let g = Grid::unit(64)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let f = Spectrum::random(g, &mut rng);
            let h = Spectrum::random(g, &mut rng);
            let pp = Paraproduct::new(&f, &h)?;
            let direct = lp::padded_product(&f, &h)?;
            let scale = f.norm() * h.norm();
            for j in g.resolved_bands() {
                let terms = pp.split(j)?;
                let a = lp::project_scalar_unchecked(&direct, BandSelector::Single(j));
                let b = lp::project_scalar_unchecked(&terms.sum(), BandSelector::Single(j));
                worst = worst.max(a.sub(&b).norm() / scale);
            }
        }
        Ok(SuiteOutcome::new(
            1,
            worst <= 1e-10,
            format!("worst relative residual {worst:.2e} (limit 1e-10) over 50 pairs"),
            json!({ "worst_relative": worst, "pairs": 50, "n": 64 }),
            t,
        ))
    })
}

/// Leray projector idempotency and gradient annihilation on 100 fields at `N = 32`.
pub fn leray() -> SuiteOutcome {
    guarded(2, |t| {
        let g = Grid::unit(32)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
        let (mut idem, mut grad): (f64, f64) = (0.0, 0.0);
        for _ in 0..100 {
            let f = SpectralField::random(g, &mut rng);
            let p = f.leray_project();
            idem = idem.max(p.leray_project().sub(&p).norm() / f.norm());
            let gr = SpectralField::gradient(&Spectrum::random(g, &mut rng));
            grad = grad.max(gr.leray_project().norm() / gr.norm());
        }
        Ok(SuiteOutcome::new(
            2,
            idem <= 1e-12 && grad <= 1e-12,
            format!("idempotency {idem:.2e}, gradient residual {grad:.2e} (limit 1e-12)"),
            json!({ "idempotency": idem, "gradient": grad, "fields": 100 }),
            t,
        ))
    })
}

/// Taylor-Green run used by the flux and energy criteria.
pub fn taylor_green_config() -> SolverConfig {
    SolverConfig {
        alpha: 1.1,
        n: 64,
        dt: 1e-3,
        t_end: 0.2,
        initial_condition: InitialCondition::TaylorGreen,
        snapshot_every: 10,
        ..SolverConfig::default()
    }
}

/// Flux identity on 10 cubes x 3 bands at several times, and the energy
/// inequality, from one Taylor-Green run.
pub fn flux_and_energy() -> (SuiteOutcome, SuiteOutcome) {
    let t = Instant::now();
    let cfg = taylor_green_config();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let centers: Vec<[f64; 3]> = (0..10)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.2..0.8)))
        .collect();
    let bands = [1, 2, 3];
    let probe_steps = [0usize, 25, 50, 100, 150, 200];
    let mut checks = Vec::new();
    let run = solver::run_with(&cfg, |step, time, u, s| {
        if probe_steps.contains(&step) {
            for &j in &bands {
                let cubes: Vec<Cube> = centers
                    .iter()
                    .map(|&c| Cube::new(c, j, 0.01))
                    .collect::<Result<_>>()?;
                checks.extend(flux_checks(s, time, u, &cubes, j, 1e-3, 1e-8)?);
            }
        }
        Ok(())
    });
    let tr = match run {
        Ok(tr) => tr,
        Err(e) => return (SuiteOutcome::failed(3, &e, t), SuiteOutcome::failed(4, &e, t)),
    };
    let failures = checks.iter().filter(|c| !c.passes()).count();
    let worst = checks
        .iter()
        .map(|c| c.defect / c.tolerance)
        .fold(0.0, f64::max);
    let above_floor = checks.iter().filter(|c| c.flux.rate().abs() > 1e-8).count();
    let flux = SuiteOutcome::new(
        3,
        failures == 0 && !checks.is_empty(),
        format!(
            "{} checks, {failures} over tolerance, worst defect/tolerance {worst:.2e}, {above_floor} above the 1e-8 floor",
            checks.len()
        ),
        json!({
            "checks": checks.len(),
            "failures": failures,
            "worst_defect_over_tolerance": worst,
            "above_floor": above_floor,
            "rows": checks,
        }),
        t,
    );
    let t4 = Instant::now();
    let energy = match solver::energy_check(&tr.energy_series) {
        Ok(rep) => SuiteOutcome::new(
            4,
            rep.worst_defect <= 1e-6,
            format!(
                "worst defect {:.2e} over {} pairs (limit 1e-6), max divergence {:.1e}",
                rep.worst_defect, rep.pairs, tr.max_divergence
            ),
            json!({ "report": rep, "max_divergence": tr.max_divergence }),
            t4,
        ),
        Err(e) => SuiteOutcome::failed(4, &e, t4),
    };
    (flux, energy)
}

/// Bump-moving decay slopes at `N = 128`.
pub fn bump_move() -> SuiteOutcome {
    guarded(5, |t| {
        let rep = packets::bump_move_error(&BumpMoveConfig::default())?;
        Ok(SuiteOutcome::new(
            5,
            rep.passes(),
            format!(
                "slopes {:.2} (separated) and {:.2} (moved projection), required <= {:.0}",
                rep.slope_separated, rep.slope_moved_projection, rep.required_slope
            ),
            serde_json::to_value(&rep).map_err(|e| Error::Format(e.to_string()))?,
            t,
        ))
    })
}

/// Geometric-lemma interval implication against a surface-sampling oracle.
pub fn geometry() -> SuiteOutcome {
    guarded(6, |t| {
        let rep = geometry_check(10_000, 0x5eed_0006);
        Ok(SuiteOutcome::new(
            6,
            rep.violations == 0 && rep.exact_violations == 0,
            format!(
                "{} pairs, {} sampled hits, {} violations ({} for the exact test)",
                rep.pairs, rep.hits, rep.violations, rep.exact_violations
            ),
            serde_json::to_value(&rep).map_err(|e| Error::Format(e.to_string()))?,
            t,
        ))
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryReport {
    pub pairs: usize,
    /// `(pair, r)` samples where the sampled surface met the inner cube.
    pub hits: usize,
    /// Sampled hits with `r` outside the lemma interval.
    pub violations: usize,
    /// Exact-test hits with `r` outside the lemma interval.
    pub exact_violations: usize,
}

/// Does the sampled surface `d(rQ)` meet the open cube `inner`? Samples a
/// `m x m` grid on every face plus each face's closest point to the inner center.
fn sampled_surface_meets(outer: &Region, r: f64, inner: &Region, m: usize) -> bool {
    let ra = 0.5 * r * outer.side;
    let b = 0.5 * inner.side;
    let inside = |p: [f64; 3]| (0..3).all(|a| (p[a] - inner.center[a]).abs() < b);
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut p = outer.center;
            p[axis] += sign * ra;
            let mut closest = p;
            closest[u] = inner.center[u].clamp(outer.center[u] - ra, outer.center[u] + ra);
            closest[v] = inner.center[v].clamp(outer.center[v] - ra, outer.center[v] + ra);
            if inside(closest) {
                return true;
            }
            for i in 0..m {
                for k in 0..m {
                    let s = |idx: usize| -ra + 2.0 * ra * (idx as f64 + 0.5) / m as f64;
                    let mut q = p;
                    q[u] = outer.center[u] + s(i);
                    q[v] = outer.center[v] + s(k);
                    if inside(q) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Randomized pairs kept well inside the unit torus so that no wrapping occurs.
pub fn geometry_check(pairs: usize, seed: u64) -> GeometryReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = GeometryReport { pairs, hits: 0, violations: 0, exact_violations: 0 };
    for _ in 0..pairs {
        let y: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.4..0.6));
        let a = rng.random_range(0.01..0.1);
        let x: [f64; 3] = std::array::from_fn(|i| y[i] + rng.random_range(-0.15..0.15));
        let b = rng.random_range(0.001..0.05);
        let outer = Region::new(y, 2.0 * a);
        let inner = Region::new(x, 2.0 * b);
        let iv = geometric_interval(&outer, &inner, 1.0);
        for s in 0..48 {
            let r = 2.5 * (s as f64 + 0.5) / 48.0;
            if sampled_surface_meets(&outer, r, &inner, 6) {
                rep.hits += 1;
                if !iv.contains(r) {
                    rep.violations += 1;
                }
            }
            if surface_meets(&outer, r, &inner, 1.0) && !iv.contains(r) {
                rep.exact_violations += 1;
            }
        }
    }
    rep
}

/// Parameters of the synthetic cover suite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub levels: Vec<i32>,
    pub k_max: i32,
    pub eta: f64,
    pub exterior_points: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            epsilon: 0.01,
            levels: vec![3, 4, 5],
            k_max: 9,
            eta: DEFAULT_ETA,
            exterior_points: 1000,
            seed: 0x5eed_0007,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Scattered,
    Clustered,
    Sheet,
    Filament,
}

impl Layout {
    pub const ALL: [Layout; 4] = [Layout::Scattered, Layout::Clustered, Layout::Sheet, Layout::Filament];

    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        match self {
            Layout::Scattered => std::array::from_fn(|_| rng.random_range(0.0..1.0)),
            Layout::Clustered => std::array::from_fn(|_| rng.random_range(0.0..0.5)),
            Layout::Sheet => [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.5],
            Layout::Filament => [rng.random_range(0.0..1.0), 0.3, 0.7],
        }
    }
}

/// Bad `k`-cubes with `ceil(2^{k(5 - 4 alpha + eps)})` pairwise disjoint members,
/// so that the Vitali cover saturates its budget.
pub fn synthetic_bad_set(layout: Layout, k: i32, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Cube>> {
    let want = (k as f64 * crate::covering::bad_exponent(cfg.alpha, cfg.epsilon)).exp2().ceil() as usize;
    let mut out: Vec<Cube> = Vec::new();
    let mut attempts = 0;
    while out.len() < want && attempts < 200_000 {
        attempts += 1;
        let c = Cube::new(layout.sample(rng), k, cfg.epsilon)?;
        if out.iter().all(|q| !q.region().intersects(&c.region(), 1.0)) {
            out.push(c);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticLevel {
    pub layout: Layout,
    pub j: i32,
    pub cover_size: usize,
    pub bad_j_cubes: usize,
    pub uncovered: usize,
    pub exterior_tested: usize,
    pub barriers_found: usize,
    pub barriers_verified: usize,
    pub worst_l1: f64,
    /// `(k, #B_{j,k}, measured constant, kernel, kernel bound)`.
    pub bjk: Vec<(i32, usize, f64, usize, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub config: SyntheticConfig,
    /// Largest `#A_k / 2^{k(5 - 4 alpha + eps)}`.
    pub c_a: f64,
    pub levels: Vec<SyntheticLevel>,
}

/// Build `A_k`, `B_j` and barriers for every layout.
pub fn synthetic_report(cfg: &SyntheticConfig) -> Result<SyntheticReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let j_min = *cfg.levels.iter().min().ok_or_else(|| Error::Config("no levels".into()))?;
    let mut c_a: f64 = 0.0;
    let mut levels = Vec::new();
    for layout in Layout::ALL {
        let mut a_map = CoverMap::new();
        let mut raw: BTreeMap<i32, Vec<Cube>> = BTreeMap::new();
        for k in j_min..=cfg.k_max {
            let bad = synthetic_bad_set(layout, k, cfg, &mut rng)?;
            let v = vitali_cover(&bad, k, cfg.alpha, cfg.epsilon, 1.0)?;
            if !v.verified {
                return Err(Error::Domain(format!("vitali cover check failed at k = {k}")));
            }
            c_a = c_a.max(v.family.measured_constant);
            a_map.insert(k, v.family.cubes);
            raw.insert(k, bad);
        }
        for &j in &cfg.levels {
            let b = naughty_cover(&a_map, j, cfg.alpha, cfg.epsilon, cfg.eta, 1.0)?;
            let regions = b.cover.regions();
            let mut bad_j: Vec<Region> = raw[&j].iter().map(Cube::region).collect();
            bad_j.extend(a_map[&j].iter().map(Cube::region));
            let uncovered = bad_j
                .iter()
                .filter(|q| !covered_by(q, &regions, 5, 1.0))
                .count();
            let mut tested = 0;
            let mut found = 0;
            let mut verified = 0;
            let mut worst_l1: f64 = 0.0;
            let mut attempts = 0;
            while tested < cfg.exterior_points && attempts < 100 * cfg.exterior_points {
                attempts += 1;
                let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
                if b.cover.contains(x, 1.0) {
                    continue;
                }
                tested += 1;
                match barrier_search(x, j, cfg.epsilon, &a_map, 1.0) {
                    Ok(res) => {
                        found += 1;
                        verified += res.verified as usize;
                        worst_l1 = worst_l1.max(res.f_l1);
                    }
                    Err(Error::BarrierNotFound { l1_mass }) => worst_l1 = worst_l1.max(l1_mass),
                    Err(e) => return Err(e),
                }
            }
            let bjk = b
                .levels
                .values()
                .map(|l| {
                    (
                        l.k,
                        l.family.len(),
                        l.family.measured_constant,
                        l.kernel.len(),
                        l.kernel_bound,
                    )
                })
                .collect();
            levels.push(SyntheticLevel {
                layout,
                j,
                cover_size: b.cover.len(),
                bad_j_cubes: bad_j.len(),
                uncovered,
                exterior_tested: tested,
                barriers_found: found,
                barriers_verified: verified,
                worst_l1,
                bjk,
            });
        }
    }
    Ok(SyntheticReport { config: cfg.clone(), c_a, levels })
}

/// Criteria on the synthetic cover pipeline: barrier success and membership,
/// then the `B_{j,k}` cardinality budget.
pub fn synthetic_covers() -> (SuiteOutcome, SuiteOutcome) {
    let t = Instant::now();
    let rep = match synthetic_report(&SyntheticConfig::default()) {
        Ok(r) => r,
        Err(e) => return (SuiteOutcome::failed(7, &e, t), SuiteOutcome::failed(8, &e, t)),
    };
    let tested: usize = rep.levels.iter().map(|l| l.exterior_tested).sum();
    let found: usize = rep.levels.iter().map(|l| l.barriers_found).sum();
    let verified: usize = rep.levels.iter().map(|l| l.barriers_verified).sum();
    let uncovered: usize = rep.levels.iter().map(|l| l.uncovered).sum();
    let bad: usize = rep.levels.iter().map(|l| l.bad_j_cubes).sum();
    let rate = if tested == 0 { 0.0 } else { found as f64 / tested as f64 };
    let metrics = serde_json::to_value(&rep).unwrap_or(serde_json::Value::Null);
    let covers = SuiteOutcome::new(
        7,
        tested >= 1000 && rate >= 0.99 && verified == found && uncovered == 0,
        format!(
            "barrier found for {found}/{tested} exterior points ({:.1}%, {verified} re-verified), {uncovered}/{bad} bad j-cubes uncovered",
            100.0 * rate
        ),
        metrics.clone(),
        t,
    );
    let c = rep
        .levels
        .iter()
        .flat_map(|l| l.bjk.iter().map(|b| b.2))
        .fold(0.0, f64::max);
    let kernels_ok = rep
        .levels
        .iter()
        .all(|l| l.bjk.iter().all(|b| b.3 as f64 <= b.4));
    let limit = 64.0 * rep.c_a;
    let card = SuiteOutcome::new(
        8,
        c <= limit && kernels_ok,
        format!("single constant c = {c:.3e} across (j, k); derived ceiling 64 c_A = {limit:.3e}"),
        json!({ "c": c, "c_a": rep.c_a, "ceiling": limit, "kernels_within_bound": kernels_ok }),
        t,
    );
    (covers, card)
}

/// Cantor dust and single-point box-counting slopes.
pub fn dimension_estimator() -> SuiteOutcome {
    guarded(9, |t| {
        let target = 3.0 * 2f64.ln() / 3f64.ln();
        let cantor = dimension::fit_dimension(&dimension::cantor_counts(4)?)?;
        let pt = CountableSet::Points(vec![[0.3141, 0.5926, 0.5358]]);
        let counts: Vec<(f64, usize)> = (1..=6)
            .map(|m| {
                let r = (-(m as f64)).exp2();
                Ok((r, dimension::box_count(&pt, r, 1.0)?))
            })
            .collect::<Result<_>>()?;
        let point = dimension::fit_dimension(&counts)?;
        Ok(SuiteOutcome::new(
            9,
            (cantor.slope - target).abs() <= 0.1 && point.slope.abs() <= 0.05,
            format!(
                "Cantor slope {:.4} (target {target:.4}), point slope {:.4}",
                cantor.slope, point.slope
            ),
            json!({ "cantor": cantor, "point": point, "target": target }),
            t,
        ))
    })
}

/// Closed-form bound identities and the sampled ordering.
pub fn bounds() -> SuiteOutcome {
    guarded(10, |t| {
        let r1 = dimension::bound_refined_exact(Ratio::from(1)) == Ratio::new(5, 3);
        let r2 = dimension::bound_refined_exact(Ratio::new(5, 4)) == Ratio::from(0);
        let r3 = dimension::bound_naive_exact(Ratio::new(5, 4)) == Ratio::from(0);
        let mut ordered = 0;
        for i in 1..=50 {
            let a = 1.0 + 0.25 * i as f64 / 51.0;
            if dimension::bound_refined(a) <= dimension::bound_naive(a) {
                ordered += 1;
            }
        }
        Ok(SuiteOutcome::new(
            10,
            r1 && r2 && r3 && ordered == 50,
            format!("exact identities {r1}/{r2}/{r3}, ordering holds at {ordered}/50 points"),
            json!({ "refined_at_1": r1, "refined_at_5_4": r2, "naive_at_5_4": r3, "ordered": ordered }),
            t,
        ))
    })
}

/// `alpha = 1.3` random-band run to `t = 1`.
pub fn alpha_big_config() -> SolverConfig {
    SolverConfig {
        alpha: 1.3,
        n: 64,
        dt: 1e-3,
        t_end: 1.0,
        seed: 0x5eed_000b,
        initial_condition: InitialCondition::RandomBand { band: 2 },
        snapshot_every: 100,
        ..SolverConfig::default()
    }
}

pub fn alpha_big() -> SuiteOutcome {
    guarded(11, |t| {
        let tr = solver::run(&alpha_big_config())?;
        let s0 = tr.sup_series.first().map_or(0.0, |s| s.1);
        let smax = tr.sup_series.iter().map(|s| s.1).fold(0.0, f64::max);
        let finite = tr.sup_series.iter().all(|s| s.1.is_finite());
        Ok(SuiteOutcome::new(
            11,
            finite && s0 > 0.0 && smax <= 10.0 * s0,
            format!("sup norm {s0:.3} initially, max {smax:.3} (limit 10x)"),
            json!({ "initial_sup": s0, "max_sup": smax, "samples": tr.sup_series.len() }),
            t,
        ))
    })
}
