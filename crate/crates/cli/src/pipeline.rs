//! Stages. Each reads only its declared inputs and returns the files it wrote.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use pkrg::checkpoint;
use pkrg::covering::{
    bad_cubes, barrier_with_retries, classify_series, naughty_cover, refined_cover, theta, vitali_cover,
    BarrierOutcome, CoverFamily, CoverMap, Provenance, Verdict,
};
use pkrg::dimension::{box_count, cantor_counts, CountableSet, DimensionEstimate};
use pkrg::estimates::{estimate_terms, estimates_csv, flux_checks, EstimateConfig};
use pkrg::packets::{cube_side, packet_series, packets_csv, Cube, Region};
use pkrg::solver::{self, energy_check, energy_csv, Dealias, EnergyReport, EnergySample, Scheme, Solver, Trajectory};
use pkrg::{Error, Grid};

use crate::config::{Config, Stage};
use crate::manifest::{artifacts, RunManifest, StageRecord};

pub const TRAJECTORY: &str = "trajectory.json";
pub const COVERS: &str = "covers.json";

/// Relative tolerance and floor of the flux comparison attached to estimates.
const FLUX_REL: f64 = 1e-3;
const FLUX_FLOOR: f64 = 1e-8;

fn write(path: &Path, contents: impl AsRef<[u8]>, out: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    out.push(path.to_path_buf());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T, out: &mut Vec<PathBuf>) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)?, out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub time: f64,
    pub file: String,
}

/// `trajectory.json`: everything later stages need from a solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub alpha: f64,
    pub grid_points: usize,
    pub period_length: f64,
    pub dt_seconds: f64,
    pub scheme: Scheme,
    pub dealias: Dealias,
    pub seed: u64,
    pub snapshots: Vec<SnapshotEntry>,
    pub max_divergence: f64,
    pub sup_max: f64,
    pub energy_report: EnergyReport,
    pub energy_series: Vec<EnergySample>,
}

pub fn solve(cfg: &Config, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let sc = cfg.solver.to_solver(cfg.run.seed);
    sc.validate()?;
    let traj = solver::run(&sc)?;
    let snap_dir = out_dir.join("snapshots");
    fs::create_dir_all(&snap_dir).with_context(|| format!("creating {}", snap_dir.display()))?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (i, (t, u)) in traj.snapshots.iter().enumerate() {
        let name = format!("snap_{i:05}.pkrg");
        write(&snap_dir.join(&name), checkpoint::encode(u, *t, sc.alpha), &mut files)?;
        entries.push(SnapshotEntry { time: *t, file: format!("snapshots/{name}") });
    }
    write(&out_dir.join("energy.csv"), energy_csv(&traj.energy_series), &mut files)?;
    let mut sup = String::from("time,sup_norm\n");
    for (t, s) in &traj.sup_series {
        let _ = writeln!(sup, "{t:.9},{s:.15e}");
    }
    write(&out_dir.join("sup.csv"), sup, &mut files)?;
    let meta = RunMeta {
        alpha: sc.alpha,
        grid_points: sc.n,
        period_length: sc.period,
        dt_seconds: sc.dt,
        scheme: sc.scheme,
        dealias: sc.dealias,
        seed: sc.seed,
        snapshots: entries,
        max_divergence: traj.max_divergence,
        sup_max: traj.sup_series.iter().map(|s| s.1).fold(0.0, f64::max),
        energy_report: energy_check(&traj.energy_series)?,
        energy_series: traj.energy_series,
    };
    write_json(&out_dir.join(TRAJECTORY), &meta, &mut files)?;
    Ok(files)
}

/// Load `trajectory.json` and its checkpoints.
pub fn load_run(run_dir: &Path) -> Result<(RunMeta, Trajectory)> {
    let path = run_dir.join(TRAJECTORY);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let meta: RunMeta = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut snapshots = Vec::with_capacity(meta.snapshots.len());
    for s in &meta.snapshots {
        let cp = checkpoint::read(run_dir.join(&s.file))?;
        snapshots.push((cp.time, cp.field));
    }
    let traj = Trajectory {
        alpha: meta.alpha,
        snapshots,
        energy_series: meta.energy_series.clone(),
        sup_series: Vec::new(),
        max_divergence: meta.max_divergence,
    };
    Ok((meta, traj))
}

pub fn analyze(cfg: &Config, run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (meta, traj) = load_run(run_dir)?;
    let a = &cfg.analysis;
    let grid = Grid::new(meta.grid_points, meta.period_length)?;
    let solver = Solver::new(grid, meta.alpha, meta.dt_seconds, meta.scheme, meta.dealias)?;
    let packet_regions: Vec<Region> = a
        .cube_centers
        .iter()
        .map(|c| Cube::new(*c, a.packet_cube_level, a.epsilon).map(|q| q.region()))
        .collect::<pkrg::Result<_>>()?;
    let series = packet_series(&traj.snapshots, &packet_regions, &a.bands)?;
    let mut rows = Vec::new();
    let est = EstimateConfig { alpha: meta.alpha, epsilon: a.epsilon };
    for (t, u) in &traj.snapshots {
        for &j in &a.bands {
            let cubes: Vec<Cube> = a
                .cube_centers
                .iter()
                .map(|c| Cube::new(*c, j, a.epsilon))
                .collect::<pkrg::Result<_>>()?;
            let mut terms = estimate_terms(&solver, *t, u, &cubes, j, est)
                .with_context(|| format!("estimates at t = {t}, band {j}"))?;
            if a.flux_check {
                let checks = flux_checks(&solver, *t, u, &cubes, j, FLUX_REL, FLUX_FLOOR)?;
                for (row, c) in terms.iter_mut().zip(&checks) {
                    row.lhs_rate = Some(c.lhs_rate);
                }
            }
            rows.extend(terms);
        }
    }
    let mut files = Vec::new();
    write(&out_dir.join("packets.csv"), packets_csv(&series), &mut files)?;
    write(&out_dir.join("estimates.csv"), estimates_csv(&rows), &mut files)?;
    Ok(files)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CubeEntry {
    pub center: [f64; 3],
    pub sidelength: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyEntry {
    pub level: i32,
    pub provenance: Provenance,
    pub cardinality: usize,
    pub budget: f64,
    pub measured_constant: f64,
    pub cubes: Vec<CubeEntry>,
}

impl From<&CoverFamily> for FamilyEntry {
    fn from(f: &CoverFamily) -> Self {
        Self {
            level: f.level,
            provenance: f.provenance,
            cardinality: f.len(),
            budget: f.cardinality_budget,
            measured_constant: f.measured_constant,
            cubes: f
                .cubes
                .iter()
                .map(|c| CubeEntry { center: c.center, sidelength: c.side() })
                .collect(),
        }
    }
}

/// `covers.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoversDoc {
    pub alpha: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub theta: f64,
    pub period_length: f64,
    pub window: (f64, f64),
    /// Levels whose bands were summed up to this cap in the goodness integral.
    pub band_cap: i32,
    pub families: Vec<FamilyEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BarrierLevel {
    pub j: i32,
    pub tested: usize,
    pub found: usize,
    pub verified: usize,
    pub covered_after_retry: usize,
    pub not_found: usize,
    pub outcomes: Vec<serde_json::Value>,
}

pub fn cover(cfg: &Config, run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (meta, traj) = load_run(run_dir)?;
    let (alpha, eps, period) = (meta.alpha, cfg.analysis.epsilon, meta.period_length);
    let cov = &cfg.covering;
    let grid = Grid::new(meta.grid_points, period)?;
    let top = *grid.lattice_bands().end();
    let Some(&j_max) = cov.levels.iter().max() else {
        bail!("covering.levels is empty");
    };
    let (w0, w1) = cfg.window();
    let t_first = traj.snapshots.first().map_or(0.0, |s| s.0);
    let t_last = traj.snapshots.last().map_or(0.0, |s| s.0);
    let window = (w0.max(t_first), w1.min(t_last));
    let all_levels: Vec<i32> = (1..=top).collect();
    let records = classify_series(&traj, &all_levels, eps, window)?;

    let mut goodness = String::from("j,center_x,center_y,center_z,sidelength,integral,threshold,verdict\n");
    for recs in records.values() {
        for r in recs {
            let c = r.cube.center;
            let _ = writeln!(
                goodness,
                "{},{:.9},{:.9},{:.9},{:.9e},{:.12e},{:.12e},{}",
                r.cube.j,
                c[0],
                c[1],
                c[2],
                r.cube.side(),
                r.integral,
                r.threshold,
                if r.verdict == Verdict::Good { "good" } else { "bad" }
            );
        }
    }

    let mut families: Vec<FamilyEntry> = Vec::new();
    let mut a_map = CoverMap::new();
    for (&k, recs) in &records {
        let v = vitali_cover(&bad_cubes(recs), k, alpha, eps, period)?;
        if !v.verified {
            return Err(anyhow!("Vitali cover check failed at level {k}"));
        }
        families.push((&v.family).into());
        a_map.insert(k, v.family.cubes);
    }
    let mut b_fams: BTreeMap<i32, CoverFamily> = BTreeMap::new();
    for k in 1..=j_max {
        let b = naughty_cover(&a_map, k, alpha, eps, cov.eta, period)?;
        if cov.levels.contains(&k) {
            families.extend(b.levels.values().map(|l| FamilyEntry::from(&l.family)));
            families.push((&b.cover).into());
        }
        b_fams.insert(k, b.cover);
    }
    let th = theta(alpha, eps);
    for &j in &cov.levels {
        families.push((&refined_cover(&b_fams, j, th, alpha, eps, period)).into());
    }

    let mut barriers = Vec::new();
    for &j in &cov.levels {
        let b = &b_fams[&j];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed ^ (0xb0_u64 << 8 | j as u64));
        let mut lvl = BarrierLevel {
            j,
            tested: 0,
            found: 0,
            verified: 0,
            covered_after_retry: 0,
            not_found: 0,
            outcomes: Vec::new(),
        };
        let mut attempts = 0;
        while lvl.tested < cov.barrier_points && attempts < 100 * cov.barrier_points.max(1) {
            attempts += 1;
            let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..period));
            if b.contains(x, period) {
                continue;
            }
            lvl.tested += 1;
            match barrier_with_retries(x, j, alpha, eps, &a_map, cov.eta, cov.retries, period) {
                Ok(o) => {
                    match &o {
                        BarrierOutcome::Found { barrier, .. } => {
                            lvl.found += 1;
                            lvl.verified += barrier.verified as usize;
                        }
                        BarrierOutcome::Covered { .. } => lvl.covered_after_retry += 1,
                    }
                    lvl.outcomes.push(serde_json::json!({ "x": x, "outcome": o }));
                }
                Err(Error::BarrierNotFound { l1_mass }) => {
                    lvl.not_found += 1;
                    lvl.outcomes.push(serde_json::json!({ "x": x, "outcome": { "NotFound": { "l1_mass": l1_mass } } }));
                }
                Err(e) => return Err(e.into()),
            }
        }
        barriers.push(lvl);
    }

    let doc = CoversDoc {
        alpha,
        epsilon: eps,
        eta: cov.eta,
        theta: th,
        period_length: period,
        window,
        band_cap: top,
        families,
    };
    let mut files = Vec::new();
    write(&out_dir.join("goodness.csv"), goodness, &mut files)?;
    write_json(&out_dir.join(COVERS), &doc, &mut files)?;
    write_json(&out_dir.join("barriers.json"), &barriers, &mut files)?;
    Ok(files)
}

pub fn read_covers(path: &Path) -> Result<CoversDoc> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Box-counting estimates from the refined covers `C_j`: the cover counts against
/// `s_j`, and grid box counts of the finest nonempty `C_j`.
pub fn dimension_estimates(doc: &CoversDoc, alpha: f64, box_levels: u32) -> Result<Vec<DimensionEstimate>> {
    let mut refined: Vec<&FamilyEntry> = doc
        .families
        .iter()
        .filter(|f| f.provenance == Provenance::C)
        .collect();
    refined.sort_by_key(|f| f.level);
    let by_level: Vec<(f64, usize)> = refined
        .iter()
        .map(|f| (cube_side(f.level, doc.epsilon), f.cardinality))
        .collect();
    let mut out = vec![DimensionEstimate::new("C_j cardinality", by_level, alpha)];
    if let Some(f) = refined.iter().rev().find(|f| f.cardinality > 0) {
        let set = CountableSet::Cubes(f.cubes.iter().map(|c| Region::new(c.center, c.sidelength)).collect());
        let scales = (1..=box_levels as i32)
            .map(|m| {
                let r = doc.period_length * (-(m as f64)).exp2();
                Ok((r, box_count(&set, r, doc.period_length)?))
            })
            .collect::<pkrg::Result<Vec<_>>>()?;
        out.push(DimensionEstimate::new(&format!("box count C_{}", f.level), scales, alpha));
    }
    Ok(out)
}

pub fn cantor_estimate(levels: u32, alpha: f64) -> Result<DimensionEstimate> {
    Ok(DimensionEstimate::new("cantor dust", cantor_counts(levels)?, alpha))
}

pub fn write_dimension(estimates: &[DimensionEstimate], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut csv = String::from("r,N,provenance\n");
    for e in estimates {
        csv.extend(e.csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    let mut files = Vec::new();
    write(&out_dir.join("dimension.csv"), csv, &mut files)?;
    write_json(&out_dir.join("dimension.json"), &estimates, &mut files)?;
    Ok(files)
}

pub fn dimension(cfg: &Config, covers: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let doc = read_covers(covers)?;
    write_dimension(&dimension_estimates(&doc, doc.alpha, cfg.dimension.box_levels)?, out_dir)
}

/// Run the configured stages in order under `cfg.run.output_dir`; write `manifest.json`.
pub fn run_pipeline(cfg: &Config) -> Result<RunManifest> {
    let out = &cfg.run.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest = RunManifest::new(&cfg.canonical(), cfg.run.seed);
    for &stage in &cfg.run.stages {
        let t = Instant::now();
        let (inputs, files) = match stage {
            Stage::Solve => (vec!["config".to_string()], solve(cfg, out)),
            Stage::Analyze => (vec![TRAJECTORY.to_string(), "snapshots/".into()], analyze(cfg, out, out)),
            Stage::Cover => (vec![TRAJECTORY.to_string(), "snapshots/".into()], cover(cfg, out, out)),
            Stage::Dimension => (vec![COVERS.to_string()], dimension(cfg, &out.join(COVERS), out)),
        };
        let files = files.with_context(|| format!("stage '{}' failed", stage.name()))?;
        manifest.stages.push(StageRecord {
            name: stage.name().into(),
            inputs,
            artifacts: artifacts(&files, out)?,
            wall_clock_seconds: t.elapsed().as_secs_f64(),
        });
    }
    manifest.write(&out.join("manifest.json"))?;
    Ok(manifest)
}
