use pkrg::checkpoint;
use pkrg::covering::{bad_cubes, classify_series, lattice, Verdict};
use pkrg::estimates::{estimate_terms, estimates_csv, flux_checks, EstimateConfig};
use pkrg::packets::{packet_series, packets_csv, Cube};
use pkrg::solver::{self, energy_check, InitialCondition, SolverConfig};

fn small_run() -> SolverConfig {
    SolverConfig {
        alpha: 1.2,
        n: 32,
        dt: 1e-3,
        t_end: 0.02,
        seed: 4,
        initial_condition: InitialCondition::RandomBand { band: 1 },
        snapshot_every: 5,
        ..SolverConfig::default()
    }
}

#[test]
fn short_run_respects_energy_and_flux() {
    let cfg = small_run();
    let mut checks = Vec::new();
    let tr = solver::run_with(&cfg, |step, t, u, s| {
        if step % 10 == 0 {
            let cubes: Vec<Cube> = [[0.5, 0.5, 0.5], [0.2, 0.8, 0.3]]
                .iter()
                .map(|c| Cube::new(*c, 1, 0.01))
                .collect::<pkrg::Result<_>>()?;
            checks.extend(flux_checks(s, t, u, &cubes, 1, 1e-3, 1e-8)?);
        }
        Ok(())
    })
    .unwrap();
    assert!(energy_check(&tr.energy_series).unwrap().worst_defect <= 1e-6);
    assert!(tr.max_divergence < 1e-10);
    assert_eq!(tr.snapshots.len(), 5);
    assert!(!checks.is_empty());
    for c in &checks {
        assert!(c.passes(), "{c:?}");
    }
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let tr = solver::run(&SolverConfig { t_end: 0.003, ..small_run() }).unwrap();
    let (t, u) = tr.final_state().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("u.pkrg");
    checkpoint::write(&p, u, *t, 1.2).unwrap();
    let back = checkpoint::read(&p).unwrap();
    assert_eq!(back.time, *t);
    assert_eq!(back.alpha, 1.2);
    for d in 0..3 {
        assert_eq!(back.field.component(d).coeffs(), u.component(d).coeffs());
    }
    let mut bytes = checkpoint::encode(u, *t, 1.2);
    bytes[0] = b'X';
    assert!(checkpoint::decode(&bytes).is_err());
}

#[test]
fn analysis_outputs_have_one_row_per_item() {
    let tr = solver::run(&small_run()).unwrap();
    let eps = 0.01;
    let regions: Vec<_> = [[0.5; 3], [0.1, 0.2, 0.3]]
        .iter()
        .map(|c| Cube::new(*c, 1, eps).unwrap().region())
        .collect();
    let series = packet_series(&tr.snapshots, &regions, &[1, 2]).unwrap();
    assert_eq!(series.len(), 4);
    let csv = packets_csv(&series);
    assert_eq!(csv.lines().count(), 1 + 4 * tr.snapshots.len());

    let (t, u) = &tr.snapshots[2];
    let solver = solver::Solver::from_config(&small_run()).unwrap();
    let cubes = vec![Cube::new([0.5; 3], 1, eps).unwrap()];
    let rows = estimate_terms(&solver, *t, u, &cubes, 1, EstimateConfig { alpha: 1.2, epsilon: eps }).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].g_diss >= 0.0 && rows[0].i_flux <= 0.0);
    assert_eq!(estimates_csv(&rows).lines().count(), 2);
}

#[test]
fn classification_covers_the_lattice() {
    let tr = solver::run(&small_run()).unwrap();
    let eps = 0.01;
    let recs = classify_series(&tr, &[1, 2, 3], eps, (0.0, 1.0)).unwrap();
    for (j, rs) in &recs {
        assert_eq!(rs.len(), lattice(*j, eps, 1.0).len());
        let bad = bad_cubes(rs);
        assert_eq!(bad.len(), rs.iter().filter(|r| r.integral > r.threshold).count());
        assert!(rs.iter().all(|r| (r.verdict == Verdict::Good) == (r.integral <= r.threshold)));
    }
    assert!(recs[&1].iter().any(|r| r.integral > 0.0));
}
