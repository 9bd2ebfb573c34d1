//! Pseudo-spectral time stepping for `u_t + (-Delta)^alpha u + T div(u (x) u) = 0`
//! on the periodic box, with an energy-inequality monitor.

use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::field::{self, fractional_symbol, SpectralField, Spectrum};
use crate::grid::Grid;
use crate::lp::{self, BandSelector};

/// Largest `dt * lambda_max` accepted for the IMEX-Euler scheme.
pub const IMEX_STIFFNESS_LIMIT: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact integrating factor for the dissipation, classical RK4 for the rest.
    IfRk4,
    /// Implicit dissipation, explicit nonlinear term, first order.
    ImexEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dealias {
    /// Keep `|k_i| < n/3`.
    TwoThirds,
    /// Products on a 3n/2 grid; every non-Nyquist mode is kept.
    Padded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitialCondition {
    TaylorGreen,
    /// Random solenoidal field projected to one dyadic band.
    RandomBand { band: i32 },
    Checkpoint { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub n: usize,
    pub period: f64,
    pub dt: f64,
    pub t_end: f64,
    pub dealias: Dealias,
    pub scheme: Scheme,
    pub seed: u64,
    pub initial_condition: InitialCondition,
    /// Keep every `snapshot_every`-th state (the first and last are always kept).
    pub snapshot_every: usize,
    /// Sup-norm above which the run is declared blown up.
    pub sup_ceiling: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            n: 64,
            period: 1.0,
            dt: 1e-3,
            t_end: 0.1,
            dealias: Dealias::TwoThirds,
            scheme: Scheme::IfRk4,
            seed: 0,
            initial_condition: InitialCondition::TaylorGreen,
            snapshot_every: 10,
            sup_ceiling: 1e6,
        }
    }
}

impl SolverConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.period)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha <= 1.5) {
            return Err(Error::Config(format!("alpha must lie in (1, 3/2], got {}", self.alpha)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be >= 1".into()));
        }
        if !(self.sup_ceiling > 0.0) {
            return Err(Error::Config("sup_ceiling must be positive".into()));
        }
        self.grid().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Precomputed operators for one grid, exponent and time step.
pub struct Solver {
    grid: Grid,
    alpha: f64,
    dt: f64,
    scheme: Scheme,
    dealias: Dealias,
    sup_ceiling: f64,
    lambda: Vec<f64>,
    keep: Vec<bool>,
    e_full: Vec<f64>,
    e_half: Vec<f64>,
}

impl Solver {
    pub fn new(grid: Grid, alpha: f64, dt: f64, scheme: Scheme, dealias: Dealias) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
        }
        let sym = fractional_symbol(&grid, alpha)?;
        let keep = match dealias {
            Dealias::TwoThirds => field::two_thirds_mask(&grid),
            Dealias::Padded => (0..grid.len()).map(|i| !grid.is_nyquist(i)).collect(),
        };
        let lambda: Vec<f64> = (0..grid.len())
            .map(|i| if keep[i] { sym(i) } else { 0.0 })
            .collect();
        if scheme == Scheme::ImexEuler {
            let lmax = lambda.iter().copied().fold(0.0, f64::max);
            if dt * lmax > IMEX_STIFFNESS_LIMIT {
                return Err(Error::Config(format!(
                    "IMEX-Euler needs dt * lambda_max <= {IMEX_STIFFNESS_LIMIT}, got {:.3e}; \
                     reduce dt or use the integrating-factor scheme",
                    dt * lmax
                )));
            }
        }
        let e_full = lambda.iter().map(|l| (-l * dt).exp()).collect();
        let e_half = lambda.iter().map(|l| (-0.5 * l * dt).exp()).collect();
        Ok(Self {
            grid,
            alpha,
            dt,
            scheme,
            dealias,
            sup_ceiling: 1e6,
            lambda,
            keep,
            e_full,
            e_half,
        })
    }

    pub fn from_config(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let mut s = Self::new(cfg.grid()?, cfg.alpha, cfg.dt, cfg.scheme, cfg.dealias)?;
        s.sup_ceiling = cfg.sup_ceiling;
        Ok(s)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Dissipation symbol restricted to the retained modes.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Zero every mode the scheme does not evolve.
    pub fn filter(&self, u: &mut SpectralField) {
        let keep = &self.keep;
        u.apply_symbol(|i| if keep[i] { 1.0 } else { 0.0 });
    }

    /// `-T div(u (x) u)` with the configured dealiasing, plus `sup |u|` on the
    /// sampling grid as a by-product.
    pub fn nonlinear_with_sup(&self, u: &SpectralField) -> Result<(SpectralField, f64)> {
        self.grid.ensure_same(u.grid())?;
        let (work_grid, phys) = match self.dealias {
            Dealias::TwoThirds => (self.grid, u.to_physical_unchecked()),
            Dealias::Padded => {
                let m = lp::padded_size(self.grid.n());
                let up = u.pad(m)?;
                (*up.grid(), up.to_physical_unchecked())
            }
        };
        let sup = phys.sup_norm();
        let c = phys.comps();
        let mut products = Vec::with_capacity(6);
        for a in 0..3 {
            for b in a..3 {
                products.push(c[a].iter().zip(&c[b]).map(|(x, y)| x * y).collect::<Vec<f64>>());
            }
        }
        let mut spectra = field::forward_many(&work_grid, &products);
        if self.dealias == Dealias::Padded {
            for s in spectra.iter_mut() {
                *s = s.truncate(self.grid.n())?;
            }
        }
        // index of the symmetric product (a, b) in `spectra`
        const PAIR: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
        let g = self.grid;
        let mut out = [
            vec![Complex64::default(); g.len()],
            vec![Complex64::default(); g.len()],
            vec![Complex64::default(); g.len()],
        ];
        for i in 0..g.len() {
            if !self.keep[i] {
                continue;
            }
            let k = g.derivative_wavevector(i);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                continue;
            }
            let mut w = [Complex64::default(); 3];
            for (a, wa) in w.iter_mut().enumerate() {
                let mut acc = Complex64::default();
                for (b, kb) in k.iter().enumerate() {
                    acc += spectra[PAIR[a][b]].coeffs()[i] * kb;
                }
                // -(i k_b) P_ab
                *wa = Complex64::new(acc.im, -acc.re);
            }
            let kw = (w[0] * k[0] + w[1] * k[1] + w[2] * k[2]) / k2;
            for d in 0..3 {
                out[d][i] = w[d] - kw * k[d];
            }
        }
        let [x, y, z] = out;
        let n = SpectralField::from_components([
            Spectrum::from_coeffs(g, x)?,
            Spectrum::from_coeffs(g, y)?,
            Spectrum::from_coeffs(g, z)?,
        ])?;
        Ok((n, sup))
    }

    pub fn nonlinear(&self, u: &SpectralField) -> Result<SpectralField> {
        Ok(self.nonlinear_with_sup(u)?.0)
    }

    /// Full right-hand side `-(-Delta)^alpha u + N(u)`.
    pub fn rhs(&self, u: &SpectralField) -> Result<SpectralField> {
        let mut r = self.nonlinear(u)?;
        let lam = &self.lambda;
        let diss = u.with_symbol(|i| -lam[i]);
        r.add_assign(&diss);
        Ok(r)
    }

    /// One step of size `dt` from time `t`.
    pub fn step(&self, u: &SpectralField, t: f64) -> Result<SpectralField> {
        Ok(self.step_with_sup(u, t)?.0)
    }

    /// One step; also returns `sup |u|` of the input state.
    pub fn step_with_sup(&self, u: &SpectralField, t: f64) -> Result<(SpectralField, f64)> {
        let (next, sup) = match self.scheme {
            Scheme::IfRk4 => self.rk4(u, &self.e_full, &self.e_half, self.dt)?,
            Scheme::ImexEuler => {
                let (n, sup) = self.nonlinear_with_sup(u)?;
                let mut next = u.clone();
                next.add_assign(&n.scaled(self.dt));
                let (lam, dt) = (&self.lambda, self.dt);
                next.apply_symbol(|i| 1.0 / (1.0 + lam[i] * dt));
                (next, sup)
            }
        };
        let mut next = next;
        // the increments are solenoidal only up to rounding of much larger
        // gradient parts; re-project so tiny modes keep their direction
        next.leray_project_in_place();
        self.check_state(u, sup, t)?;
        self.check_state(&next, 0.0, t + self.dt)?;
        Ok((next, sup))
    }

    /// Integrating-factor RK4 step of arbitrary (possibly negative) size `h`.
    /// Used for short probe steps; does not check the ceiling.
    pub fn advance(&self, u: &SpectralField, h: f64) -> Result<SpectralField> {
        let e_full: Vec<f64> = self.lambda.iter().map(|l| (-l * h).exp()).collect();
        let e_half: Vec<f64> = self.lambda.iter().map(|l| (-0.5 * l * h).exp()).collect();
        let mut next = self.rk4(u, &e_full, &e_half, h)?.0;
        next.leray_project_in_place();
        Ok(next)
    }

    fn rk4(
        &self,
        u: &SpectralField,
        e_full: &[f64],
        e_half: &[f64],
        h: f64,
    ) -> Result<(SpectralField, f64)> {
        let half = |f: &SpectralField| f.with_symbol(|i| e_half[i]);
        let full = |f: &SpectralField| f.with_symbol(|i| e_full[i]);
        let (k1, sup) = self.nonlinear_with_sup(u)?;
        let u_half = half(u);

        let mut u2 = u.clone();
        u2.add_assign(&k1.scaled(0.5 * h));
        let u2 = half(&u2);
        let k2 = self.nonlinear(&u2)?;

        let mut u3 = u_half.clone();
        u3.add_assign(&k2.scaled(0.5 * h));
        let k3 = self.nonlinear(&u3)?;

        let mut u4 = full(u);
        u4.add_assign(&half(&k3).scaled(h));
        let k4 = self.nonlinear(&u4)?;

        let mut mid = k2;
        mid.add_assign(&k3);
        let mut incr = full(&k1);
        incr.add_assign(&half(&mid).scaled(2.0));
        incr.add_assign(&k4);
        let mut next = full(u);
        next.add_assign(&incr.scaled(h / 6.0));
        Ok((next, sup))
    }

    fn check_state(&self, u: &SpectralField, sup: f64, t: f64) -> Result<()> {
        if !u.is_finite() {
            let band = nonfinite_band(u);
            return Err(Error::BlowUp {
                time: t,
                band,
                reason: "non-finite coefficient".into(),
            });
        }
        if sup > self.sup_ceiling || !sup.is_finite() {
            return Err(Error::BlowUp {
                time: t,
                band: dominant_band(u),
                reason: format!("sup norm {sup:.3e} exceeds ceiling {:.3e}", self.sup_ceiling),
            });
        }
        Ok(())
    }
}

fn band_of(g: &Grid, i: usize) -> i32 {
    let xi = g.xi(i);
    if xi == 0.0 {
        0
    } else {
        xi.log2().round() as i32
    }
}

fn nonfinite_band(u: &SpectralField) -> i32 {
    let g = *u.grid();
    (0..g.len())
        .find(|&i| {
            u.components()
                .iter()
                .any(|c| !(c.coeffs()[i].re.is_finite() && c.coeffs()[i].im.is_finite()))
        })
        .map(|i| band_of(&g, i))
        .unwrap_or(0)
}

/// Band carrying the most energy.
pub fn dominant_band(u: &SpectralField) -> i32 {
    let g = *u.grid();
    let mut best = (f64::NEG_INFINITY, 0);
    for j in g.lattice_bands() {
        let e = lp::project_unchecked(u, BandSelector::Single(j)).norm_sq();
        if e > best.0 {
            best = (e, j);
        }
    }
    best.1
}

/// `(time, ||u||^2, cumulative dissipation integral of ||(-Delta)^{alpha/2} u||^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub time: f64,
    pub energy: f64,
    pub dissipation: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub alpha: f64,
    pub snapshots: Vec<(f64, SpectralField)>,
    pub energy_series: Vec<EnergySample>,
    /// `(time, sup |u|)` at every step start and at the final state.
    pub sup_series: Vec<(f64, f64)>,
    /// Largest relative divergence seen on any step.
    pub max_divergence: f64,
}

impl Trajectory {
    pub fn grid(&self) -> Option<&Grid> {
        self.snapshots.first().map(|(_, u)| u.grid())
    }

    pub fn final_state(&self) -> Option<&(f64, SpectralField)> {
        self.snapshots.last()
    }
}

/// Dissipation integral over one step, mode by mode, with the logarithmic mean of
/// the endpoint mode energies (exact for exponentially decaying modes).
fn dissipation_increment(lambda: &[f64], grid: &Grid, a: &SpectralField, b: &SpectralField, h: f64) -> f64 {
    let vol = grid.volume();
    let mut acc = 0.0;
    for (i, &lam) in lambda.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let mut ea = 0.0;
        let mut eb = 0.0;
        for d in 0..3 {
            ea += a.component(d).coeffs()[i].norm_sqr();
            eb += b.component(d).coeffs()[i].norm_sqr();
        }
        acc += lam * log_mean(ea, eb);
    }
    acc * vol * h
}

fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.5 * (a + b);
    }
    let r = b / a;
    if (r - 1.0).abs() < 1e-6 {
        // series of (r - 1)/ln r around 1
        let x = r - 1.0;
        return a * (1.0 + x / 2.0 - x * x / 12.0 + x * x * x / 24.0);
    }
    (b - a) / r.ln()
}

/// Build the initial state, normalized to unit L2 norm (checkpoints are used as stored).
pub fn initial_state(cfg: &SolverConfig) -> Result<(f64, SpectralField)> {
    let g = cfg.grid()?;
    let (t0, mut u) = match &cfg.initial_condition {
        InitialCondition::TaylorGreen => (0.0, taylor_green(g)),
        InitialCondition::RandomBand { band } => {
            g.check_band(*band)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let u = SpectralField::random_solenoidal(g, &mut rng);
            (0.0, lp::project(&u, BandSelector::Single(*band))?)
        }
        InitialCondition::Checkpoint { path } => {
            let ck = checkpoint::read(path)?;
            g.ensure_same(ck.field.grid())?;
            return Ok((ck.time, ck.field));
        }
    };
    let keep = match cfg.dealias {
        Dealias::TwoThirds => field::two_thirds_mask(&g),
        Dealias::Padded => (0..g.len()).map(|i| !g.is_nyquist(i)).collect(),
    };
    u.apply_symbol(|i| if keep[i] { 1.0 } else { 0.0 });
    let norm = u.norm();
    if norm == 0.0 {
        return Err(Error::Config("initial condition vanishes on this grid".into()));
    }
    u.scale(1.0 / norm);
    Ok((t0, u))
}

/// `(sin x cos y cos z, -cos x sin y cos z, 0)` in units of `2 pi / period`.
pub fn taylor_green(g: Grid) -> SpectralField {
    let mut comps = [Spectrum::zeros(g), Spectrum::zeros(g), Spectrum::zeros(g)];
    // sin(a)cos(b)cos(c) = sum over sign choices of e^{i(...)} / (8i) * sign(a)
    for sx in [-1i64, 1] {
        for sy in [-1i64, 1] {
            for sz in [-1i64, 1] {
                let k = [sx, sy, sz];
                // x: sin in x -> coefficient sx / (8i)
                let cx = Complex64::new(0.0, -(sx as f64) / 8.0);
                let cy = Complex64::new(0.0, (sy as f64) / 8.0);
                comps[0].set_coeff(k, cx).expect("low mode");
                comps[1].set_coeff(k, cy).expect("low mode");
            }
        }
    }
    SpectralField::from_components(comps).expect("same grid")
}

/// Closed-form shear `(amp sin(2 pi m y / L), 0, 0)` used by tests and demos.
pub fn shear_mode(g: Grid, m: i64, amp: f64) -> SpectralField {
    let mut x = Spectrum::zeros(g);
    x.set_coeff([0, m, 0], Complex64::new(0.0, -0.5 * amp)).expect("resolved mode");
    x.set_coeff([0, -m, 0], Complex64::new(0.0, 0.5 * amp)).expect("resolved mode");
    SpectralField::from_components([x, Spectrum::zeros(g), Spectrum::zeros(g)]).expect("same grid")
}

/// Evolve according to `cfg`, calling `observe(step_index, time, state)` on every
/// state (including the initial one) before it is stepped.
pub fn run_with(
    cfg: &SolverConfig,
    mut observe: impl FnMut(usize, f64, &SpectralField, &Solver) -> Result<()>,
) -> Result<Trajectory> {
    let solver = Solver::from_config(cfg)?;
    let (t0, mut u) = initial_state(cfg)?;
    let g = *solver.grid();
    let steps = ((cfg.t_end - t0) / cfg.dt).round().max(0.0) as usize;
    let mut tr = Trajectory {
        alpha: cfg.alpha,
        snapshots: vec![(t0, u.clone())],
        energy_series: vec![EnergySample {
            time: t0,
            energy: u.norm_sq(),
            dissipation: 0.0,
        }],
        sup_series: Vec::new(),
        max_divergence: u.divergence_violation(),
    };
    let mut t = t0;
    for s in 0..steps {
        observe(s, t, &u, &solver)?;
        let (next, sup) = solver.step_with_sup(&u, t)?;
        tr.sup_series.push((t, sup));
        let inc = dissipation_increment(solver.lambda(), &g, &u, &next, cfg.dt);
        let prev = *tr.energy_series.last().expect("non-empty");
        t = t0 + (s + 1) as f64 * cfg.dt;
        tr.energy_series.push(EnergySample {
            time: t,
            energy: next.norm_sq(),
            dissipation: prev.dissipation + inc,
        });
        tr.max_divergence = tr.max_divergence.max(next.divergence_violation());
        u = next;
        if (s + 1) % cfg.snapshot_every == 0 || s + 1 == steps {
            tr.snapshots.push((t, u.clone()));
        }
    }
    if steps > 0 {
        observe(steps, t, &u, &solver)?;
    }
    tr.sup_series.push((t, u.to_physical_unchecked().sup_norm()));
    Ok(tr)
}

pub fn run(cfg: &SolverConfig) -> Result<Trajectory> {
    run_with(cfg, |_, _, _, _| Ok(()))
}

/// Worst signed defect of `1/2 E(t) + D(t) - D(s) - 1/2 E(s) <= 0` over all pairs `s < t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub worst_defect: f64,
    pub s: f64,
    pub t: f64,
    pub pairs: usize,
}

pub fn energy_check(series: &[EnergySample]) -> Result<EnergyReport> {
    if series.is_empty() {
        return Err(Error::Precondition("empty energy series".into()));
    }
    let f = |e: &EnergySample| 0.5 * e.energy + e.dissipation;
    let mut best = EnergyReport {
        worst_defect: if series.len() == 1 { 0.0 } else { f64::NEG_INFINITY },
        s: series[0].time,
        t: series[0].time,
        pairs: series.len() * (series.len() - 1) / 2,
    };
    let mut min_idx = 0;
    for i in 1..series.len() {
        let d = f(&series[i]) - f(&series[min_idx]);
        if d > best.worst_defect {
            best.worst_defect = d;
            best.s = series[min_idx].time;
            best.t = series[i].time;
        }
        if f(&series[i]) < f(&series[min_idx]) {
            min_idx = i;
        }
    }
    Ok(best)
}

/// Shear decay rate `(2 pi m / L)^{2 alpha}`.
pub fn shear_rate(g: &Grid, m: i64, alpha: f64) -> f64 {
    (2.0 * PI * m as f64 / g.period()).powf(2.0 * alpha)
}

/// CSV rows `time,energy,dissipation,defect` where `defect` is measured from time 0.
pub fn energy_csv(series: &[EnergySample]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("time,energy,dissipation,defect\n");
    if let Some(first) = series.first() {
        for e in series {
            let defect = 0.5 * e.energy + e.dissipation - 0.5 * first.energy;
            let _ = writeln!(out, "{:.9},{:.15e},{:.15e},{:.6e}", e.time, e.energy, e.dissipation, defect);
        }
    }
    out
}
