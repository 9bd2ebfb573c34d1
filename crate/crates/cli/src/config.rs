//! Run configuration: one TOML file, overridable by `PKRG_<SECTION>__<KEY>` variables.
//!
//! Simulation time is dimensionless; the `_seconds` suffix on time keys names that
//! dimensionless time unit. Lengths are in units of the box period.

use std::fmt;
use std::path::{Path, PathBuf};

use pkrg::covering::DEFAULT_ETA;
use pkrg::packets::epsilon_cap;
use pkrg::solver::{Dealias, InitialCondition, Scheme, SolverConfig};
use pkrg::Grid;
use serde::{Deserialize, Serialize};

/// Configuration problems, each prefixed by the offending field path.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for p in &self.0 {
            write!(f, "\n  {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Solve,
    Analyze,
    Cover,
    Dimension,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Analyze => "analyze",
            Stage::Cover => "cover",
            Stage::Dimension => "dimension",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct Config {
    pub run: RunSection,
    pub solver: SolverSection,
    pub analysis: AnalysisSection,
    pub covering: CoveringSection,
    pub dimension: DimensionSection,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub stages: Vec<Stage>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            stages: vec![Stage::Solve, Stage::Analyze, Stage::Cover, Stage::Dimension],
            output_dir: PathBuf::from("run"),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    TaylorGreen,
    RandomBand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub alpha: f64,
    pub grid_points: usize,
    pub period_length: f64,
    pub dt_seconds: f64,
    pub t_end_seconds: f64,
    pub dealias: Dealias,
    pub scheme: Scheme,
    pub initial_condition: InitialKind,
    /// Band of the `random-band` initial condition.
    pub initial_band: i32,
    pub snapshot_every: usize,
    pub sup_ceiling: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            alpha: d.alpha,
            grid_points: d.n,
            period_length: d.period,
            dt_seconds: d.dt,
            t_end_seconds: d.t_end,
            dealias: d.dealias,
            scheme: d.scheme,
            initial_condition: InitialKind::TaylorGreen,
            initial_band: 2,
            snapshot_every: d.snapshot_every,
            sup_ceiling: d.sup_ceiling,
        }
    }
}

impl SolverSection {
    pub fn to_solver(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            n: self.grid_points,
            period: self.period_length,
            dt: self.dt_seconds,
            t_end: self.t_end_seconds,
            dealias: self.dealias,
            scheme: self.scheme,
            seed,
            initial_condition: match self.initial_condition {
                InitialKind::TaylorGreen => InitialCondition::TaylorGreen,
                InitialKind::RandomBand => InitialCondition::RandomBand { band: self.initial_band },
            },
            snapshot_every: self.snapshot_every,
            sup_ceiling: self.sup_ceiling,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub epsilon: f64,
    /// Bands `j` for packets and estimates.
    pub bands: Vec<i32>,
    /// Cube centers (box-period units); estimates use the `j`-cube at each center.
    pub cube_centers: Vec<[f64; 3]>,
    /// Level of the fixed cubes whose packets are tracked for every band.
    pub packet_cube_level: i32,
    /// Attach the finite-difference packet rate to every estimate row.
    pub flux_check: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            bands: vec![1, 2, 3],
            cube_centers: vec![[0.5, 0.5, 0.5], [0.25, 0.5, 0.75], [0.3, 0.3, 0.6], [0.7, 0.2, 0.4]],
            packet_cube_level: 1,
            flux_check: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoveringSection {
    /// Levels `j` at which `B_j` and `C_j` are built.
    pub levels: Vec<i32>,
    pub eta: f64,
    /// Exterior points per level at which a barrier is searched.
    pub barrier_points: usize,
    pub retries: usize,
    /// Classification window; the full trajectory when absent.
    pub window_start_seconds: Option<f64>,
    pub window_end_seconds: Option<f64>,
}

impl Default for CoveringSection {
    fn default() -> Self {
        Self {
            levels: vec![2, 3],
            eta: DEFAULT_ETA,
            barrier_points: 100,
            retries: 4,
            window_start_seconds: None,
            window_end_seconds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimensionSection {
    /// Box sizes `2^-m`, `m = 1..=box_levels`, for counting the finest `C_j`.
    pub box_levels: u32,
}

impl Default for DimensionSection {
    fn default() -> Self {
        Self { box_levels: 6 }
    }
}

pub const ENV_PREFIX: &str = "PKRG_";

/// Parse an override value as a TOML scalar or array, falling back to a string.
fn override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Apply `PKRG_<SECTION>__<KEY>=value` pairs onto a TOML table.
pub fn apply_overrides<I>(table: &mut toml::Table, vars: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut problems = Vec::new();
    for (k, v) in vars {
        let Some(rest) = k.strip_prefix(ENV_PREFIX) else { continue };
        let Some((section, key)) = rest.split_once("__") else { continue };
        let (section, key) = (section.to_ascii_lowercase(), key.to_ascii_lowercase());
        let entry = table
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(key, override_value(&v));
            }
            _ => problems.push(format!("{section}: {k} targets a non-table entry")),
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(ConfigError(problems))
    }
}

impl Config {
    /// Parse TOML text and apply overrides; schema errors only.
    pub fn parse<I>(text: &str, vars: I) -> Result<Config, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError(vec![format!("<toml>: {e}")]))?;
        apply_overrides(&mut table, vars)?;
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(vec![format!("<schema>: {}", e.message())]))?;
        Ok(cfg)
    }

    /// Load `path` (or defaults when `None`) with overrides from the environment;
    /// callers validate once command-line values are merged.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| ConfigError(vec![format!("{}: {e}", p.display())]))?,
            None => String::new(),
        };
        Config::parse(&text, std::env::vars())
    }

    /// Every violated constraint of the configured stages, with its field path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_for(&self.run.stages)
    }

    /// As [`Config::validate`], checking stage-specific ranges only for `stages`.
    pub fn validate_for(&self, stages: &[Stage]) -> Result<(), ConfigError> {
        let mut p = Vec::new();
        let s = &self.solver;
        let alpha_ok = s.alpha > 1.0 && s.alpha <= 1.5;
        if !alpha_ok {
            p.push(format!("solver.alpha: must lie in (1, 3/2], got {}", s.alpha));
        }
        let grid = Grid::new(s.grid_points, s.period_length);
        if let Err(e) = &grid {
            p.push(format!("solver.grid_points / solver.period_length: {e}"));
        }
        if !(s.dt_seconds > 0.0 && s.dt_seconds.is_finite()) {
            p.push(format!("solver.dt_seconds: must be positive, got {}", s.dt_seconds));
        }
        if !(s.t_end_seconds >= 0.0 && s.t_end_seconds.is_finite()) {
            p.push(format!("solver.t_end_seconds: must be >= 0, got {}", s.t_end_seconds));
        }
        if s.snapshot_every == 0 {
            p.push("solver.snapshot_every: must be >= 1".into());
        }
        if !(s.sup_ceiling > 0.0) {
            p.push(format!("solver.sup_ceiling: must be positive, got {}", s.sup_ceiling));
        }
        let a = &self.analysis;
        if alpha_ok {
            let cap = epsilon_cap(s.alpha);
            if !(a.epsilon > 0.0 && a.epsilon < cap) {
                p.push(format!(
                    "analysis.epsilon: must lie in (0, min((4 alpha - 4)/3, 1/20)) = (0, {cap:.6}), got {}",
                    a.epsilon
                ));
            }
        }
        if let Ok(g) = &grid {
            let res = g.resolved_bands();
            let bands: &[i32] = if stages.contains(&Stage::Analyze) { &a.bands } else { &[] };
            for &j in bands {
                if !res.contains(&j) {
                    p.push(format!(
                        "analysis.bands: band {j} outside resolved range [{}, {}]",
                        res.start(),
                        res.end()
                    ));
                }
            }
            let lat = g.lattice_bands();
            let levels: &[i32] = if stages.contains(&Stage::Cover) { &self.covering.levels } else { &[] };
            for &j in levels {
                if j < 1 || j > *lat.end() {
                    p.push(format!("covering.levels: level {j} outside [1, {}]", lat.end()));
                }
            }
        }
        if a.packet_cube_level < 0 {
            p.push(format!("analysis.packet_cube_level: must be >= 0, got {}", a.packet_cube_level));
        }
        for (i, c) in a.cube_centers.iter().enumerate() {
            if !c.iter().all(|x| x.is_finite()) {
                p.push(format!("analysis.cube_centers[{i}]: not a finite point"));
            }
        }
        let c = &self.covering;
        if !(c.eta > 0.0 && c.eta < 1.0) {
            p.push(format!("covering.eta: must lie in (0, 1), got {}", c.eta));
        }
        if let (Some(t0), Some(t1)) = (c.window_start_seconds, c.window_end_seconds) {
            if !(t1 > t0) {
                p.push(format!(
                    "covering.window_end_seconds: must exceed window_start_seconds ({t1} <= {t0})"
                ));
            }
        }
        if stages.contains(&Stage::Cover) && c.levels.is_empty() {
            p.push("covering.levels: must name at least one level".into());
        }
        if self.dimension.box_levels == 0 {
            p.push("dimension.box_levels: must be >= 1".into());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(p))
        }
    }

    pub fn window(&self) -> (f64, f64) {
        (
            self.covering.window_start_seconds.unwrap_or(f64::NEG_INFINITY),
            self.covering.window_end_seconds.unwrap_or(f64::INFINITY),
        )
    }

    /// Canonical serialization used for hashing.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, ConfigError> {
        let c = Config::parse(text, std::iter::empty())?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn defaults_are_valid() {
        parse("").unwrap();
    }

    #[test]
    fn epsilon_cap_at_alpha_1_2() {
        parse("[solver]\nalpha = 1.2\n[analysis]\nepsilon = 0.01\n").unwrap();
        let e = parse("[solver]\nalpha = 1.2\n[analysis]\nepsilon = 0.06\n").unwrap_err();
        assert!(e.0.iter().any(|m| m.starts_with("analysis.epsilon")), "{e}");
    }

    #[test]
    fn all_violations_are_listed() {
        let e = parse("[solver]\nalpha = 2.0\ndt_seconds = -1.0\n[covering]\neta = 3.0\n").unwrap_err();
        let paths: Vec<&str> = e.0.iter().map(|m| m.split(':').next().unwrap()).collect();
        assert!(paths.contains(&"solver.alpha"));
        assert!(paths.contains(&"solver.dt_seconds"));
        assert!(paths.contains(&"covering.eta"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("[solver]\nalpah = 1.2\n").is_err());
        assert!(parse("[solver]\nt_end = 1.0\n").is_err());
    }

    #[test]
    fn env_overrides() {
        let vars = vec![
            ("PKRG_SOLVER__ALPHA".to_string(), "1.3".to_string()),
            ("PKRG_RUN__STAGES".to_string(), "[]".to_string()),
            ("PKRG_RUN__OUTPUT_DIR".to_string(), "out/x".to_string()),
            ("PKRG_THREADS".to_string(), "2".to_string()),
            ("HOME".to_string(), "/".to_string()),
        ];
        let c = Config::parse("[solver]\nalpha = 1.2\n", vars).unwrap();
        assert_eq!(c.solver.alpha, 1.3);
        assert!(c.run.stages.is_empty());
        assert_eq!(c.run.output_dir, PathBuf::from("out/x"));
    }
}
