//! Scenario files.
//!
//! A scenario is a TOML document with a schema `version`. Unknown keys are
//! rejected at parse time and every numeric field is range-checked by
//! [`ScenarioConfig::validate`] before anything is executed.

use hbd_core::foliation::FoliationKind;
use hbd_core::wavefunction::{EnergyBranch, GaussianComb, Symmetry};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Io(String),
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub spacetime_dim: usize,
    #[serde(default)]
    pub seed: u64,
    pub particles: ParticlesConfig,
    pub wavefunction: WaveConfig,
    pub foliation: FoliationConfig,
    pub numerics: NumericsConfig,
    pub experiments: Vec<ExperimentConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesConfig {
    pub masses: Vec<f64>,
    /// Number of subsystem particles `N1`; the rest form the environment.
    #[serde(default = "one")]
    pub subsystem: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    #[serde(default = "no_symmetry")]
    pub symmetry: Symmetry,
    /// Rescale to unit norm on the reference leaf after construction.
    #[serde(default = "yes")]
    pub normalize: bool,
    pub terms: Vec<TermConfig>,
}

fn no_symmetry() -> Symmetry {
    Symmetry::None
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    #[serde(default = "unit")]
    pub coefficient: [f64; 2],
    /// One factor per particle.
    pub factors: Vec<FactorConfig>,
}

fn unit() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FactorConfig {
    Comb(GaussianComb),
    Modes(ModeListConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeListConfig {
    pub mass: f64,
    pub modes: Vec<ModeConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    #[serde(default = "unit")]
    pub coefficient: [f64; 2],
    /// Spatial momentum components.
    pub momentum: Vec<f64>,
    /// Seed spinor as `[re, im]` pairs, projected onto the branch.
    pub spinor: Vec<[f64; 2]>,
    #[serde(default = "positive")]
    pub branch: EnergyBranch,
}

fn positive() -> EnergyBranch {
    EnergyBranch::Positive
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoliationConfig {
    pub shape: FoliationKind,
    pub slab: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    /// Chart box per spatial axis, shared by all particles.
    #[serde(rename = "box")]
    pub box_: Vec<[f64; 2]>,
    /// Quadrature nodes per chart axis.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Reference leaf for normalization and default experiment leaf.
    #[serde(default)]
    pub leaf: f64,
    /// Leaf-label step of the integrator.
    #[serde(default = "default_ds")]
    pub ds: f64,
}

fn default_nodes() -> usize {
    64
}

fn default_ds() -> f64 {
    0.01
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Default output directory when `--out` is not given.
    pub dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Trajectories(TrajectoriesConfig),
    Equivariance(EquivarianceExpConfig),
    WcondReport(WcondConfig),
    PurityScan(PurityScanConfig),
    EffectiveWave(EffectiveWaveConfig),
    SurfaceIndependence(SurfaceConfig),
    LorentzRoundtrip(LorentzConfig),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Trajectories(_) => "trajectories",
            ExperimentConfig::Equivariance(_) => "equivariance",
            ExperimentConfig::WcondReport(_) => "wcond-report",
            ExperimentConfig::PurityScan(_) => "purity-scan",
            ExperimentConfig::EffectiveWave(_) => "effective-wave",
            ExperimentConfig::SurfaceIndependence(_) => "surface-independence",
            ExperimentConfig::LorentzRoundtrip(_) => "lorentz-roundtrip",
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            ExperimentConfig::Trajectories(c) => c.name.as_deref(),
            ExperimentConfig::Equivariance(c) => c.name.as_deref(),
            ExperimentConfig::WcondReport(c) => c.name.as_deref(),
            ExperimentConfig::PurityScan(c) => c.name.as_deref(),
            ExperimentConfig::EffectiveWave(c) => c.name.as_deref(),
            ExperimentConfig::SurfaceIndependence(c) => c.name.as_deref(),
            ExperimentConfig::LorentzRoundtrip(c) => c.name.as_deref(),
        }
    }
}

/// Start configurations: explicit charts or `sample` draws from `ρ`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartsConfig {
    /// `starts[i][k]` is the chart of particle `k` in start `i`.
    #[serde(default)]
    pub charts: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sample: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoriesConfig {
    pub name: Option<String>,
    pub s0: Option<f64>,
    pub s_end: f64,
    pub starts: StartsConfig,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivarianceExpConfig {
    pub name: Option<String>,
    pub s0: Option<f64>,
    pub s1: f64,
    pub samples: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_sub")]
    pub quad_sub: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_bins() -> usize {
    20
}

fn default_sub() -> usize {
    8
}

fn default_repeats() -> usize {
    3
}

fn default_alpha() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WcondConfig {
    pub name: Option<String>,
    pub s: Option<f64>,
    /// Environment charts, one per environment particle.
    pub q2: Vec<Vec<f64>>,
    /// Random subsystem points for the guidance check.
    #[serde(default = "default_guidance_points")]
    pub guidance_points: usize,
    /// Leading eigenvalues reported.
    #[serde(default = "default_leading")]
    pub leading: usize,
}

fn default_guidance_points() -> usize {
    20
}

fn default_leading() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurityScanConfig {
    pub name: Option<String>,
    pub s: Option<f64>,
    /// Environment charts at the two ends of the scanned segment.
    pub from: Vec<Vec<f64>>,
    pub to: Vec<Vec<f64>>,
    pub points: usize,
    /// Also evaluate purity after boosting every environment slot to rest.
    #[serde(default = "yes")]
    pub lorentz_check: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveWaveConfig {
    pub name: Option<String>,
    pub s: Option<f64>,
    pub q2: Vec<Vec<f64>>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_eps")]
    pub eps_rank: f64,
    #[serde(default = "default_eps")]
    pub eps_supp: f64,
    /// Term whose subsystem factors are the expected effective wave.
    pub reference_term: Option<usize>,
    /// Whether a wave is expected; feeds the pass verdict.
    pub expect_present: Option<bool>,
}

fn default_radius() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafConfig {
    pub shape: FoliationKind,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub name: Option<String>,
    pub leaves: Vec<LeafConfig>,
    /// Second state; defaults to the scenario state.
    pub partner: Option<Vec<TermConfig>>,
    #[serde(default = "default_surface_tol")]
    pub tolerance: f64,
}

fn default_surface_tol() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzConfig {
    pub name: Option<String>,
    pub s0: Option<f64>,
    pub s_end: f64,
    pub rapidity: f64,
    #[serde(default = "default_axis")]
    pub axis: usize,
    pub starts: StartsConfig,
    #[serde(default = "default_lorentz_tol")]
    pub tolerance: f64,
}

fn default_axis() -> usize {
    1
}

fn default_lorentz_tol() -> f64 {
    1e-6
}

/// Parses TOML text; errors carry line and column from the parser.
pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

fn finite(field: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("{x} is not finite")))
    }
}

fn within(field: &str, x: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
    finite(field, x)?;
    if x < lo || x > hi {
        return Err(ConfigError::invalid(field, format!("{x} outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn count(field: &str, n: usize, lo: usize, hi: usize) -> Result<(), ConfigError> {
    if n < lo || n > hi {
        return Err(ConfigError::invalid(field, format!("{n} outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn leaf_in(field: &str, s: f64, slab: [f64; 2]) -> Result<(), ConfigError> {
    within(field, s, slab[0], slab[1])
}

fn check_shape(field: &str, shape: &FoliationKind) -> Result<(), ConfigError> {
    match *shape {
        FoliationKind::Flat => Ok(()),
        FoliationKind::Boosted { rapidity } => within(&format!("{field}.rapidity"), rapidity, -5.0, 5.0),
        FoliationKind::Tanh { amplitude, scale } => {
            within(&format!("{field}.amplitude"), amplitude, -100.0, 100.0)?;
            within(&format!("{field}.scale"), scale, 1e-6, 1e6)?;
            if amplitude.abs() >= scale {
                return Err(ConfigError::invalid(field, "|amplitude| must be below scale for spacelike leaves"));
            }
            Ok(())
        }
    }
}

impl ScenarioConfig {
    pub fn n_particles(&self) -> usize {
        self.particles.masses.len()
    }

    pub fn n_env(&self) -> usize {
        self.n_particles() - self.particles.subsystem
    }

    /// Range and shape checks that do not need any numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != SCHEMA_VERSION {
            return Err(ConfigError::invalid("version", format!("unsupported schema version {}", self.version)));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(ConfigError::invalid("name", "must be non-empty [A-Za-z0-9_-]"));
        }
        let d = self.spacetime_dim;
        if d != 2 && d != 4 {
            return Err(ConfigError::invalid("spacetime_dim", format!("{d} is not 2 or 4")));
        }
        let n = self.n_particles();
        count("particles.masses", n, 1, 4)?;
        for (i, m) in self.particles.masses.iter().enumerate() {
            within(&format!("particles.masses[{i}]"), *m, 1e-6, 1e6)?;
        }
        count("particles.subsystem", self.particles.subsystem, 0, n)?;
        self.validate_terms("wavefunction.terms", &self.wavefunction.terms)?;
        if self.wavefunction.symmetry != Symmetry::None
            && self.particles.masses.iter().any(|m| *m != self.particles.masses[0])
        {
            return Err(ConfigError::invalid("wavefunction.symmetry", "requires equal masses"));
        }
        check_shape("foliation.shape", &self.foliation.shape)?;
        let slab = self.foliation.slab;
        finite("foliation.slab[0]", slab[0])?;
        finite("foliation.slab[1]", slab[1])?;
        if !(slab[0] < slab[1]) {
            return Err(ConfigError::invalid("foliation.slab", "must be increasing"));
        }
        let nu = &self.numerics;
        count("numerics.box", nu.box_.len(), d - 1, d - 1)?;
        for (i, [lo, hi]) in nu.box_.iter().enumerate() {
            within(&format!("numerics.box[{i}][0]"), *lo, -1e4, 1e4)?;
            within(&format!("numerics.box[{i}][1]"), *hi, -1e4, 1e4)?;
            if !(lo < hi) {
                return Err(ConfigError::invalid(format!("numerics.box[{i}]"), "must be increasing"));
            }
        }
        count("numerics.nodes", nu.nodes, 2, 4096)?;
        leaf_in("numerics.leaf", nu.leaf, slab)?;
        within("numerics.ds", nu.ds, 1e-6, 1.0)?;
        count("experiments", self.experiments.len(), 1, 64)?;
        let mut names: Vec<String> = Vec::new();
        for (i, e) in self.experiments.iter().enumerate() {
            let field = format!("experiments[{i}]");
            self.validate_experiment(&field, e)?;
            let name = experiment_name(i, e);
            if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(ConfigError::invalid(format!("{field}.name"), "must be [A-Za-z0-9_-]"));
            }
            if names.contains(&name) {
                return Err(ConfigError::invalid(format!("{field}.name"), format!("duplicate name {name}")));
            }
            names.push(name);
        }
        Ok(())
    }

    fn validate_terms(&self, field: &str, terms: &[TermConfig]) -> Result<(), ConfigError> {
        let n = self.n_particles();
        let d = self.spacetime_dim;
        let spinor = if d == 2 { 2 } else { 4 };
        count(field, terms.len(), 1, 64)?;
        for (t, term) in terms.iter().enumerate() {
            let tf = format!("{field}[{t}]");
            finite(&format!("{tf}.coefficient"), term.coefficient[0])?;
            finite(&format!("{tf}.coefficient"), term.coefficient[1])?;
            count(&format!("{tf}.factors"), term.factors.len(), n, n)?;
            for (k, f) in term.factors.iter().enumerate() {
                let ff = format!("{tf}.factors[{k}]");
                let mass = match f {
                    FactorConfig::Comb(c) => {
                        within(&format!("{ff}.width"), c.width, 1e-3, 1e3)?;
                        within(&format!("{ff}.period"), c.period, 1e-3, 1e4)?;
                        within(&format!("{ff}.center"), c.center, -1e4, 1e4)?;
                        within(&format!("{ff}.mean_wavenumber"), c.mean_wavenumber, -1e3, 1e3)?;
                        within(&format!("{ff}.cutoff"), c.cutoff, 1e-16, 0.5)?;
                        within(&format!("{ff}.rapidity"), c.rapidity, -5.0, 5.0)?;
                        count(&format!("{ff}.seed"), c.seed.len(), spinor, spinor)?;
                        if c.transverse.len() > d - 2 {
                            return Err(ConfigError::invalid(format!("{ff}.transverse"), "too many components"));
                        }
                        let modes = c.period / c.width * (-c.cutoff.ln()).sqrt() / std::f64::consts::PI;
                        if modes > 5000.0 {
                            return Err(ConfigError::invalid(ff, format!("comb would have ~{modes:.0} modes")));
                        }
                        c.mass
                    }
                    FactorConfig::Modes(m) => {
                        count(&format!("{ff}.modes"), m.modes.len(), 1, 5000)?;
                        for (j, mode) in m.modes.iter().enumerate() {
                            let mf = format!("{ff}.modes[{j}]");
                            count(&format!("{mf}.momentum"), mode.momentum.len(), d - 1, d - 1)?;
                            count(&format!("{mf}.spinor"), mode.spinor.len(), spinor, spinor)?;
                            for p in &mode.momentum {
                                within(&format!("{mf}.momentum"), *p, -1e3, 1e3)?;
                            }
                        }
                        m.mass
                    }
                };
                if mass != self.particles.masses[k] {
                    return Err(ConfigError::invalid(
                        format!("{ff}.mass"),
                        format!("{mass} differs from particles.masses[{k}]"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_env_charts(&self, field: &str, q2: &[Vec<f64>]) -> Result<(), ConfigError> {
        count(field, q2.len(), self.n_env(), self.n_env())?;
        for (j, c) in q2.iter().enumerate() {
            count(&format!("{field}[{j}]"), c.len(), self.spacetime_dim - 1, self.spacetime_dim - 1)?;
            for (a, x) in c.iter().enumerate() {
                let [lo, hi] = self.numerics.box_[a];
                within(&format!("{field}[{j}][{a}]"), *x, lo, hi)?;
            }
        }
        Ok(())
    }

    fn check_starts(&self, field: &str, st: &StartsConfig) -> Result<(), ConfigError> {
        count(&format!("{field}.sample"), st.sample, 0, 100_000)?;
        if st.charts.is_empty() && st.sample == 0 {
            return Err(ConfigError::invalid(field, "needs explicit charts or sample > 0"));
        }
        count(&format!("{field}.charts"), st.charts.len(), 0, 100_000)?;
        for (i, q) in st.charts.iter().enumerate() {
            count(&format!("{field}.charts[{i}]"), q.len(), self.n_particles(), self.n_particles())?;
            for (k, c) in q.iter().enumerate() {
                count(&format!("{field}.charts[{i}][{k}]"), c.len(), self.spacetime_dim - 1, self.spacetime_dim - 1)?;
                for x in c {
                    within(&format!("{field}.charts[{i}][{k}]"), *x, -1e4, 1e4)?;
                }
            }
        }
        Ok(())
    }

    fn needs_split(&self, field: &str) -> Result<(), ConfigError> {
        if self.particles.subsystem == 0 || self.n_env() == 0 {
            return Err(ConfigError::invalid(field, "needs 0 < particles.subsystem < number of particles"));
        }
        let nodes = self.numerics.nodes.pow(((self.spacetime_dim - 1) * self.particles.subsystem) as u32);
        if nodes > 4096 {
            return Err(ConfigError::invalid(field, format!("subsystem grid of {nodes} nodes is too large")));
        }
        Ok(())
    }

    fn validate_experiment(&self, field: &str, e: &ExperimentConfig) -> Result<(), ConfigError> {
        let slab = self.foliation.slab;
        let leaf = |f: &str, s: Option<f64>| leaf_in(&format!("{field}.{f}"), s.unwrap_or(self.numerics.leaf), slab);
        match e {
            ExperimentConfig::Trajectories(c) => {
                leaf("s0", c.s0)?;
                leaf("s_end", Some(c.s_end))?;
                if c.s_end < c.s0.unwrap_or(self.numerics.leaf) {
                    return Err(ConfigError::invalid(format!("{field}.s_end"), "must not precede s0"));
                }
                count(&format!("{field}.record_stride"), c.record_stride, 1, 1_000_000)?;
                self.check_starts(&format!("{field}.starts"), &c.starts)?;
            }
            ExperimentConfig::Equivariance(c) => {
                leaf("s0", c.s0)?;
                leaf("s1", Some(c.s1))?;
                if c.s1 < c.s0.unwrap_or(self.numerics.leaf) {
                    return Err(ConfigError::invalid(format!("{field}.s1"), "must not precede s0"));
                }
                count(&format!("{field}.samples"), c.samples, 100, 100_000)?;
                count(&format!("{field}.bins"), c.bins, 2, 1000)?;
                count(&format!("{field}.quad_sub"), c.quad_sub, 1, 64)?;
                count(&format!("{field}.repeats"), c.repeats, 1, 15)?;
                within(&format!("{field}.alpha"), c.alpha, 1e-6, 0.5)?;
                if self.spacetime_dim != 2 {
                    return Err(ConfigError::invalid(field, "marginal histograms need spacetime_dim = 2"));
                }
                let per = c.bins * c.quad_sub;
                if (per as f64).powi(self.n_particles() as i32) > 2e7 {
                    return Err(ConfigError::invalid(field, "bins × quad_sub too fine for this particle count"));
                }
            }
            ExperimentConfig::WcondReport(c) => {
                self.needs_split(field)?;
                leaf("s", c.s)?;
                self.check_env_charts(&format!("{field}.q2"), &c.q2)?;
                count(&format!("{field}.guidance_points"), c.guidance_points, 0, 10_000)?;
                count(&format!("{field}.leading"), c.leading, 1, 100)?;
            }
            ExperimentConfig::PurityScan(c) => {
                self.needs_split(field)?;
                leaf("s", c.s)?;
                self.check_env_charts(&format!("{field}.from"), &c.from)?;
                self.check_env_charts(&format!("{field}.to"), &c.to)?;
                count(&format!("{field}.points"), c.points, 1, 1000)?;
            }
            ExperimentConfig::EffectiveWave(c) => {
                self.needs_split(field)?;
                leaf("s", c.s)?;
                self.check_env_charts(&format!("{field}.q2"), &c.q2)?;
                within(&format!("{field}.radius"), c.radius, 0.0, 1e4)?;
                within(&format!("{field}.eps_rank"), c.eps_rank, 1e-15, 1.0)?;
                within(&format!("{field}.eps_supp"), c.eps_supp, 1e-15, 1.0)?;
                if let Some(t) = c.reference_term {
                    count(&format!("{field}.reference_term"), t, 0, self.wavefunction.terms.len() - 1)?;
                }
                if self.n_env() > 2 {
                    return Err(ConfigError::invalid(field, "at most 2 environment particles"));
                }
            }
            ExperimentConfig::SurfaceIndependence(c) => {
                count(&format!("{field}.leaves"), c.leaves.len(), 2, 16)?;
                for (i, l) in c.leaves.iter().enumerate() {
                    check_shape(&format!("{field}.leaves[{i}].shape"), &l.shape)?;
                    within(&format!("{field}.leaves[{i}].s"), l.s, -1e4, 1e4)?;
                }
                if let Some(p) = &c.partner {
                    self.validate_terms(&format!("{field}.partner"), p)?;
                }
                within(&format!("{field}.tolerance"), c.tolerance, 0.0, 1.0)?;
            }
            ExperimentConfig::LorentzRoundtrip(c) => {
                leaf("s0", c.s0)?;
                leaf("s_end", Some(c.s_end))?;
                if c.s_end < c.s0.unwrap_or(self.numerics.leaf) {
                    return Err(ConfigError::invalid(format!("{field}.s_end"), "must not precede s0"));
                }
                within(&format!("{field}.rapidity"), c.rapidity, -3.0, 3.0)?;
                count(&format!("{field}.axis"), c.axis, 1, self.spacetime_dim - 1)?;
                within(&format!("{field}.tolerance"), c.tolerance, 0.0, 1.0)?;
                self.check_starts(&format!("{field}.starts"), &c.starts)?;
            }
        }
        Ok(())
    }
}

/// File-name stem of experiment `i`.
pub fn experiment_name(i: usize, e: &ExperimentConfig) -> String {
    match e.name() {
        Some(n) => n.to_string(),
        None => format!("{:02}-{}", i, e.kind()),
    }
}
