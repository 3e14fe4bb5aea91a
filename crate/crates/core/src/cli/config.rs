//! JSON experiment configs. Every block rejects unknown keys; omitted keys take
//! the defaults listed on each struct.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lmgeom::DampedGeometryConfig;
use crate::oracle::{GaussianMixtureOracle, DENSE_DIM_CAP};
use crate::samplers::{AnnealedConfig, FixedLevelVariant, Precision, SamplerConfig};
use crate::schedule::NoiseSchedule;

/// Implemented by every command config.
pub trait CommandConfig: Serialize + DeserializeOwned + Default + Sync {
    fn seed(&self) -> u64;
    fn set_seed(&mut self, seed: u64);
    /// Rejects any config that cannot run, before computation starts.
    fn validate(&self) -> Result<()>;
    /// Loads files referenced by the config, relative to `base`.
    fn resolve(&mut self, _base: &Path) -> Result<()> {
        Ok(())
    }
}

/// Parses, resolves, overrides the seed and validates.
pub fn load_config<C: CommandConfig>(path: Option<&Path>, seed: Option<u64>) -> Result<C> {
    let mut cfg: C = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))?;
            let mut c: C = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))?;
            c.resolve(p.parent().unwrap_or_else(|| Path::new(".")))?;
            c
        }
        None => C::default(),
    };
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    cfg.validate().map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::config(other.to_string()),
    })?;
    Ok(cfg)
}

/// SHA-256 of the config re-serialised with sorted keys and all defaults filled.
pub fn config_hash<C: Serialize>(cfg: &C) -> Result<String> {
    let value = serde_json::to_value(cfg)?;
    let canonical = serde_json::to_string(&value)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Data points `y_i`; ignored when `centers_csv` is given.
    #[serde(default)]
    pub centers: Vec<Vec<f64>>,
    /// CSV file with one center per row, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers_csv: Option<PathBuf>,
    /// Mixture weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl OracleSpec {
    pub fn points(centers: Vec<Vec<f64>>) -> Self {
        Self {
            centers,
            centers_csv: None,
            weights: None,
        }
    }

    fn resolve(&mut self, base: &Path) -> Result<()> {
        if let Some(p) = &self.centers_csv {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
            self.centers = parse_centers_csv(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    pub fn build(&self, schedule: NoiseSchedule) -> Result<GaussianMixtureOracle> {
        match &self.weights {
            Some(w) => GaussianMixtureOracle::new(self.centers.clone(), w.clone(), schedule),
            None => GaussianMixtureOracle::uniform(self.centers.clone(), schedule),
        }
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, |c| c.len())
    }
}

/// Rows of comma-separated numbers; blank lines and `#` comments are skipped.
pub fn parse_centers_csv(text: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| format!("line {}: {e}", n + 1))?);
    }
    if rows.is_empty() {
        return Err("no centers".into());
    }
    Ok(rows)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::config(msg)
}

fn check_oracle(oracle: &OracleSpec, schedule: NoiseSchedule) -> Result<GaussianMixtureOracle> {
    oracle.build(schedule).map_err(|e| bad(format!("oracle: {e}")))
}

fn check_one_dim(oracle: &OracleSpec) -> Result<()> {
    if oracle.dim() != 1 {
        return Err(bad(format!(
            "this command runs one-dimensional targets only, oracle has d = {}",
            oracle.dim()
        )));
    }
    Ok(())
}

fn check_time(schedule: &NoiseSchedule, t: f64) -> Result<()> {
    if !(t > schedule.t_min && t <= schedule.t_max) {
        return Err(bad(format!(
            "t = {t} must lie in ({}, {}]",
            schedule.t_min, schedule.t_max
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(bad(format!("`{name}` must be positive and finite")));
    }
    Ok(())
}

fn check_count(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(bad(format!("`{name}` must be at least 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lml,
    Baseline,
    Annealed,
}

/// Sampler block shared by `sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerBlock {
    pub method: Method,
    /// Number of timesteps `N`.
    pub steps: usize,
    pub order: u8,
    pub lambda: f64,
    pub kappa: f64,
    pub chains: usize,
    pub seed: u64,
    pub eps_clip: f64,
    pub precision: Precision,
    /// Annealed Langevin only.
    pub inner_steps: usize,
    pub step_scale: Option<f64>,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        let g = DampedGeometryConfig::default();
        Self {
            method: Method::Lml,
            steps: 10,
            order: 2,
            lambda: g.lambda,
            kappa: g.kappa,
            chains: 1,
            seed: 0,
            eps_clip: 1e-3,
            precision: Precision::F64,
            inner_steps: 1,
            step_scale: None,
        }
    }
}

impl SamplerBlock {
    pub fn sampler_config(&self, schedule: NoiseSchedule) -> Result<SamplerConfig> {
        let geometry = match self.method {
            Method::Lml => Some(DampedGeometryConfig::new(self.lambda, self.kappa)?),
            _ => None,
        };
        let c = SamplerConfig {
            schedule,
            steps: self.steps,
            order: self.order,
            geometry,
            eps_clip: self.eps_clip,
            seed: self.seed,
            chains: self.chains,
            precision: self.precision,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn annealed(&self) -> Result<AnnealedConfig> {
        check_count("inner_steps", self.inner_steps)?;
        if let Some(s) = self.step_scale {
            check_positive("step_scale", s)?;
        }
        Ok(AnnealedConfig {
            inner_steps: self.inner_steps,
            step_scale: self.step_scale,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundTruthBlock {
    /// Reference draws from the diffused target at the final grid time; 0 skips.
    pub samples: usize,
    pub projections: usize,
}

impl Default for GroundTruthBlock {
    fn default() -> Self {
        Self {
            samples: 20_000,
            projections: 64,
        }
    }
}

fn two_point_mixture() -> OracleSpec {
    OracleSpec::points(vec![vec![-1.0, 0.0], vec![1.0, 0.0]])
}

fn unit_gaussian_oracle() -> OracleSpec {
    OracleSpec::points(vec![vec![0.0]])
}

/// Target `N(0, 1)` at `t = 1`.
fn unit_ve() -> NoiseSchedule {
    NoiseSchedule::ve(0.01, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub schedule: NoiseSchedule,
    pub oracle: OracleSpec,
    pub sampler: SamplerBlock,
    pub ground_truth: GroundTruthBlock,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::default(),
            oracle: two_point_mixture(),
            sampler: SamplerBlock::default(),
            ground_truth: GroundTruthBlock::default(),
        }
    }
}

impl CommandConfig for SampleConfig {
    fn seed(&self) -> u64 {
        self.sampler.seed
    }
    fn set_seed(&mut self, seed: u64) {
        self.sampler.seed = seed;
    }
    fn resolve(&mut self, base: &Path) -> Result<()> {
        self.oracle.resolve(base)
    }
    fn validate(&self) -> Result<()> {
        check_oracle(&self.oracle, self.schedule)?;
        self.sampler.sampler_config(self.schedule)?;
        if self.sampler.method == Method::Annealed {
            self.sampler.annealed()?;
        }
        if self.ground_truth.samples > 0 {
            check_count("ground_truth.projections", self.ground_truth.projections)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningGrid {
    pub lambdas: Vec<f64>,
    pub kappas: Vec<f64>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![1e-4, 1e-3, 1e-2],
            kappas: vec![1e-8, 1e-4, 1e-2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub schedule: NoiseSchedule,
    pub oracle: OracleSpec,
    pub nfe: Vec<usize>,
    /// Replicate `r` uses seed `seed + r`.
    pub replicates: usize,
    pub seed: u64,
    pub chains: usize,
    pub eps_clip: f64,
    /// Geometry of the LML-o1 / LML-o2 rows.
    pub lambda: f64,
    pub kappa: f64,
    /// Order of the tuned LML rows and the baseline they are compared with.
    pub tuning_order: u8,
    pub tuning: TuningGrid,
    pub annealed_inner_steps: usize,
    pub annealed_step_scale: Option<f64>,
    pub ground_truth: GroundTruthBlock,
}

impl Default for CompareConfig {
    fn default() -> Self {
        let g = DampedGeometryConfig::default();
        Self {
            schedule: NoiseSchedule::default(),
            oracle: two_point_mixture(),
            nfe: vec![5, 8, 10],
            replicates: 10,
            seed: 0,
            chains: 2000,
            eps_clip: 1e-3,
            lambda: g.lambda,
            kappa: g.kappa,
            tuning_order: 2,
            tuning: TuningGrid::default(),
            annealed_inner_steps: 1,
            annealed_step_scale: None,
            ground_truth: GroundTruthBlock::default(),
        }
    }
}

impl CommandConfig for CompareConfig {
    fn seed(&self) -> u64 {
        self.seed
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn resolve(&mut self, base: &Path) -> Result<()> {
        self.oracle.resolve(base)
    }
    fn validate(&self) -> Result<()> {
        check_oracle(&self.oracle, self.schedule)?;
        if self.nfe.is_empty() || self.nfe.contains(&0) {
            return Err(bad("`nfe` must be a non-empty list of positive step counts"));
        }
        check_count("replicates", self.replicates)?;
        check_count("chains", self.chains)?;
        check_count("ground_truth.samples", self.ground_truth.samples)?;
        check_count("ground_truth.projections", self.ground_truth.projections)?;
        check_count("annealed_inner_steps", self.annealed_inner_steps)?;
        if let Some(n) = self.nfe.iter().find(|&&n| n % self.annealed_inner_steps != 0) {
            return Err(bad(format!(
                "NFE {n} is not a multiple of annealed_inner_steps {}",
                self.annealed_inner_steps
            )));
        }
        if let Some(s) = self.annealed_step_scale {
            check_positive("annealed_step_scale", s)?;
        }
        if !matches!(self.tuning_order, 1 | 2) {
            return Err(bad("`tuning_order` must be 1 or 2"));
        }
        DampedGeometryConfig::new(self.lambda, self.kappa)?;
        if self.tuning.lambdas.is_empty() || self.tuning.kappas.is_empty() {
            return Err(bad("tuning grid must be non-empty"));
        }
        for &l in &self.tuning.lambdas {
            for &k in &self.tuning.kappas {
                DampedGeometryConfig::new(l, k)?;
            }
        }
        let probe = SamplerConfig {
            schedule: self.schedule,
            eps_clip: self.eps_clip,
            ..SamplerConfig::default()
        };
        probe.validate()?;
        for &n in &self.nfe {
            crate::schedule::make_grid(&self.schedule, n, self.eps_clip)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationarityConfig {
    pub schedule: NoiseSchedule,
    pub oracle: OracleSpec,
    /// Fixed noise level of the dynamics.
    pub t: f64,
    pub h: f64,
    pub variant: FixedLevelVariant,
    pub lambdas: Vec<f64>,
    pub burn_in: usize,
    /// Independent chains; each contributes its state after `burn_in` steps.
    pub samples: usize,
    pub seed: u64,
    pub init_mean: f64,
    pub init_std: f64,
    pub bins: usize,
    pub ks_threshold: f64,
}

impl Default for StationarityConfig {
    fn default() -> Self {
        Self {
            schedule: unit_ve(),
            oracle: unit_gaussian_oracle(),
            t: 1.0,
            h: 1e-3,
            variant: FixedLevelVariant::DampedExact,
            lambdas: vec![1.0, 4.0],
            burn_in: 10_000,
            samples: 200_000,
            seed: 0,
            init_mean: 0.0,
            init_std: 0.0,
            bins: 64,
            ks_threshold: 0.02,
        }
    }
}

fn check_variant_lambdas(variant: FixedLevelVariant, lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(bad("`lambdas` must be non-empty"));
    }
    for &l in lambdas {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(bad("every lambda must be finite and non-negative"));
        }
        if variant == FixedLevelVariant::DampedLm && l == 0.0 {
            return Err(bad("damped-lm needs lambda > 0"));
        }
    }
    Ok(())
}

impl CommandConfig for StationarityConfig {
    fn seed(&self) -> u64 {
        self.seed
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn resolve(&mut self, base: &Path) -> Result<()> {
        self.oracle.resolve(base)
    }
    fn validate(&self) -> Result<()> {
        check_oracle(&self.oracle, self.schedule)?;
        check_one_dim(&self.oracle)?;
        check_time(&self.schedule, self.t)?;
        check_positive("h", self.h)?;
        check_variant_lambdas(self.variant, &self.lambdas)?;
        check_count("samples", self.samples)?;
        check_count("bins", self.bins)?;
        check_positive("ks_threshold", self.ks_threshold)?;
        if !(self.init_std >= 0.0 && self.init_mean.is_finite()) {
            return Err(bad("initial distribution must have finite mean and non-negative std"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub schedule: NoiseSchedule,
    pub oracle: OracleSpec,
    pub t: f64,
    pub h: f64,
    pub variant: FixedLevelVariant,
    pub lambdas: Vec<f64>,
    pub chains: usize,
    pub seed: u64,
    pub init_mean: f64,
    pub init_std: f64,
    /// Time horizon; defaults to three e-folds of the reference χ² rate
    /// (single-component targets only).
    pub horizon: Option<f64>,
    /// Number of snapshot times, including `t = 0`.
    pub snapshots: usize,
    /// Histogram bins for mixture targets.
    pub bins: usize,
    /// Batches for the standard error of each χ² value.
    pub batches: usize,
    pub rate_tolerance: f64,
    pub min_r2: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            schedule: unit_ve(),
            oracle: unit_gaussian_oracle(),
            t: 1.0,
            h: 1e-3,
            variant: FixedLevelVariant::DampedExact,
            lambdas: vec![0.0, 1.0, 4.0],
            chains: 100_000,
            seed: 0,
            init_mean: 0.5,
            init_std: 1.0,
            horizon: None,
            snapshots: 31,
            bins: 64,
            batches: 20,
            rate_tolerance: 0.15,
            min_r2: 0.95,
        }
    }
}

impl CommandConfig for ConvergenceConfig {
    fn seed(&self) -> u64 {
        self.seed
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn resolve(&mut self, base: &Path) -> Result<()> {
        self.oracle.resolve(base)
    }
    fn validate(&self) -> Result<()> {
        let oracle = check_oracle(&self.oracle, self.schedule)?;
        check_one_dim(&self.oracle)?;
        check_time(&self.schedule, self.t)?;
        check_positive("h", self.h)?;
        check_variant_lambdas(self.variant, &self.lambdas)?;
        if self.chains < 2 * self.batches.max(1) {
            return Err(bad("`chains` must be at least twice `batches`"));
        }
        if self.snapshots < 3 {
            return Err(bad("`snapshots` must be at least 3"));
        }
        check_count("bins", self.bins)?;
        check_count("batches", self.batches)?;
        check_positive("rate_tolerance", self.rate_tolerance)?;
        if !(self.init_std > 0.0 && self.init_mean.is_finite()) {
            return Err(bad("initial distribution needs a finite mean and positive std"));
        }
        match self.horizon {
            Some(hz) => check_positive("horizon", hz)?,
            None if oracle.components() > 1 => {
                return Err(bad("`horizon` is required for mixture targets"));
            }
            None => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HessianErrorConfig {
    pub schedule: NoiseSchedule,
    /// Fixed mixture; when absent, `gmms` random centred mixtures are drawn.
    pub oracle: Option<OracleSpec>,
    pub gmms: usize,
    pub components: usize,
    pub dim: usize,
    /// Standard deviation of random center coordinates.
    pub spread: f64,
    pub times: Vec<f64>,
    pub points: usize,
    pub seed: u64,
    /// Finite-difference step relative to `σ_t`.
    pub rel_step: f64,
}

impl Default for HessianErrorConfig {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::default(),
            oracle: None,
            gmms: 5,
            components: 4,
            dim: 2,
            spread: 1.0,
            times: vec![0.1, 0.5, 0.9],
            points: 200,
            seed: 0,
            rel_step: 1e-3,
        }
    }
}

impl CommandConfig for HessianErrorConfig {
    fn seed(&self) -> u64 {
        self.seed
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn resolve(&mut self, base: &Path) -> Result<()> {
        match &mut self.oracle {
            Some(o) => o.resolve(base),
            None => Ok(()),
        }
    }
    fn validate(&self) -> Result<()> {
        self.schedule.validate().map_err(|e| bad(e.to_string()))?;
        match &self.oracle {
            Some(o) => {
                let built = check_oracle(o, self.schedule)?;
                built.check_dense()?;
            }
            None => {
                check_count("gmms", self.gmms)?;
                check_count("components", self.components)?;
                check_count("dim", self.dim)?;
                if self.dim > DENSE_DIM_CAP {
                    return Err(bad(format!("`dim` must be at most {DENSE_DIM_CAP}")));
                }
                check_positive("spread", self.spread)?;
            }
        }
        if self.times.is_empty() {
            return Err(bad("`times` must be non-empty"));
        }
        for &t in &self.times {
            check_time(&self.schedule, t)?;
        }
        check_count("points", self.points)?;
        check_positive("rel_step", self.rel_step)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub reps: usize,
    pub max_ratio: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![16384],
            reps: 200,
            max_ratio: 1.05,
        }
    }
}

impl CommandConfig for BenchConfig {
    fn seed(&self) -> u64 {
        0
    }
    fn set_seed(&mut self, _seed: u64) {}
    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(bad("`dims` must be a non-empty list of positive dimensions"));
        }
        check_count("reps", self.reps)?;
        check_positive("max_ratio", self.max_ratio)?;
        Ok(())
    }
}
