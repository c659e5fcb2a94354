//! Experiment configuration: parsing, overrides and validation.
//!
//! Everything here runs before any eigenvalue is computed. A config that
//! makes it through [`ExperimentConfig::load`] and [`Resolved::build`] only
//! fails later for mathematical or numerical reasons.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use conflap::extremal::{CertifyOptions, OptimizerOptions};
use conflap::functional::SamplerSpec;
use conflap::geometry::{
    build_sphere3_class, build_synthetic_class, build_torus_class, normalize_factor, ConformalFactor, DiscreteConformalClass,
    FieldSpec,
};
use conflap::perturbation::{zero_mean_generator, DeformationDirection, DEFAULT_STEPS};
use conflap::spectral::SolverOptions;

/// Environment variables that override tolerances, applied after the file
/// and before validation.
pub const ENV_OVERRIDES: [&str; 5] =
    ["CONFLAP_SOLVER_TOL", "CONFLAP_CLUSTER_TOL", "CONFLAP_CERT_TOL", "CONFLAP_SIGN_TOL", "CONFLAP_OPT_TOL"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Spectrum,
    Eval,
    Derivative,
    Certify,
    Maximize,
    Optimize,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Torus {
        grid: [usize; 3],
        /// Defaults to 2π on every axis.
        #[serde(default = "default_edges")]
        edges: [f64; 3],
    },
    Sphere3 {
        degree_cutoff: usize,
    },
    Synthetic {
        dim: usize,
        dv: Vec<f64>,
        /// `[row, column, value]` entries of a weighted graph Laplacian.
        stiffness: Vec<(usize, usize, f64)>,
    },
}

fn default_edges() -> [f64; 3] {
    [std::f64::consts::TAU; 3]
}

/// A node field: a constant, an expression in `x1..xd`, or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldInput {
    Constant(f64),
    Expression(String),
    Values(Vec<f64>),
}

impl FieldInput {
    fn sample(&self, class: &DiscreteConformalClass) -> Result<Vec<f64>> {
        match self {
            FieldInput::Constant(c) => Ok(vec![*c; class.num_nodes()]),
            FieldInput::Expression(src) => Ok(class.sample_field(&FieldSpec::parse(src)?)?),
            FieldInput::Values(v) => {
                if v.len() != class.num_nodes() {
                    bail!("field has {} values but the class has {} nodes", v.len(), class.num_nodes());
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorConfig {
    Field { field: FieldInput },
    /// Sample `index` of the sampler under the run seed.
    Sample { index: u64 },
    /// The closed-form maximizer of the class.
    Maximizer,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig::Field { field: FieldInput::Constant(1.0) }
    }
}

/// Deformation direction for derivative tasks and `t` sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionConfig {
    /// `h` given directly.
    Field { field: FieldInput },
    /// `h = w₀ μ̃²` with `w₀` the zero-mean part of `field`.
    ZeroMean { field: FieldInput },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepConfig {
    /// `μ = c·μ_base` for each value `c`.
    Scale { values: Vec<f64> },
    /// Sample 0 of the sampler under each seed in `from..=to`.
    Seed { from: u64, to: u64 },
    /// `μ_t = μ̃(1 + t·h)` around the normalized base factor.
    T { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub solver: SolverOptions,
    pub certify: CertifyOptions,
    pub optimizer: OptimizerOptions,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), certify: CertifyOptions::default(), optimizer: OptimizerOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Report file name inside the output directory.
    pub report: String,
    /// Sweep table file name inside the output directory.
    pub table: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { report: "report.json".into(), table: "sweep.csv".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub backend: BackendConfig,
    pub curvature: FieldInput,
    #[serde(default)]
    pub factor: FactorConfig,
    #[serde(default)]
    pub sampler: SamplerSpec,
    pub task: Task,
    #[serde(default = "one")]
    pub k: usize,
    /// Eigenpairs reported by `spectrum`; defaults to `k`.
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub direction: Option<DirectionConfig>,
    /// Also run the finite-difference oracle in `derivative`.
    #[serde(default)]
    pub finite_differences: bool,
    #[serde(default = "default_steps")]
    pub fd_steps: Vec<f64>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> usize {
    1
}

fn default_steps() -> Vec<f64> {
    DEFAULT_STEPS.to_vec()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies `CONFLAP_*` tolerance overrides from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for key in ENV_OVERRIDES {
            let Some(raw) = lookup(key) else { continue };
            let value: f64 = raw.trim().parse().with_context(|| format!("{key}={raw} is not a number"))?;
            let t = &mut self.tolerances;
            match key {
                "CONFLAP_SOLVER_TOL" => t.solver.solver_tol = value,
                "CONFLAP_CLUSTER_TOL" => t.solver.cluster_tol = value,
                "CONFLAP_CERT_TOL" => t.certify.cert_tol = value,
                "CONFLAP_SIGN_TOL" => t.certify.sign_tol = value,
                _ => t.optimizer.opt_tol = value,
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if self.k_max.is_some_and(|m| m < self.k) {
            bail!("k_max must be at least k");
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("solver_tol", t.solver.solver_tol),
            ("cluster_tol", t.solver.cluster_tol),
            ("cert_tol", t.certify.cert_tol),
            ("sign_tol", t.certify.sign_tol),
            ("opt_tol", t.optimizer.opt_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if self.fd_steps.is_empty() || self.fd_steps.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            bail!("fd_steps must be a non-empty list of positive steps");
        }
        let needs_direction = self.task == Task::Derivative || matches!(self.sweep, Some(SweepConfig::T { .. }));
        if needs_direction && self.direction.is_none() {
            bail!("this task needs a direction");
        }
        match (&self.sweep, self.task) {
            (None, Task::Sweep) => bail!("task sweep needs a sweep section"),
            (Some(_), t) if t != Task::Sweep => bail!("a sweep section is only valid with task sweep"),
            (Some(SweepConfig::Seed { from, to }), _) if from > to => bail!("sweep seed range is empty"),
            (Some(SweepConfig::Scale { values } | SweepConfig::T { values }), _) if values.is_empty() => {
                bail!("sweep values are empty")
            }
            (Some(SweepConfig::Scale { values }), _) if values.iter().any(|c| !(*c > 0.0)) => {
                bail!("scale sweep values must be positive")
            }
            _ => {}
        }
        for name in [&self.output.report, &self.output.table] {
            if name.is_empty() || Path::new(name).components().count() != 1 {
                bail!("output file name {name:?} must be a plain file name");
            }
        }
        Ok(())
    }

    pub fn build_class(&self) -> Result<DiscreteConformalClass> {
        let class = match &self.backend {
            BackendConfig::Torus { grid, edges } => {
                let curvature = match &self.curvature {
                    FieldInput::Constant(c) => FieldSpec::Constant(*c),
                    FieldInput::Expression(src) => FieldSpec::parse(src)?,
                    FieldInput::Values(_) => FieldSpec::Constant(0.0),
                };
                build_torus_class(*grid, *edges, &curvature)?
            }
            BackendConfig::Sphere3 { degree_cutoff } => build_sphere3_class(*degree_cutoff)?,
            BackendConfig::Synthetic { dim, dv, stiffness } => {
                let n = dv.len();
                let r = match &self.curvature {
                    FieldInput::Constant(c) => vec![*c; n],
                    FieldInput::Values(v) => v.clone(),
                    FieldInput::Expression(_) => bail!("synthetic nodes have no coordinates; give curvature as values"),
                };
                build_synthetic_class(*dim, dv.clone(), stiffness, r)?
            }
        };
        match (&self.backend, &self.curvature) {
            (BackendConfig::Torus { .. }, FieldInput::Values(v)) => Ok(class.with_curvature(v.clone())?),
            (BackendConfig::Sphere3 { .. }, c) if *c != FieldInput::Constant(6.0) => {
                let r = c.sample(&class)?;
                Ok(class.with_curvature(r)?)
            }
            _ => Ok(class),
        }
    }
}

/// A validated config together with the objects it describes.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub class: DiscreteConformalClass,
}

impl Resolved {
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let class = config.build_class()?;
        // Field inputs are cheap to check here; sampled and maximizer
        // factors are positive by construction.
        if let FactorConfig::Field { field } = &config.factor {
            ConformalFactor::new(field.sample(&class)?).context("factor")?;
        }
        if let Some(DirectionConfig::Field { field } | DirectionConfig::ZeroMean { field }) = &config.direction {
            let h = field.sample(&class).context("direction")?;
            if h.iter().any(|v| !v.is_finite()) {
                bail!("direction has non-finite values");
            }
        }
        Ok(Self { config, class })
    }

    /// The configured factor, as given (not normalized).
    pub fn factor(&self) -> conflap::Result<ConformalFactor> {
        let cfg = &self.config;
        match &cfg.factor {
            FactorConfig::Field { field } => {
                let values = field.sample(&self.class).map_err(|e| conflap::Error::Construction(e.to_string()))?;
                ConformalFactor::new(values)
            }
            FactorConfig::Sample { index } => {
                conflap::functional::Sampler::new(&self.class, &cfg.sampler)?.sample(cfg.seed, *index)
            }
            FactorConfig::Maximizer => Ok(conflap::extremal::construct_maximizer(
                &self.class,
                cfg.tolerances.optimizer.r_floor,
                &cfg.tolerances.solver,
            )?
            .mu_max),
        }
    }

    pub fn normalized_factor(&self) -> conflap::Result<ConformalFactor> {
        normalize_factor(&self.class, &self.factor()?)
    }

    pub fn direction(&self, mu_tilde: &ConformalFactor) -> conflap::Result<DeformationDirection> {
        let to_err = |e: anyhow::Error| conflap::Error::Construction(e.to_string());
        match self.config.direction.as_ref() {
            None => Err(conflap::Error::Construction("no direction configured".into())),
            Some(DirectionConfig::Field { field }) => DeformationDirection::new(field.sample(&self.class).map_err(to_err)?),
            Some(DirectionConfig::ZeroMean { field }) => {
                zero_mean_generator(&self.class, mu_tilde, &field.sample(&self.class).map_err(to_err)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"backend": {"kind": "torus", "grid": [4, 4, 4]}, "curvature": 6, "task": "eval"}"#
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(minimal()).unwrap();
        assert_eq!(cfg.k, 1);
        assert_eq!(cfg.factor, FactorConfig::Field { field: FieldInput::Constant(1.0) });
        assert_eq!(cfg.tolerances.solver.solver_tol, 1e-9);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = minimal().replace("\"task\"", "\"colour\": 1, \"task\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&text).is_err());
        let text = minimal().replace("\"grid\"", "\"cells\": 2, \"grid\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&text).is_err());
        let text = minimal().replace("\"task\"", "\"tolerances\": {\"solver\": {\"tol\": 1}}, \"task\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn env_overrides_tolerances() {
        let mut cfg: ExperimentConfig = serde_json::from_str(minimal()).unwrap();
        cfg.apply_env(|k| (k == "CONFLAP_CERT_TOL").then(|| "1e-6".to_string())).unwrap();
        assert_eq!(cfg.tolerances.certify.cert_tol, 1e-6);
        assert!(cfg.apply_env(|k| (k == "CONFLAP_OPT_TOL").then(|| "abc".to_string())).is_err());
    }

    #[test]
    fn validation_catches_inconsistencies() {
        let mut cfg: ExperimentConfig = serde_json::from_str(minimal()).unwrap();
        cfg.task = Task::Derivative;
        assert!(cfg.validate().is_err());
        cfg.task = Task::Sweep;
        assert!(cfg.validate().is_err());
        cfg.sweep = Some(SweepConfig::Scale { values: vec![1.0, -2.0] });
        assert!(cfg.validate().is_err());
        cfg.sweep = Some(SweepConfig::Scale { values: vec![1.0, 2.0] });
        cfg.validate().unwrap();
        cfg.output.report = "../escape.json".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn curvature_forms() {
        let text = r#"{"backend": {"kind": "synthetic", "dim": 3, "dv": [1, 1, 1, 1],
            "stiffness": [[0,1,-1],[1,0,-1],[0,0,1],[1,1,1],[2,3,-1],[3,2,-1],[2,2,1],[3,3,1],[1,2,-1],[2,1,-1],[1,1,1],[2,2,1]]},
            "curvature": [1, 2, 3, 4], "task": "spectrum"}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        let class = cfg.build_class().unwrap();
        assert_eq!(class.curvature(), &[1.0, 2.0, 3.0, 4.0]);

        let cfg: ExperimentConfig =
            serde_json::from_str(&minimal().replace("\"curvature\": 6", "\"curvature\": \"6 + sin(x1)\"")).unwrap();
        let class = cfg.build_class().unwrap();
        assert!(class.curvature().iter().any(|&r| r != 6.0));
    }
}
