//! The normalized eigenvalue functional `F^k(μ) = λ_k(μ)·Σ μ^q dv`.
//!
//! `F^k` is invariant under `μ ↦ cμ`: the eigenvalues scale by `c^{-q}` and
//! the mass by `c^q`. Its supremum over the conformal class is `Λ_k`, which
//! sampling can only bound from below.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{factor_mass, ConformalFactor, DiscreteConformalClass, Discretization, Stiffness};
use crate::linalg::{generalized_eigh, Mass};
use crate::spectral::{assemble_operator, solve_pencil, solve_pencil_warm, SolverOptions, SpectrumResult, WeightedMass};

/// Default relative threshold below which `λ₁` counts as zero.
pub const DEFAULT_SIGN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub k: usize,
    pub lambda_k: f64,
    /// `Σ μ^q dv`.
    pub mass: f64,
    /// `lambda_k · mass`.
    pub value: f64,
}

impl FunctionalValue {
    pub fn new(k: usize, lambda_k: f64, mass: f64) -> Self {
        Self { k, lambda_k, mass, value: lambda_k * mass }
    }
}

pub fn eval_f(class: &DiscreteConformalClass, mu: &ConformalFactor, k: usize, opts: &SolverOptions) -> Result<FunctionalValue> {
    Ok(eval_f_with_spectrum(class, mu, k, opts, &[])?.0)
}

/// Evaluates `F^k` and returns the spectrum it was read from; `guesses`
/// warm-start the iterative solver.
pub fn eval_f_with_spectrum(
    class: &DiscreteConformalClass,
    mu: &ConformalFactor,
    k: usize,
    opts: &SolverOptions,
    guesses: &[Vec<f64>],
) -> Result<(FunctionalValue, SpectrumResult)> {
    if k == 0 {
        return Err(Error::TooManyEigenpairs { requested: 0, available: class.num_dofs() });
    }
    let spectrum = solve_pencil_warm(class, mu, k, opts, guesses)?;
    let value = FunctionalValue::new(k, spectrum.lambda(k), factor_mass(class, mu));
    Ok((value, spectrum))
}

/// Gershgorin bound on the spectrum of the pencil: `‖A‖_∞ / λ_min(M_w)`.
pub fn pencil_scale(class: &DiscreteConformalClass, mu: &ConformalFactor) -> Result<f64> {
    let data = crate::geometry::conformal_data(class, mu)?;
    let a = assemble_operator(class).gershgorin_bound();
    let m_min = match WeightedMass::new(class, &data.weight) {
        WeightedMass::Diagonal(d) => d.iter().cloned().fold(f64::INFINITY, f64::min),
        WeightedMass::Dense(m) => {
            let n = m.nrows();
            let (vals, _) = generalized_eigh(&m, Mass::Diagonal(&vec![1.0; n]))?;
            vals[0]
        }
    };
    Ok(a / m_min)
}

/// Sign of `λ₁` for the factor `μ`; zero when `|λ₁| ≤ sign_tol·scale` with
/// `scale` from [`pencil_scale`].
pub fn lambda1_sign(class: &DiscreteConformalClass, mu: &ConformalFactor, opts: &SolverOptions, sign_tol: f64) -> Result<i8> {
    let spectrum = solve_pencil(class, mu, 1, opts)?;
    let lambda = spectrum.lambda(1);
    let scale = pencil_scale(class, mu)?;
    Ok(if lambda.abs() <= sign_tol * scale {
        0
    } else if lambda > 0.0 {
        1
    } else {
        -1
    })
}

/// Sign of the Yamabe invariant: the sign of `λ₁` of the background metric.
pub fn yamabe_sign(class: &DiscreteConformalClass, opts: &SolverOptions, sign_tol: f64) -> Result<i8> {
    lambda1_sign(class, &ConformalFactor::constant(class, 1.0)?, opts, sign_tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// Every sample is the constant factor `value`.
    Constant { value: f64 },
    /// `μ = exp(G)` with `G` a Gaussian combination of low modes whose
    /// pointwise standard deviation is about `amplitude`.
    LogGaussian { amplitude: f64, band_limit: usize },
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec::LogGaussian { amplitude: 0.3, band_limit: 2 }
    }
}

/// Draws conformal factors for a fixed class.
#[derive(Debug, Clone)]
pub struct Sampler {
    spec: SamplerSpec,
    modes: Vec<Vec<f64>>,
    nodes: usize,
}

impl Sampler {
    pub fn new(class: &DiscreteConformalClass, spec: &SamplerSpec) -> Result<Self> {
        let modes = match spec {
            SamplerSpec::Constant { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(Error::Construction(format!("constant sampler value {value} is not positive")));
                }
                Vec::new()
            }
            SamplerSpec::LogGaussian { amplitude, band_limit } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) || *band_limit == 0 {
                    return Err(Error::Construction("sampler needs a finite amplitude and band_limit ≥ 1".into()));
                }
                low_modes(class, *band_limit)?
            }
        };
        Ok(Self { spec: spec.clone(), modes, nodes: class.num_nodes() })
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    /// Raw node values of sample `index`; the stream is fixed by `(seed, index)`.
    pub fn sample_values(&self, seed: u64, index: u64) -> Vec<f64> {
        match &self.spec {
            SamplerSpec::Constant { value } => vec![*value; self.nodes],
            SamplerSpec::LogGaussian { amplitude, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index);
                let scale = amplitude / (self.modes.len() as f64).sqrt();
                let mut g = vec![0.0; self.nodes];
                for mode in &self.modes {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    for (gi, m) in g.iter_mut().zip(mode) {
                        *gi += scale * xi * m;
                    }
                }
                g.into_iter().map(f64::exp).collect()
            }
        }
    }

    /// Sample `index` as a validated factor.
    pub fn sample(&self, seed: u64, index: u64) -> Result<ConformalFactor> {
        ConformalFactor::new(self.sample_values(seed, index))
    }
}

/// Low-frequency node fields with unit root-mean-square value.
fn low_modes(class: &DiscreteConformalClass, band: usize) -> Result<Vec<Vec<f64>>> {
    let n = class.num_nodes();
    let mut modes: Vec<Vec<f64>> = Vec::new();
    match (class.stiffness(), class.discretization()) {
        (Stiffness::Periodic(p), _) => {
            let shape = p.shape();
            let b = band as i64;
            let mut period = [0.0; 3];
            let strides = [shape[1] * shape[2], shape[2], 1];
            for a in 0..3 {
                period[a] = class.coordinates(strides[a])[a] * shape[a] as f64;
            }
            for k0 in -b..=b {
                for k1 in -b..=b {
                    for k2 in -b..=b {
                        let kv = [k0, k1, k2];
                        // one representative of each ±k pair
                        if kv.iter().find(|&&c| c != 0).map_or(true, |&c| c < 0) {
                            continue;
                        }
                        let phase = |x: &[f64]| -> f64 {
                            (0..3).map(|a| std::f64::consts::TAU * kv[a] as f64 * x[a] / period[a]).sum()
                        };
                        modes.push((0..n).map(|i| std::f64::consts::SQRT_2 * phase(class.coordinates(i)).cos()).collect());
                        modes.push((0..n).map(|i| std::f64::consts::SQRT_2 * phase(class.coordinates(i)).sin()).collect());
                    }
                }
            }
        }
        (_, Discretization::Galerkin { values, degrees }) => {
            let vol = class.total_volume();
            for (j, &l) in degrees.iter().enumerate() {
                if l >= 1 && l <= band {
                    modes.push(values.column(j).iter().map(|v| v * vol.sqrt()).collect());
                }
            }
        }
        (_, Discretization::Nodal) => {
            let s = class.stiffness().to_dense();
            let (_, vecs) = generalized_eigh(&s, Mass::Diagonal(class.dv()))?;
            let vol = class.total_volume();
            for j in 1..=band.min(n - 1) {
                modes.push(vecs.column(j).iter().map(|v| v * vol.sqrt()).collect());
            }
        }
    }
    if modes.is_empty() {
        return Err(Error::Construction("sampler band limit selects no modes".into()));
    }
    Ok(modes)
}

/// One entry of a sampling trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: u64,
    /// `None` when the sample was rejected.
    pub value: Option<FunctionalValue>,
    pub rejected: Option<String>,
    /// Largest value among samples `0..=index`.
    pub running_max: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SupEstimate {
    /// A lower bound for `Λ_k`, never a claim that it is attained.
    pub best_value: f64,
    pub best_index: u64,
    pub best_mu: ConformalFactor,
    pub trace: Vec<SampleRecord>,
}

/// Monte-Carlo lower bound for `Λ_k` over `num_samples` sampled factors.
pub fn sup_estimate(
    class: &DiscreteConformalClass,
    k: usize,
    sampler: &SamplerSpec,
    num_samples: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<SupEstimate> {
    if num_samples == 0 {
        return Err(Error::Construction("sup_estimate needs at least one sample".into()));
    }
    let sampler = Sampler::new(class, sampler)?;
    let evaluated: Vec<Result<(u64, std::result::Result<FunctionalValue, String>)>> = (0..num_samples as u64)
        .into_par_iter()
        .map(|index| match sampler.sample(seed, index) {
            Err(e) => Ok((index, Err(e.to_string()))),
            Ok(mu) => eval_f(class, &mu, k, opts).map(|v| (index, Ok(v))),
        })
        .collect();

    let mut trace = Vec::with_capacity(num_samples);
    let mut best: Option<(f64, u64)> = None;
    for item in evaluated {
        let (index, outcome) = item?;
        match outcome {
            Ok(v) => {
                if best.map_or(true, |(b, _)| v.value > b) {
                    best = Some((v.value, index));
                }
                trace.push(SampleRecord { index, value: Some(v), rejected: None, running_max: best.map(|b| b.0) });
            }
            Err(reason) => {
                log::warn!("sample {index} rejected: {reason}");
                trace.push(SampleRecord { index, value: None, rejected: Some(reason), running_max: best.map(|b| b.0) });
            }
        }
    }
    let (best_value, best_index) =
        best.ok_or_else(|| Error::Construction("every sample was rejected".into()))?;
    Ok(SupEstimate { best_value, best_index, best_mu: sampler.sample(seed, best_index)?, trace })
}
