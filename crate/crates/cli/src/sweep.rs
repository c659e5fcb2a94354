//! One-parameter sweeps, written as CSV.
//!
//! Columns, in order:
//!
//! | column          | meaning                                                    |
//! |-----------------|------------------------------------------------------------|
//! | `point`         | row index                                                  |
//! | `axis`          | `scale`, `seed` or `t`                                     |
//! | `value`         | the swept parameter                                        |
//! | `k`             | eigenvalue index                                           |
//! | `lambda_k`      | `λ_k` of the pencil                                        |
//! | `mass`          | `Σ μ^q dv`                                                 |
//! | `F`             | `λ_k · mass`                                               |
//! | `dq`            | `(F(t) − F(0)) / t`, `t` sweeps only                       |
//! | `formula_right` | right derivative of `F^k` from the perturbation formulas   |
//! | `formula_left`  | left derivative of `F^k` from the perturbation formulas    |
//!
//! Empty cells mean "not applicable".

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use conflap::functional::{eval_f, Sampler};
use conflap::geometry::ConformalFactor;
use conflap::perturbation::one_sided_f_derivatives;
use conflap::{Error, Result};

use crate::config::{Resolved, SweepConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub axis: &'static str,
    pub value: f64,
    pub k: usize,
    pub lambda_k: f64,
    pub mass: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub dq: Option<f64>,
    pub formula_right: Option<f64>,
    pub formula_left: Option<f64>,
}

pub fn run_sweep(r: &Resolved) -> Result<Vec<SweepRow>> {
    let cfg = &r.config;
    let class = &r.class;
    let solver = &cfg.tolerances.solver;
    let k = cfg.k;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::Construction("no sweep configured".into()))?;

    let (axis, values, base, extra): (&'static str, Vec<f64>, _, _) = match sweep {
        SweepConfig::Scale { values } => ("scale", values.clone(), Some(r.factor()?), None),
        SweepConfig::Seed { from, to } => ("seed", (*from..=*to).map(|s| s as f64).collect(), None, None),
        SweepConfig::T { values } => {
            let mu = r.normalized_factor()?;
            let h = r.direction(&mu)?;
            let report = one_sided_f_derivatives(class, &mu, &h, k, solver)?;
            let f0 = eval_f(class, &mu, k, solver)?.value;
            (
                "t",
                values.clone(),
                Some(mu),
                Some((h, f0, report.f_right, report.f_left)),
            )
        }
    };
    let sampler = match sweep {
        SweepConfig::Seed { .. } => Some(Sampler::new(class, &cfg.sampler)?),
        _ => None,
    };

    values
        .par_iter()
        .enumerate()
        .map(|(point, &value)| {
            let mu = match (sweep, &base, &extra) {
                (SweepConfig::Scale { .. }, Some(base), _) => base.scaled(value)?,
                (SweepConfig::Seed { .. }, _, _) => sampler.as_ref().expect("seed sweeps build a sampler").sample(value as u64, 0)?,
                (SweepConfig::T { .. }, Some(base), Some((h, _, _, _))) => {
                    let vals: Vec<f64> = base.values().iter().zip(h.values()).map(|(m, h)| m * (1.0 + value * h)).collect();
                    if let Some(node) = vals.iter().position(|v| !(*v > 0.0)) {
                        return Err(Error::NonPositiveStep { t: value, node });
                    }
                    ConformalFactor::new(vals)?
                }
                _ => unreachable!("sweep base matches its axis"),
            };
            let fv = eval_f(class, &mu, k, solver)?;
            let (dq, formula_right, formula_left) = match &extra {
                Some((_, f0, right, left)) => (Some((fv.value - f0) / value), Some(*right), Some(*left)),
                None => (None, None, None),
            };
            Ok(SweepRow { point, axis, value, k, lambda_k: fv.lambda_k, mass: fv.mass, f: fv.value, dq, formula_right, formula_left })
        })
        .collect()
}

pub fn write_csv(path: &Path, rows: &[SweepRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
