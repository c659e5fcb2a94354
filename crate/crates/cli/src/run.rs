//! Executes one configured task and returns its JSON result.

use serde_json::{json, Value};

use conflap::extremal::{
    certify_extremal, check_curvature_sign, construct_maximizer, for_eigen_residual, harmonic_map_residual,
    necessary_condition_residual, optimize_f1,
};
use conflap::functional::{eval_f, lambda1_sign};
use conflap::perturbation::{fd_oracle, one_sided_f_derivatives};
use conflap::spectral::solve_pencil;
use conflap::Result;

use crate::config::{Resolved, Task};
use crate::sweep::{run_sweep, SweepRow};

/// What a task produced: a JSON result and, for sweeps, the table rows.
pub struct Outcome {
    pub result: Value,
    pub rows: Option<Vec<SweepRow>>,
}

impl From<Value> for Outcome {
    fn from(result: Value) -> Self {
        Self { result, rows: None }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results are plain data")
}

pub fn execute(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config;
    let class = &r.class;
    let tol = &cfg.tolerances;
    let solver = &tol.solver;
    let k = cfg.k;
    Ok(match cfg.task {
        Task::Spectrum => {
            let mu = r.factor()?;
            let s = solve_pencil(class, &mu, cfg.k_max.unwrap_or(k), solver)?;
            json!({
                "eigenvalues": s.eigenvalues,
                "clusters": to_json(&s.clusters),
                "residuals": s.residuals,
                "orthonormality_error": s.orthonormality_error,
                "next_eigenvalue": s.next_eigenvalue,
                "lambda1_sign": lambda1_sign(class, &mu, solver, tol.certify.sign_tol)?,
                "diagnostics": s.diagnostics,
            })
            .into()
        }
        Task::Eval => to_json(&eval_f(class, &r.factor()?, k, solver)?).into(),
        Task::Derivative => {
            let mu = r.normalized_factor()?;
            let h = r.direction(&mu)?;
            let report = one_sided_f_derivatives(class, &mu, &h, k, solver)?;
            let fd = if cfg.finite_differences { Some(fd_oracle(class, &mu, &h, k, &cfg.fd_steps, solver)?) } else { None };
            json!({ "report": to_json(&report), "finite_differences": to_json(&fd) }).into()
        }
        Task::Certify => {
            // For k = 1 a sign-changing curvature rules out extremal metrics
            // before any certificate is attempted.
            if k == 1 {
                check_curvature_sign(class, tol.optimizer.r_floor)?;
            }
            let mu = r.normalized_factor()?;
            let cert = certify_extremal(class, &mu, k, &tol.certify, solver)?;
            let mut out = json!({ "certificate": to_json(&cert) });
            if cert.feasible {
                let fe = for_eigen_residual(class, &cert)?;
                out["for_eigen"] = json!({ "sup": fe.sup, "l2": fe.l2 });
                match harmonic_map_residual(class, &cert) {
                    Ok(hm) => out["harmonic_map"] = to_json(&hm),
                    Err(conflap::Error::NotApplicable(why)) => out["harmonic_map"] = json!({ "not_applicable": why }),
                    Err(e) => return Err(e),
                }
            }
            if k == 1 {
                let nc = necessary_condition_residual(class, &mu, cert.lambda_k)?;
                out["necessary_condition"] = json!({ "sup": nc.sup, "admits_extremal": nc.admits_extremal() });
            }
            out.into()
        }
        Task::Maximize => {
            let max = construct_maximizer(class, tol.optimizer.r_floor, solver)?;
            let value = eval_f(class, &max.mu_max, 1, solver)?;
            let nc = necessary_condition_residual(class, &max.mu_max, max.lambda1)?;
            json!({
                "Lambda1": max.lambda1,
                "lambda1_check": max.lambda1_check,
                "eigenvector_check": max.eigenvector_check,
                "eigenvector_positive": max.eigenvector_positive,
                "mass": max.mass,
                "F1": value.value,
                "necessary_condition_sup": nc.sup,
                "mu_max": max.mu_max.values(),
            })
            .into()
        }
        Task::Optimize => {
            let init = r.factor()?;
            let res = optimize_f1(class, &init, &tol.optimizer, solver)?;
            let max = construct_maximizer(class, tol.optimizer.r_floor, solver)?;
            let q = class.q();
            let (mut num, mut den) = (0.0, 0.0);
            for ((a, b), d) in res.mu_star.values().iter().zip(max.mu_max.values()).zip(class.dv()) {
                let t = b.powf(q);
                num += (a.powf(q) - t).powi(2) * d;
                den += t * t * d;
            }
            json!({
                "f_star": res.f_star,
                "iterations": res.iterations,
                "converged": res.converged,
                "Lambda1": max.lambda1,
                "relative_factor_error": (num / den).sqrt(),
                "mu_star": res.mu_star.values(),
                "trace": to_json(&res.trace),
            })
            .into()
        }
        Task::Sweep => {
            let rows = run_sweep(r)?;
            let values: Vec<f64> = rows.iter().map(|row| row.f).collect();
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            Outcome { result: json!({ "points": rows.len(), "max_F": max, "min_F": min }), rows: Some(rows) }
        }
    })
}
