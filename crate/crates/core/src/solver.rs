//! Inexact semismooth Newton–GMRES with nonmonotone backtracking line search.
//!
//! Each Newton iteration solves `G(z_k) d = -F(z_k)` with GMRES only to the
//! relative tolerance `η_k` (the forcing term), then backtracks
//! `δ ∈ {δ₀, θδ₀, θ²δ₀, …}` until
//!
//! ```text
//! Q(z_k + δ d) <= max_{recent j} Q(z_j) + c₁ δ ∇Q(z_k)ᵀ d.
//! ```
//!
//! [`Variant::Issng`] skips the line search and always takes the full step.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{dot, GridFunction};
use crate::krylov::{gmres, GmresOptions, KrylovError};
use crate::problem::{project_control, residual, ProblemError, ProblemInstance, Residual, Slant, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid solver parameter {name} = {value}: {why}")]
    Invalid {
        name: &'static str,
        value: f64,
        why: &'static str,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("forcing term needs a nonempty residual history")]
    EmptyHistory,
    #[error("line search needs a nonempty merit history")]
    EmptyMeritHistory,
}

/// Newton globalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Nonmonotone backtracking line search.
    #[serde(rename = "issng-l")]
    IssngL,
    /// Fixed unit step.
    #[serde(rename = "issng")]
    Issng,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::IssngL => "issng-l",
            Variant::Issng => "issng",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "issng-l" | "issngl" => Ok(Variant::IssngL),
            "issng" => Ok(Variant::Issng),
            other => Err(format!("unknown variant '{other}' (expected issng-l or issng)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Sufficient-decrease coefficient. Values >= 1 are accepted for experiments.
    pub c1: f64,
    /// Backtracking factor in (0, 1).
    pub theta: f64,
    /// Initial trial step in (0, 1].
    pub delta0: f64,
    /// Forcing term at k = 0.
    pub eta0: f64,
    pub eta_max: f64,
    /// Floor on the forcing term, keeping GMRES targets above roundoff.
    pub eta_min: f64,
    pub gamma: f64,
    /// Exponent of the forcing-term ratio, in (1, 2].
    pub a1: f64,
    /// Stopping tolerance on the relative residual sum.
    pub tol: f64,
    pub max_newton: usize,
    pub max_backtracks: usize,
    /// Nonmonotone memory; `None` compares against every previous merit value.
    pub window: Option<usize>,
    pub variant: Variant,
    pub gmres_restart: usize,
    /// Total GMRES iteration cap per Newton step; `None` means `10 * dim`.
    pub gmres_max_iters: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c1: 0.5,
            theta: 0.5,
            delta0: 1.0,
            eta0: 1e-3,
            eta_max: 0.9,
            eta_min: 1e-8,
            gamma: 1e-3,
            a1: 2.0,
            tol: 1e-8,
            max_newton: 100,
            max_backtracks: 50,
            window: None,
            variant: Variant::IssngL,
            gmres_restart: 200,
            gmres_max_iters: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(name: &'static str, value: f64, ok: bool, why: &'static str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid { name, value, why })
            }
        }
        check("c1", self.c1, self.c1 > 0.0 && self.c1.is_finite(), "must be positive")?;
        check("theta", self.theta, self.theta > 0.0 && self.theta < 1.0, "must lie in (0, 1)")?;
        check("delta0", self.delta0, self.delta0 > 0.0 && self.delta0 <= 1.0, "must lie in (0, 1]")?;
        check("eta0", self.eta0, (0.0..1.0).contains(&self.eta0), "must lie in [0, 1)")?;
        check("eta_max", self.eta_max, (0.0..1.0).contains(&self.eta_max), "must lie in [0, 1)")?;
        check(
            "eta_min",
            self.eta_min,
            self.eta_min >= 0.0 && self.eta_min <= self.eta_max,
            "must lie in [0, eta_max]",
        )?;
        check("gamma", self.gamma, (0.0..=1.0).contains(&self.gamma), "must lie in [0, 1]")?;
        check("a1", self.a1, self.a1 > 1.0 && self.a1 <= 2.0, "must lie in (1, 2]")?;
        check("tol", self.tol, self.tol > 0.0 && self.tol.is_finite(), "must be positive")?;
        let positive = [
            ("max_newton", self.max_newton),
            ("max_backtracks", self.max_backtracks),
            ("gmres_restart", self.gmres_restart),
            ("window", self.window.unwrap_or(1)),
            ("gmres_max_iters", self.gmres_max_iters.unwrap_or(1)),
        ];
        for (name, v) in positive {
            check(name, v as f64, v > 0, "must be positive")?;
        }
        Ok(())
    }
}

/// Diagnostics of Newton iteration `k` (1-based): the step from `z_{k-1}`
/// and the residual it reached at `z_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `||F(z_k)||`
    pub norm_f: f64,
    pub norm_ry: f64,
    pub norm_rp: f64,
    /// Forcing term used for this step.
    pub eta: f64,
    pub gmres_iters: usize,
    pub gmres_relres: f64,
    /// Accepted step length.
    pub delta: f64,
    pub backtracks: usize,
    /// Stopping ratio at `z_k`.
    pub tau: f64,
    /// `Q(z_k)`
    pub merit: f64,
}

/// Residual norms at the starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialResidual {
    pub norm_f: f64,
    pub norm_ry: f64,
    pub norm_rp: f64,
    pub merit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureReason {
    GmresNotConverged {
        k: usize,
        eta: f64,
        relative_residual: f64,
        iterations: usize,
    },
    NotDescent {
        k: usize,
        directional_derivative: f64,
    },
    LineSearch {
        k: usize,
        backtracks: usize,
    },
    MaxNewton {
        max_newton: usize,
    },
    NonFiniteState {
        k: usize,
    },
    Krylov {
        k: usize,
        message: String,
    },
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureReason::GmresNotConverged {
                k,
                eta,
                relative_residual,
                iterations,
            } => write!(
                f,
                "GMRES did not reach eta = {eta:e} at iteration {k} (relres {relative_residual:e} after {iterations} iterations)"
            ),
            FailureReason::NotDescent {
                k,
                directional_derivative,
            } => write!(
                f,
                "Newton direction is not a descent direction at iteration {k} (grad Q . d = {directional_derivative:e})"
            ),
            FailureReason::LineSearch { k, backtracks } => {
                write!(f, "line search failed at iteration {k} after {backtracks} backtracks")
            }
            FailureReason::MaxNewton { max_newton } => {
                write!(f, "no convergence within {max_newton} Newton iterations")
            }
            FailureReason::NonFiniteState { k } => write!(f, "residual became non-finite at iteration {k}"),
            FailureReason::Krylov { k, message } => write!(f, "GMRES error at iteration {k}: {message}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub converged: bool,
    pub initial: InitialResidual,
    pub iterations: Vec<IterationRecord>,
    pub final_state: State,
    /// `Φ(p / α)` at the final state.
    pub final_control: GridFunction,
    pub wall_time: f64,
    pub peak_krylov_bytes: usize,
    pub failure_reason: Option<FailureReason>,
}

impl SolveReport {
    pub fn newton_iterations(&self) -> usize {
        self.iterations.len()
    }

    /// `(||r_y||, ||r_p||)` at the final state.
    pub fn final_norms(&self) -> (f64, f64) {
        match self.iterations.last() {
            Some(r) => (r.norm_ry, r.norm_rp),
            None => (self.initial.norm_ry, self.initial.norm_rp),
        }
    }

    /// `||F(z_k)||` for `k = 0, 1, …`.
    pub fn residual_norms(&self) -> Vec<f64> {
        std::iter::once(self.initial.norm_f)
            .chain(self.iterations.iter().map(|r| r.norm_f))
            .collect()
    }
}

/// Everything about one accepted Newton step, handed to solve observers.
#[derive(Debug)]
pub struct StepInfo<'a> {
    /// 0-based index of the point the step starts from.
    pub k: usize,
    pub z: &'a State,
    pub residual: &'a Residual,
    pub direction: &'a [f64],
    pub eta: f64,
    /// `∇Q(z_k)ᵀ d_k`
    pub directional_derivative: f64,
    pub delta: f64,
}

/// Forcing term `η_k`.
///
/// `norm_history[j] = ||F(z_j)||` for `j = 0..=k`. For `k >= 1`,
/// `η_k = γ (||F(z_k)|| / max_j ||F(z_j)||)^{a₁}` with the max over
/// `1 <= j <= k-1`; at `k = 1` that range is empty and `j = 0` is used.
pub fn forcing_term(k: usize, norm_history: &[f64], cfg: &SolverConfig) -> Result<f64, SolverError> {
    if norm_history.is_empty() || norm_history.len() <= k {
        return Err(SolverError::EmptyHistory);
    }
    if k == 0 {
        return Ok(cfg.eta0.clamp(cfg.eta_min, cfg.eta_max));
    }
    let window = if k == 1 { &norm_history[0..1] } else { &norm_history[1..k] };
    let denom = window.iter().fold(0.0f64, |a, &v| a.max(v));
    if denom == 0.0 {
        return Ok(cfg.eta_min);
    }
    let eta = cfg.gamma * (norm_history[k] / denom).powf(cfg.a1);
    Ok(eta.clamp(cfg.eta_min, cfg.eta_max))
}

/// `(||r_y^k|| + ||r_p^k||) / max(1, ||r_y^0|| + ||r_p^0||)`.
pub fn stopping_ratio(norm_ry_k: f64, norm_rp_k: f64, norm_ry_0: f64, norm_rp_0: f64) -> f64 {
    (norm_ry_k + norm_rp_k) / (norm_ry_0 + norm_rp_0).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub delta: f64,
    pub backtracks: usize,
    pub merit: f64,
    /// Residual at the accepted point.
    pub residual: Residual,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineSearchResult {
    Accepted(LineSearchOutcome),
    /// Every trial up to `max_backtracks` was rejected.
    Exhausted { backtracks: usize },
}

/// Nonmonotone backtracking. `merit_history` ends with `Q(z)`; the reference
/// value is the max over its last `cfg.window` entries. A trial whose
/// residual is not finite is rejected.
pub fn nonmonotone_linesearch(
    inst: &ProblemInstance,
    z: &State,
    d: &[f64],
    grad_dot_d: f64,
    merit_history: &[f64],
    cfg: &SolverConfig,
) -> Result<LineSearchResult, SolverError> {
    if merit_history.is_empty() {
        return Err(SolverError::EmptyMeritHistory);
    }
    let recent = match cfg.window {
        Some(w) => &merit_history[merit_history.len().saturating_sub(w)..],
        None => merit_history,
    };
    let reference = recent.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    linesearch_with(
        |delta| residual(inst, &z.step(delta, d)).ok(),
        reference,
        grad_dot_d,
        cfg,
    )
}

fn linesearch_with<E>(
    mut eval: E,
    reference: f64,
    grad_dot_d: f64,
    cfg: &SolverConfig,
) -> Result<LineSearchResult, SolverError>
where
    E: FnMut(f64) -> Option<Residual>,
{
    let mut delta = cfg.delta0;
    for backtracks in 0..=cfg.max_backtracks {
        if let Some(r) = eval(delta) {
            let q = r.merit();
            if q <= reference + cfg.c1 * delta * grad_dot_d {
                return Ok(LineSearchResult::Accepted(LineSearchOutcome {
                    delta,
                    backtracks,
                    merit: q,
                    residual: r,
                }));
            }
        }
        delta *= cfg.theta;
    }
    Ok(LineSearchResult::Exhausted {
        backtracks: cfg.max_backtracks,
    })
}

/// Runs the Newton loop from `z0`.
pub fn solve(inst: &ProblemInstance, z0: &State, cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    solve_observed(inst, z0, cfg, |_| {})
}

/// Like [`solve`], calling `observer` once per accepted step before the update.
pub fn solve_observed<O>(
    inst: &ProblemInstance,
    z0: &State,
    cfg: &SolverConfig,
    mut observer: O,
) -> Result<SolveReport, SolverError>
where
    O: FnMut(&StepInfo<'_>),
{
    cfg.validate()?;
    z0.y_function().check_grid(inst.grid()).map_err(ProblemError::from)?;
    let start = Instant::now();
    let dim = inst.dim();
    let gmres_max = cfg.gmres_max_iters.unwrap_or(10 * dim);

    let mut z = z0.clone();
    let mut records = Vec::new();
    let mut peak_bytes = 0usize;

    let finish = |z: State,
                  records: Vec<IterationRecord>,
                  initial: InitialResidual,
                  peak: usize,
                  failure: Option<FailureReason>| {
        let final_control = project_control(&z.p_function(), inst.alpha(), inst.bounds());
        SolveReport {
            converged: failure.is_none(),
            initial,
            iterations: records,
            final_state: z,
            final_control,
            wall_time: start.elapsed().as_secs_f64(),
            peak_krylov_bytes: peak,
            failure_reason: failure,
        }
    };

    let mut f = match residual(inst, &z) {
        Ok(r) => r,
        Err(ProblemError::NonFiniteResidual { .. }) => {
            let initial = InitialResidual {
                norm_f: f64::NAN,
                norm_ry: f64::NAN,
                norm_rp: f64::NAN,
                merit: f64::NAN,
            };
            return Ok(finish(z, records, initial, 0, Some(FailureReason::NonFiniteState { k: 0 })));
        }
        Err(e) => return Err(e.into()),
    };
    let initial = InitialResidual {
        norm_f: f.norm(),
        norm_ry: f.norm_ry(),
        norm_rp: f.norm_rp(),
        merit: f.merit(),
    };
    let (ry0, rp0) = (initial.norm_ry, initial.norm_rp);
    let mut norm_history = vec![initial.norm_f];
    let mut merit_history = vec![initial.merit];
    let mut tau = stopping_ratio(ry0, rp0, ry0, rp0);

    let mut k = 0usize;
    loop {
        let norm_f = norm_history[k];
        if tau <= cfg.tol || norm_f == 0.0 {
            return Ok(finish(z, records, initial, peak_bytes, None));
        }
        if k >= cfg.max_newton {
            let failure = FailureReason::MaxNewton {
                max_newton: cfg.max_newton,
            };
            return Ok(finish(z, records, initial, peak_bytes, Some(failure)));
        }

        let eta = forcing_term(k, &norm_history, cfg)?;
        let slant = Slant::at(inst, &z)?;
        let rhs: Vec<f64> = f.as_slice().iter().map(|v| -v).collect();
        let opts = GmresOptions {
            tol_rel: eta,
            restart: cfg.gmres_restart,
            max_iters: gmres_max,
        };
        let krylov = match gmres(&slant, &rhs, &vec![0.0; dim], &opts) {
            Ok(o) => o,
            Err(e @ KrylovError::InvalidOption(_)) | Err(e @ KrylovError::DimensionMismatch { .. }) => {
                let failure = FailureReason::Krylov {
                    k,
                    message: e.to_string(),
                };
                return Ok(finish(z, records, initial, peak_bytes, Some(failure)));
            }
            Err(e) => unreachable!("gmres does not raise {e}"),
        };
        peak_bytes = peak_bytes.max(krylov.peak_basis_bytes);
        if !krylov.converged {
            let failure = FailureReason::GmresNotConverged {
                k,
                eta,
                relative_residual: krylov.relative_residual,
                iterations: krylov.iterations,
            };
            return Ok(finish(z, records, initial, peak_bytes, Some(failure)));
        }
        let d = krylov.solution;

        let grad = slant.apply_transpose(f.as_slice());
        let gtd = dot(&grad, &d);
        if gtd.is_nan() || gtd >= 0.0 {
            let failure = FailureReason::NotDescent {
                k,
                directional_derivative: gtd,
            };
            return Ok(finish(z, records, initial, peak_bytes, Some(failure)));
        }

        let step = match cfg.variant {
            Variant::IssngL => match nonmonotone_linesearch(inst, &z, &d, gtd, &merit_history, cfg)? {
                LineSearchResult::Accepted(o) => o,
                LineSearchResult::Exhausted { backtracks } => {
                    let failure = FailureReason::LineSearch { k, backtracks };
                    return Ok(finish(z, records, initial, peak_bytes, Some(failure)));
                }
            },
            Variant::Issng => match residual(inst, &z.step(1.0, &d)) {
                Ok(r) => LineSearchOutcome {
                    delta: 1.0,
                    backtracks: 0,
                    merit: r.merit(),
                    residual: r,
                },
                Err(_) => {
                    let failure = FailureReason::NonFiniteState { k: k + 1 };
                    return Ok(finish(z, records, initial, peak_bytes, Some(failure)));
                }
            },
        };

        observer(&StepInfo {
            k,
            z: &z,
            residual: &f,
            direction: &d,
            eta,
            directional_derivative: gtd,
            delta: step.delta,
        });

        z = z.step(step.delta, &d);
        f = step.residual;
        k += 1;
        let (ry, rp) = (f.norm_ry(), f.norm_rp());
        tau = stopping_ratio(ry, rp, ry0, rp0);
        norm_history.push(f.norm());
        merit_history.push(step.merit);
        records.push(IterationRecord {
            k,
            norm_f: f.norm(),
            norm_ry: ry,
            norm_rp: rp,
            eta,
            gmres_iters: krylov.iterations,
            gmres_relres: krylov.relative_residual,
            delta: step.delta,
            backtracks: step.backtracks,
            tau,
            merit: step.merit,
        });
    }
}
