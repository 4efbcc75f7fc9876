//! Damped Newton–Krylov solver for `Δw + ρ (f e^w/∫f e^w − 1/|M|) = 0`.
//!
//! Iterates live in the mean-zero gauge. Each Newton step solves `J δ = −F`
//! with right-preconditioned GMRES on the mean-zero subspace, followed by a
//! backtracking line search on `‖F‖_{L²}`. The target `ρ` is reached by
//! continuation from zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::fieldexpr::{validate_positive, NotPositive};
use crate::linalg::Gmres;
use crate::math;
use crate::mesh::{Field, MeshGeometry, MeshKind};

const SUFFICIENT_DECREASE: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;
const GMRES_RESTART: usize = 60;
const GMRES_MAX_ITERATIONS: usize = 1200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    pub rho_target: f64,
    pub rho_continuation_steps: usize,
    pub newton_tol: f64,
    /// Per continuation stage.
    pub max_iters: usize,
    /// Backtracking factor in `(0, 1)`.
    pub damping: f64,
    /// Relative tolerance of each linear solve.
    pub linear_tol: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            rho_target: 0.0,
            rho_continuation_steps: 8,
            newton_tol: 1e-10,
            max_iters: 50,
            damping: 0.5,
            linear_tol: 1e-10,
        }
    }
}

impl NewtonConfig {
    pub fn with_rho(rho_target: f64) -> Self {
        NewtonConfig {
            rho_target,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NewtonError> {
        let bad = |why| Err(NewtonError::Config(why));
        if !self.rho_target.is_finite() {
            return bad("rho_target must be finite");
        }
        if self.rho_continuation_steps < 1 {
            return bad("rho_continuation_steps must be at least 1");
        }
        if !(self.newton_tol > 0.0) || !(self.linear_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1");
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return bad("damping must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stall {
    MaxIterations,
    LineSearch,
    NonFinite,
}

impl core::fmt::Display for Stall {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Stall::MaxIterations => "iteration limit reached",
            Stall::LineSearch => "line search failed",
            Stall::NonFinite => "non-finite iterate",
        })
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum NewtonError {
    #[error("invalid Newton settings: {0}")]
    Config(&'static str),
    #[error("f must be strictly positive: {0}")]
    NotPositive(#[from] NotPositive),
    #[error("initial guess is not finite")]
    NonFiniteInit,
    #[error("fields belong to different meshes")]
    MeshMismatch,
    #[error("no convergence at rho = {rho} after {iterations} iterations ({reason}); residual {residual:e}")]
    NoConvergence {
        rho: f64,
        iterations: usize,
        residual: f64,
        reason: Stall,
    },
}

#[derive(Clone, Debug)]
pub struct NewtonReport {
    /// Mean-zero solution.
    pub solution: Field,
    /// Newton iterations summed over continuation stages.
    pub iterations: usize,
    pub linear_iterations: usize,
    /// Largest relative residual left by an inner solve.
    pub worst_linear_residual: f64,
    /// `‖F‖_{L²}` at the solution.
    pub residual: f64,
}

/// `u − mean(u)`.
pub fn mean_zero(mesh: &MeshGeometry, u: &Field) -> Field {
    let m = mesh.mean(u);
    u.map(|v| v - m)
}

/// `u + ln(target_mass / ∫e^u)`, so that `∫ e^{aligned} = target_mass`.
pub fn gauge_align(mesh: &MeshGeometry, u: &Field, target_mass: f64) -> Field {
    assert!(target_mass > 0.0, "contract violation: target mass must be positive");
    let top = u.max();
    let s = mesh.integrate_values(&u.values().iter().map(|v| math::exp(v - top)).collect::<Vec<_>>());
    let shift = math::ln(target_mass) - top - math::ln(s);
    u.map(|v| v + shift)
}

/// `f e^{w − max w}` and its integral; the ratio is the normalized density.
fn weighted_exp(mesh: &MeshGeometry, f: &[f64], w: &[f64]) -> (Vec<f64>, f64) {
    let top = w.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let p: Vec<f64> = w.iter().zip(f).map(|(v, fv)| fv * math::exp(v - top)).collect();
    let s = mesh.integrate_values(&p);
    (p, s)
}

fn operator_values(mesh: &MeshGeometry, rho: f64, f: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    mesh.laplacian_into(w, &mut out);
    let (p, s) = weighted_exp(mesh, f, w);
    let inv_vol = 1.0 / mesh.volume();
    for (o, pv) in out.iter_mut().zip(&p) {
        *o += rho * (pv / s - inv_vol);
    }
    out
}

fn jacobian_values(mesh: &MeshGeometry, rho: f64, p: &[f64], s: f64, v: &[f64], out: &mut [f64]) {
    mesh.laplacian_into(v, out);
    let pv: Vec<f64> = p.iter().zip(v).map(|(a, b)| a * b).collect();
    let c = mesh.integrate_values(&pv) / (s * s);
    for ((o, pvi), pi) in out.iter_mut().zip(&pv).zip(p) {
        *o += rho * (pvi / s - pi * c);
    }
}

/// `F(w) = Δw + ρ (f e^w/∫f e^w − 1/|M|)`.
pub fn mean_field_operator(mesh: &MeshGeometry, rho: f64, f: &Field, w: &Field) -> Field {
    assert_eq!(f.mesh(), w.mesh(), "contract violation: mesh mismatch");
    Field::from_raw(mesh.spec(), operator_values(mesh, rho, f.values(), w.values()))
}

/// `J[v] = Δv + ρ (f e^w v/s − f e^w (∫f e^w v)/s²)`, `s = ∫f e^w`.
pub fn apply_jacobian(mesh: &MeshGeometry, rho: f64, f: &Field, w: &Field, v: &Field) -> Field {
    assert_eq!(f.mesh(), w.mesh(), "contract violation: mesh mismatch");
    assert_eq!(f.mesh(), v.mesh(), "contract violation: mesh mismatch");
    let (p, s) = weighted_exp(mesh, f.values(), w.values());
    let mut out = vec![0.0; v.len()];
    jacobian_values(mesh, rho, &p, s, v.values(), &mut out);
    Field::from_raw(mesh.spec(), out)
}

fn l2_norm(mesh: &MeshGeometry, v: &[f64]) -> f64 {
    let sq: f64 = v.iter().zip(mesh.quad_weights()).map(|(x, w)| w * x * x).sum();
    math::sqrt(sq)
}

fn project_mean_zero(mesh: &MeshGeometry, v: &mut [f64]) {
    let m = mesh.integrate_values(v) / mesh.volume();
    v.iter_mut().for_each(|x| *x -= m);
}

struct Solver<'a> {
    mesh: &'a MeshGeometry,
    f: &'a [f64],
    cfg: &'a NewtonConfig,
    diag: Vec<f64>,
    iterations: usize,
    linear_iterations: usize,
    worst_linear_residual: f64,
}

impl Solver<'_> {
    fn precondition(&self, v: &[f64], out: &mut [f64]) {
        match self.mesh.kind() {
            MeshKind::Torus => {
                self.mesh.inverse_laplacian_into(v, out);
            }
            MeshKind::Sphere => {
                for ((o, x), d) in out.iter_mut().zip(v).zip(&self.diag) {
                    *o = x / d;
                }
            }
        }
        project_mean_zero(self.mesh, out);
    }

    fn stage(&mut self, rho: f64, w: &mut Vec<f64>) -> Result<f64, NewtonError> {
        let mesh = self.mesh;
        let mut residual_vec = operator_values(mesh, rho, self.f, w);
        let mut norm = l2_norm(mesh, &residual_vec);
        let stalled = |iterations, residual, reason| NewtonError::NoConvergence {
            rho,
            iterations,
            residual,
            reason,
        };
        let mut local = 0;
        while norm > self.cfg.newton_tol {
            if local >= self.cfg.max_iters {
                return Err(stalled(self.iterations, norm, Stall::MaxIterations));
            }
            local += 1;
            self.iterations += 1;

            let (p, s) = weighted_exp(mesh, self.f, w);
            let mut b: Vec<f64> = residual_vec.iter().map(|v| -v).collect();
            project_mean_zero(mesh, &mut b);
            let mut delta = vec![0.0; w.len()];
            let gmres = Gmres {
                restart: GMRES_RESTART,
                max_iterations: GMRES_MAX_ITERATIONS,
                rel_tol: self.cfg.linear_tol,
            };
            let weights = mesh.quad_weights();
            let outcome = gmres.solve(
                |v, out| jacobian_values(mesh, rho, &p, s, v, out),
                |v, out| self.precondition(v, out),
                |a, b| a.iter().zip(b).zip(weights).map(|((x, y), q)| q * x * y).sum(),
                &b,
                &mut delta,
            );
            self.linear_iterations += outcome.iterations;
            self.worst_linear_residual = self.worst_linear_residual.max(outcome.relative_residual);
            project_mean_zero(mesh, &mut delta);

            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = w.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
                if trial.iter().all(|v| v.is_finite()) {
                    let trial_res = operator_values(mesh, rho, self.f, &trial);
                    let trial_norm = l2_norm(mesh, &trial_res);
                    if trial_norm.is_finite() && trial_norm <= (1.0 - SUFFICIENT_DECREASE * alpha) * norm {
                        *w = trial;
                        project_mean_zero(mesh, w);
                        residual_vec = trial_res;
                        norm = trial_norm;
                        break;
                    }
                }
                alpha *= self.cfg.damping;
                if alpha < MIN_STEP {
                    let reason = if norm.is_finite() { Stall::LineSearch } else { Stall::NonFinite };
                    return Err(stalled(self.iterations, norm, reason));
                }
            }
        }
        Ok(norm)
    }
}

/// Solves the mean field equation at `cfg.rho_target`, ramping `ρ` from 0 in
/// `cfg.rho_continuation_steps` stages. The result has zero mean.
pub fn newton_solve(
    mesh: &MeshGeometry,
    cfg: &NewtonConfig,
    f: &Field,
    u_init: &Field,
) -> Result<NewtonReport, NewtonError> {
    cfg.validate()?;
    if f.mesh() != mesh.spec() || u_init.mesh() != mesh.spec() {
        return Err(NewtonError::MeshMismatch);
    }
    validate_positive(f)?;
    if !u_init.values().iter().all(|v| v.is_finite()) {
        return Err(NewtonError::NonFiniteInit);
    }
    let mut w = mean_zero(mesh, u_init).into_values();
    let mut solver = Solver {
        mesh,
        f: f.values(),
        cfg,
        diag: mesh.laplacian_diagonal(),
        iterations: 0,
        linear_iterations: 0,
        worst_linear_residual: 0.0,
    };
    let steps = cfg.rho_continuation_steps;
    let mut residual = 0.0;
    for i in 1..=steps {
        let rho = cfg.rho_target * i as f64 / steps as f64;
        residual = solver.stage(rho, &mut w)?;
    }
    Ok(NewtonReport {
        solution: Field::from_raw(mesh.spec(), w),
        iterations: solver.iterations,
        linear_iterations: solver.linear_iterations,
        worst_linear_residual: solver.worst_linear_residual,
        residual,
    })
}
