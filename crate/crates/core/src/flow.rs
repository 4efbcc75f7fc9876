//! Time integration of `∂t e^u = Δu + ρ (f e^u / ∫ f e^u − 1/|M|)`.
//!
//! Written for `u` this is `∂t u = e^{−u}(Δu − ρ/|M|) + ρ f / ∫ f e^u`, stepped with
//! classical RK4. After each stage-complete step the mass `∫e^u` can be restored
//! by an additive constant and the state projected onto G-invariant fields.
//! Steps are rejected (and `dt` halved) on non-finite values, energy increase or
//! excessive per-step mass drift.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsContext, DiagnosticsRecord, NumericError};
use crate::fieldexpr::{self, EvalError, FieldExpr, NotPositive};
use crate::math;
use crate::mesh::{Field, MeshError, MeshGeometry, MeshSpec};
use crate::symmetry::{GeneratorSpec, GroupAction, GroupError, DEFAULT_GROUP_CAP};

/// Largest `|u|` for which `e^{±u}` is evaluated.
pub const EXP_LIMIT: f64 = 700.0;
/// Right end of the RK4 stability interval on the negative real axis (rounded down).
pub const RK4_STABILITY: f64 = 2.8;
/// Relative energy increase tolerated on an accepted step.
pub const ENERGY_TOLERANCE: f64 = 1e-10;
/// Relative per-step mass drift (before projection) that forces a rejection.
pub const MASS_DRIFT_TOLERANCE: f64 = 1e-6;
/// Consecutive accepted steps before `dt` grows.
pub const GROWTH_STREAK: u32 = 10;
pub const GROWTH_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("could not materialize {what}: {source}")]
    Expr {
        what: &'static str,
        #[source]
        source: EvalError,
    },
    #[error("f must be strictly positive: {0}")]
    NotPositive(#[from] NotPositive),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("invalid flow settings: {0}")]
    Settings(&'static str),
    #[error("{what} is not G-invariant (deviation {deviation:e})")]
    NotInvariant { what: &'static str, deviation: f64 },
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("time step fell below dt_min at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("solution blew up at t = {t}")]
    Blowup { t: f64 },
}

/// Numeric parameters of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowSettings {
    pub rho: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Fraction of the RK4 stability ceiling `2.8 / (λ_max · max e^{−u})` used.
    pub cfl_safety: f64,
    pub residual_tol: f64,
    pub t_max: f64,
    pub record_every: usize,
    /// Keep a snapshot every this many records (0: initial and final only).
    pub snapshot_every: usize,
    pub symmetrize_each_step: bool,
    pub mass_project_each_step: bool,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            rho: 0.0,
            dt_init: 1e-3,
            dt_min: 1e-10,
            dt_max: 1.0,
            cfl_safety: 0.9,
            residual_tol: 1e-8,
            t_max: 200.0,
            record_every: 10,
            snapshot_every: 0,
            symmetrize_each_step: true,
            mass_project_each_step: true,
        }
    }
}

impl FlowSettings {
    pub fn validate(&self) -> Result<(), FlowError> {
        let err = |m| Err(FlowError::Settings(m));
        if !self.rho.is_finite() {
            return err("rho must be finite");
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return err("need 0 < dt_min <= dt_init <= dt_max");
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return err("cfl_safety must lie in (0, 1]");
        }
        if !(self.residual_tol > 0.0) {
            return err("residual_tol must be positive");
        }
        if !(self.t_max > 0.0) {
            return err("t_max must be positive");
        }
        if self.record_every == 0 {
            return err("record_every must be at least 1");
        }
        Ok(())
    }
}

/// Everything needed to start a run from closed-form data.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub mesh: MeshSpec,
    pub f_expr: FieldExpr,
    pub u0_expr: FieldExpr,
    pub group: Vec<GeneratorSpec>,
    pub settings: FlowSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    MaxTimeReached,
    StepUnderflow,
    Blowup,
}

impl fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowStatus::Converged => "Converged",
            FlowStatus::MaxTimeReached => "MaxTimeReached",
            FlowStatus::StepUnderflow => "StepUnderflow",
            FlowStatus::Blowup => "Blowup",
        })
    }
}

/// Quantities derived from one `u`, shared by the integrator and the diagnostics.
#[derive(Clone, Debug)]
pub(crate) struct Evaluation {
    pub lap: Vec<f64>,
    pub exp_u: Vec<f64>,
    /// `f e^u / ∫ f e^u`
    pub density: Vec<f64>,
    pub log_s: f64,
    pub rhs: Vec<f64>,
}

impl Evaluation {
    pub fn new(mesh: &MeshGeometry, rho: f64, f: &[f64], u: &[f64]) -> Result<Self, NumericError> {
        let max_abs = u.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
        if !(max_abs <= EXP_LIMIT) {
            return Err(NumericError::Overflow {
                max_abs,
                limit: EXP_LIMIT,
            });
        }
        let n = u.len();
        let mut lap = vec![0.0; n];
        mesh.laplacian_into(u, &mut lap);
        let exp_u: Vec<f64> = u.iter().map(|&v| math::exp(v)).collect();
        let s: f64 = exp_u
            .iter()
            .zip(f)
            .zip(mesh.quad_weights())
            .map(|((e, fv), w)| e * fv * w)
            .sum();
        let inv_vol = 1.0 / mesh.volume();
        let density: Vec<f64> = exp_u.iter().zip(f).map(|(e, fv)| fv * e / s).collect();
        let rhs = (0..n)
            .map(|i| (lap[i] - rho * inv_vol) / exp_u[i] + rho * f[i] / s)
            .collect();
        Ok(Evaluation {
            lap,
            exp_u,
            density,
            log_s: math::ln(s),
            rhs,
        })
    }

    /// `‖Δu + ρ (f e^u/∫f e^u − 1/|M|)‖_{L²}`
    pub fn residual(&self, mesh: &MeshGeometry, rho: f64) -> f64 {
        let inv_vol = 1.0 / mesh.volume();
        let sq: f64 = self
            .lap
            .iter()
            .zip(&self.density)
            .zip(mesh.quad_weights())
            .map(|((l, d), w)| {
                let r = l + rho * (d - inv_vol);
                w * r * r
            })
            .sum();
        math::sqrt(sq)
    }
}

/// `∂t u = e^{−u}(Δu − ρ/|M|) + ρ f / ∫ f e^u`.
pub fn rhs(mesh: &MeshGeometry, rho: f64, f: &Field, u: &Field) -> Result<Field, NumericError> {
    let eval = Evaluation::new(mesh, rho, f.values(), u.values())?;
    Ok(Field::from_raw(mesh.spec(), eval.rhs))
}

/// L² norm of the mean field operator `Δu + ρ (f e^u/∫f e^u − 1/|M|)`.
pub fn residual(mesh: &MeshGeometry, rho: f64, f: &Field, u: &Field) -> f64 {
    // Shift by max(u) so extreme fields still evaluate; the operator is
    // invariant under constants.
    let top = u.max();
    let shifted: Vec<f64> = u.values().iter().map(|v| v - top).collect();
    let clipped: Vec<f64> = shifted.iter().map(|v| v.max(-EXP_LIMIT)).collect();
    match Evaluation::new(mesh, rho, f.values(), &clipped) {
        Ok(eval) => {
            let mut lap = vec![0.0; u.len()];
            mesh.laplacian_into(u.values(), &mut lap);
            Evaluation { lap, ..eval }.residual(mesh, rho)
        }
        Err(_) => f64::INFINITY,
    }
}

/// Evolving state of one run.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub u: Field,
    pub dt: f64,
    /// Initial mass `∫ e^{u₀} dV`.
    pub a0: f64,
    pub step_count: u64,
    pub reject_count: u64,
    pub streak: u32,
    pub energy: f64,
    eval: Evaluation,
}

impl FlowState {
    pub fn residual(&self, mesh: &MeshGeometry, rho: f64) -> f64 {
        self.eval.residual(mesh, rho)
    }

    /// `∂t u` at the current state.
    pub fn velocity(&self) -> &[f64] {
        &self.eval.rhs
    }

    pub fn mass(&self, mesh: &MeshGeometry) -> f64 {
        mesh.integrate_values(&self.eval.exp_u)
    }

    pub fn dissipation(&self, mesh: &MeshGeometry) -> f64 {
        self.eval
            .rhs
            .iter()
            .zip(&self.eval.exp_u)
            .zip(mesh.quad_weights())
            .map(|((d, e), w)| w * d * d * e)
            .sum()
    }
}

/// Outcome of [`Flow::run`].
#[derive(Clone, Debug)]
pub struct FlowResult {
    pub status: FlowStatus,
    pub final_state: FlowState,
    pub series: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<(f64, Field)>,
    /// Largest generator deviation `|u(gx) − u(x)|` seen on any accepted state.
    pub max_invariance_error: Option<f64>,
}

/// A prepared run: mesh, weight function, optional group and settings.
#[derive(Clone, Debug)]
pub struct Flow {
    mesh: MeshGeometry,
    f: Field,
    group: Option<GroupAction>,
    settings: FlowSettings,
    diagnostics: DiagnosticsContext,
    lambda_max: f64,
}

enum Rejection {
    NonFinite,
    Overflow,
    Energy,
    MassDrift,
}

impl Flow {
    pub fn new(
        mesh: MeshGeometry,
        f: Field,
        group: Option<GroupAction>,
        settings: FlowSettings,
    ) -> Result<Self, FlowError> {
        settings.validate()?;
        fieldexpr::validate_positive(&f)?;
        assert_eq!(f.mesh(), mesh.spec(), "f lives on a different mesh");
        if let Some(g) = &group {
            if g.mesh() != mesh.spec() {
                return Err(GroupError::MeshMismatch {
                    field: mesh.spec(),
                    group: g.mesh(),
                }
                .into());
            }
            let deviation = g.invariance_error(f.values());
            if deviation > 1e-12 {
                return Err(FlowError::NotInvariant {
                    what: "f",
                    deviation,
                });
            }
        }
        let k = group.as_ref().map_or(1, GroupAction::min_orbit_cardinality);
        let diagnostics = DiagnosticsContext::new(&mesh, k);
        let lambda_max = mesh.laplacian_spectral_radius();
        Ok(Flow {
            mesh,
            f,
            group,
            settings,
            diagnostics,
            lambda_max,
        })
    }

    /// Builds the mesh, materializes `f` and `u₀` and closes the group.
    pub fn from_config(config: &FlowConfig) -> Result<(Self, Field), FlowError> {
        let mesh = MeshGeometry::build(config.mesh)?;
        let f = config
            .f_expr
            .materialize(&mesh)
            .map_err(|source| FlowError::Expr { what: "f", source })?;
        let u0 = config
            .u0_expr
            .materialize(&mesh)
            .map_err(|source| FlowError::Expr { what: "u0", source })?;
        let group = if config.group.is_empty() {
            None
        } else {
            Some(GroupAction::build(&mesh, &config.group, DEFAULT_GROUP_CAP)?)
        };
        Ok((Flow::new(mesh, f, group, config.settings)?, u0))
    }

    pub fn mesh(&self) -> &MeshGeometry {
        &self.mesh
    }

    pub fn f(&self) -> &Field {
        &self.f
    }

    pub fn group(&self) -> Option<&GroupAction> {
        self.group.as_ref()
    }

    pub fn settings(&self) -> &FlowSettings {
        &self.settings
    }

    /// Minimum orbit cardinality `k` (1 without a group).
    pub fn k(&self) -> usize {
        self.diagnostics.k()
    }

    /// `cfl_safety · 2.8 / (λ_max · max e^{−u})`.
    pub fn stability_ceiling(&self, u: &[f64]) -> f64 {
        let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
        self.settings.cfl_safety * RK4_STABILITY / (self.lambda_max * math::exp(-u_min))
    }

    fn evaluate(&self, u: &[f64]) -> Result<Evaluation, NumericError> {
        Evaluation::new(&self.mesh, self.settings.rho, self.f.values(), u)
    }

    fn energy_of(&self, u: &[f64], eval: &Evaluation) -> f64 {
        diagnostics::energy_from_evaluation(&self.mesh, self.settings.rho, u, eval)
    }

    pub fn initial_state(&self, u0: Field) -> Result<FlowState, FlowError> {
        assert_eq!(u0.mesh(), self.mesh.spec(), "u0 lives on a different mesh");
        if let Some(g) = &self.group {
            let deviation = g.invariance_error(u0.values());
            if deviation > 1e-12 {
                return Err(FlowError::NotInvariant {
                    what: "u0",
                    deviation,
                });
            }
        }
        let eval = self
            .evaluate(u0.values())
            .map_err(|_| FlowError::Blowup { t: 0.0 })?;
        let a0 = self.mesh.integrate_values(&eval.exp_u);
        let energy = self.energy_of(u0.values(), &eval);
        let dt = self
            .settings
            .dt_init
            .min(self.stability_ceiling(u0.values()))
            .max(self.settings.dt_min);
        Ok(FlowState {
            t: 0.0,
            u: u0,
            dt,
            a0,
            step_count: 0,
            reject_count: 0,
            streak: 0,
            energy,
            eval,
        })
    }

    fn axpy(u: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
        u.iter().zip(k).map(|(x, y)| x + a * y).collect()
    }

    fn attempt(&self, state: &FlowState, dt: f64) -> Result<(Vec<f64>, Evaluation, f64), Rejection> {
        let u = state.u.values();
        let k1 = &state.eval.rhs;
        let stage = |v: Vec<f64>| self.evaluate(&v).map_err(|_| Rejection::Overflow);
        let k2 = stage(Self::axpy(u, 0.5 * dt, k1))?.rhs;
        let k3 = stage(Self::axpy(u, 0.5 * dt, &k2))?.rhs;
        let k4 = stage(Self::axpy(u, dt, &k3))?.rhs;
        let mut next: Vec<f64> = (0..u.len())
            .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Rejection::NonFinite);
        }
        if next.iter().any(|v| math::abs(*v) > EXP_LIMIT) {
            return Err(Rejection::Overflow);
        }

        let previous_mass = state.mass(&self.mesh);
        let mass: f64 = next
            .iter()
            .zip(self.mesh.quad_weights())
            .map(|(v, w)| w * math::exp(*v))
            .sum();
        if math::abs(mass - previous_mass) > MASS_DRIFT_TOLERANCE * previous_mass {
            return Err(Rejection::MassDrift);
        }
        if self.settings.mass_project_each_step {
            let shift = math::ln(state.a0 / mass);
            for v in &mut next {
                *v += shift;
            }
        }
        if self.settings.symmetrize_each_step {
            if let Some(g) = &self.group {
                g.symmetrize_in_place(&mut next);
            }
        }
        let eval = self.evaluate(&next).map_err(|_| Rejection::Overflow)?;
        let energy = self.energy_of(&next, &eval);
        if energy > state.energy + ENERGY_TOLERANCE * (1.0 + math::abs(state.energy)) {
            return Err(Rejection::Energy);
        }
        Ok((next, eval, energy))
    }

    /// One accepted RK4 step, halving `dt` on every rejection.
    pub fn step(&self, state: &FlowState) -> Result<FlowState, FlowError> {
        let s = &self.settings;
        let mut dt = state.dt.min(self.stability_ceiling(state.u.values()));
        let mut rejects = 0u64;
        loop {
            if dt < s.dt_min {
                return Err(FlowError::StepUnderflow { t: state.t, dt });
            }
            match self.attempt(state, dt) {
                Ok((next, eval, energy)) => {
                    let mut streak = state.streak + 1;
                    let mut dt_next = dt;
                    if rejects > 0 {
                        streak = 0;
                    } else if streak >= GROWTH_STREAK {
                        dt_next = (dt * GROWTH_FACTOR)
                            .min(s.dt_max)
                            .min(self.stability_ceiling(&next));
                        streak = 0;
                    }
                    return Ok(FlowState {
                        t: state.t + dt,
                        u: Field::from_raw(self.mesh.spec(), next),
                        dt: dt_next,
                        a0: state.a0,
                        step_count: state.step_count + 1,
                        reject_count: state.reject_count + rejects,
                        streak,
                        energy,
                        eval,
                    });
                }
                Err(reason) => {
                    rejects += 1;
                    dt *= 0.5;
                    if dt < s.dt_min && matches!(reason, Rejection::Overflow | Rejection::NonFinite) {
                        return Err(FlowError::Blowup { t: state.t });
                    }
                }
            }
        }
    }

    pub fn record(&self, state: &FlowState) -> DiagnosticsRecord {
        self.diagnostics.record_from(
            &self.mesh,
            self.settings.rho,
            state.t,
            state.u.values(),
            &state.eval,
        )
    }

    /// Integrates from `u0` until convergence, `t_max`, step underflow or blow-up.
    pub fn run(&self, u0: Field) -> Result<FlowResult, FlowError> {
        let s = self.settings;
        let mut state = self.initial_state(u0)?;
        let mut series = vec![self.record(&state)];
        let mut snapshots = vec![(state.t, state.u.clone())];
        let mut last_recorded = 0u64;
        let mut max_invariance = self
            .group
            .as_ref()
            .map(|g| g.invariance_error(state.u.values()));

        let status = loop {
            if state.residual(&self.mesh, s.rho) <= s.residual_tol {
                break FlowStatus::Converged;
            }
            if state.t >= s.t_max {
                break FlowStatus::MaxTimeReached;
            }
            match self.step(&state) {
                Ok(next) => state = next,
                Err(FlowError::StepUnderflow { .. }) => break FlowStatus::StepUnderflow,
                Err(FlowError::Blowup { .. }) => break FlowStatus::Blowup,
                Err(e) => return Err(e),
            }
            if let (Some(g), Some(m)) = (&self.group, max_invariance.as_mut()) {
                *m = m.max(g.invariance_error(state.u.values()));
            }
            if state.step_count % s.record_every as u64 == 0 {
                series.push(self.record(&state));
                last_recorded = state.step_count;
                if s.snapshot_every > 0 && (series.len() - 1) % s.snapshot_every == 0 {
                    snapshots.push((state.t, state.u.clone()));
                }
            }
        };
        if last_recorded != state.step_count {
            series.push(self.record(&state));
        }
        if snapshots.last().is_none_or(|(t, _)| *t != state.t) {
            snapshots.push((state.t, state.u.clone()));
        }
        Ok(FlowResult {
            status,
            final_state: state,
            series,
            snapshots,
            max_invariance_error: max_invariance,
        })
    }
}

/// Prepares and runs `config`.
pub fn run(config: &FlowConfig) -> Result<FlowResult, FlowError> {
    let (flow, u0) = Flow::from_config(config)?;
    flow.run(u0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn torus(n: usize) -> MeshGeometry {
        MeshGeometry::torus_n(n).unwrap()
    }

    #[test]
    fn rhs_vanishes_at_constant_state() {
        let m = torus(32);
        let f = Field::constant(&m, 1.0);
        let a: f64 = 3.0;
        let u = Field::constant(&m, math::ln(a / m.volume()));
        let r = rhs(&m, 4.0 * PI, &f, &u).unwrap();
        assert!(r.values().iter().all(|v| v.abs() <= 1e-12));
        assert!(residual(&m, 4.0 * PI, &f, &u) <= 1e-12);
    }

    #[test]
    fn rhs_without_rho_is_mobility_times_laplacian() {
        let m = torus(32);
        let u = Field::from_fn(&m, |x, _| math::cos(x));
        let r = rhs(&m, 0.0, &Field::constant(&m, 1.0), &u).unwrap();
        let expected = u.map(|c| math::exp(-c) * -c);
        assert!(r.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn rhs_overflow_is_reported() {
        let m = torus(8);
        let u = Field::constant(&m, 701.0);
        assert!(matches!(
            rhs(&m, 1.0, &Field::constant(&m, 1.0), &u),
            Err(NumericError::Overflow { .. })
        ));
    }

    #[test]
    fn settings_validation() {
        let ok = FlowSettings::default();
        assert!(ok.validate().is_ok());
        let bad = FlowSettings {
            dt_min: 1.0,
            dt_init: 0.1,
            ..ok
        };
        assert!(bad.validate().is_err());
        assert!(FlowSettings {
            cfl_safety: 1.5,
            ..ok
        }
        .validate()
        .is_err());
        assert!(FlowSettings {
            record_every: 0,
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn rejects_nonpositive_f() {
        let m = torus(16);
        let f = Field::from_fn(&m, |x, _| math::cos(x));
        assert!(matches!(
            Flow::new(m, f, None, FlowSettings::default()),
            Err(FlowError::NotPositive(_))
        ));
    }

    #[test]
    fn residual_is_shift_invariant() {
        let m = torus(32);
        let f = Field::from_fn(&m, |x, _| 1.0 + 0.5 * math::cos(x));
        let u = Field::from_fn(&m, |x, y| 0.3 * math::sin(x) + 0.2 * math::cos(y));
        let a = residual(&m, 4.0 * PI, &f, &u);
        let b = residual(&m, 4.0 * PI, &f, &u.map(|v| v + 11.0));
        assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}
