//! Scalar functionals monitored along a flow.
//!
//! Inequality constants are never materialized here: Moser–Trudinger quantities
//! are reported as `(lhs, dirichlet, gap)` triples and sharpness is read off
//! measured slopes.

use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

use crate::flow::{self, Evaluation};
use crate::math;
use crate::mesh::{BallStencil, Field, MeshGeometry};
use crate::symmetry::{self, GroupAction};

/// Column order of a serialized [`DiagnosticsRecord`].
pub const CSV_COLUMNS: [&str; 12] = [
    "t", "mass", "energy", "dissipation", "residual", "mean", "h1", "h2", "umin", "umax",
    "mtgap", "confrac",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("exponential overflow: |u| reached {max_abs} (limit {limit})")]
    Overflow { max_abs: f64, limit: f64 },
    #[error("functional evaluated to a non-finite value")]
    NonFinite,
}

/// Snapshot of every monitored scalar at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `∫ e^u dV`
    pub mass: f64,
    /// `E_f(u)`
    pub energy: f64,
    /// `y(t) = ∫ (∂t u)² e^u dV`
    pub dissipation: f64,
    pub residual: f64,
    pub mean: f64,
    /// `∫ |∇u|²`
    pub h1_seminorm: f64,
    /// `∫ (Δu)²`
    pub h2_proxy: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Moser–Trudinger gap at the group's `k`.
    pub mt_gap_k: f64,
    /// Largest share of `∫e^u` inside a ball of radius `i(M)/4`.
    pub concentration: f64,
}

impl DiagnosticsRecord {
    /// Values in [`CSV_COLUMNS`] order.
    pub fn to_row(&self) -> [f64; 12] {
        [
            self.t,
            self.mass,
            self.energy,
            self.dissipation,
            self.residual,
            self.mean,
            self.h1_seminorm,
            self.h2_proxy,
            self.u_min,
            self.u_max,
            self.mt_gap_k,
            self.concentration,
        ]
    }

    pub fn from_row(row: [f64; 12]) -> Self {
        DiagnosticsRecord {
            t: row[0],
            mass: row[1],
            energy: row[2],
            dissipation: row[3],
            residual: row[4],
            mean: row[5],
            h1_seminorm: row[6],
            h2_proxy: row[7],
            u_min: row[8],
            u_max: row[9],
            mt_gap_k: row[10],
            concentration: row[11],
        }
    }
}

/// `E_f(u) = ½∫|∇u|² + (ρ/|M|)∫u − ρ ln ∫ f e^u`, with the logarithm taken in
/// overflow-free form.
pub fn energy(mesh: &MeshGeometry, rho: f64, f: &Field, u: &Field) -> Result<f64, NumericError> {
    let log_s = math::log_sum_exp_weighted(u.values(), &weighted(mesh, f));
    let e = energy_with_log_mass(mesh, rho, u.values(), log_s);
    if e.is_finite() {
        Ok(e)
    } else {
        Err(NumericError::NonFinite)
    }
}

fn weighted(mesh: &MeshGeometry, f: &Field) -> Vec<f64> {
    f.values()
        .iter()
        .zip(mesh.quad_weights())
        .map(|(a, w)| a * w)
        .collect()
}

pub(crate) fn energy_with_log_mass(mesh: &MeshGeometry, rho: f64, u: &[f64], log_s: f64) -> f64 {
    let dirichlet = mesh.dirichlet_energy_values(u);
    0.5 * dirichlet + rho / mesh.volume() * mesh.integrate_values(u) - rho * log_s
}

/// Same value, with the Dirichlet term summed by parts from a cached `Δu`.
pub(crate) fn energy_from_evaluation(mesh: &MeshGeometry, rho: f64, u: &[f64], eval: &Evaluation) -> f64 {
    let (mut dirichlet, mut total) = (0.0, 0.0);
    for ((v, l), w) in u.iter().zip(&eval.lap).zip(mesh.quad_weights()) {
        dirichlet -= w * v * l;
        total += w * v;
    }
    0.5 * dirichlet + rho / mesh.volume() * total - rho * eval.log_s
}

/// `y = ∫ u̇² e^u dV`.
pub fn dissipation(mesh: &MeshGeometry, u: &Field, u_dot: &Field) -> f64 {
    assert_eq!(u.mesh(), u_dot.mesh(), "fields live on different meshes");
    u.values()
        .iter()
        .zip(u_dot.values())
        .zip(mesh.quad_weights())
        .map(|((&v, &d), &w)| w * d * d * math::exp(v))
        .sum()
}

/// Moser–Trudinger quantities for one field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MtFunctional {
    /// `ln ∫ e^{u − ū} dV`
    pub lhs: f64,
    /// `∫ |∇u|² dV`
    pub dirichlet: f64,
    /// `lhs − dirichlet / (16kπ)`
    pub gap: f64,
}

pub fn mt_functional(mesh: &MeshGeometry, u: &Field, k: usize) -> MtFunctional {
    assert!(k >= 1, "orbit cardinality k must be at least 1");
    let mean = mesh.mean(u);
    let shifted: Vec<f64> = u.values().iter().map(|v| v - mean).collect();
    let lhs = math::log_sum_exp_weighted(&shifted, mesh.quad_weights());
    let dirichlet = mesh.dirichlet_energy(u);
    MtFunctional {
        lhs,
        dirichlet,
        gap: lhs - dirichlet / (16.0 * k as f64 * PI),
    }
}

/// `ln(λ² / (1 + λ² d(x, c)²)²)` shifted to zero mean.
pub fn make_bubble(mesh: &MeshGeometry, centre: usize, lam: f64) -> Field {
    assert!(lam >= 1.0, "bubble parameter must be at least 1");
    let lam2 = lam * lam;
    let raw: Vec<f64> = (0..mesh.node_count())
        .map(|x| {
            let d = mesh.geodesic_distance(x, centre);
            let q = 1.0 + lam2 * d * d;
            math::ln(lam2) - 2.0 * math::ln(q)
        })
        .collect();
    zero_mean(mesh, raw)
}

/// G-invariant multi-bubble `ln Σ_{y ∈ O_G(c)} e^{bubble_y}`, zero mean. Mass is
/// split evenly over the orbit of `centre`.
pub fn make_orbit_bubble(
    mesh: &MeshGeometry,
    group: &GroupAction,
    centre: usize,
    lam: f64,
) -> Field {
    let bubbles: Vec<Field> = group
        .orbit(centre)
        .into_iter()
        .map(|c| make_bubble(mesh, c, lam))
        .collect();
    let raw: Vec<f64> = (0..mesh.node_count())
        .map(|x| {
            let top = bubbles
                .iter()
                .map(|b| b.values()[x])
                .fold(f64::NEG_INFINITY, f64::max);
            top + math::ln(bubbles.iter().map(|b| math::exp(b.values()[x] - top)).sum())
        })
        .collect();
    let mut values = zero_mean(mesh, raw).into_values();
    group.symmetrize_in_place(&mut values);
    Field::from_raw(mesh.spec(), values)
}

fn zero_mean(mesh: &MeshGeometry, mut raw: Vec<f64>) -> Field {
    let mean = mesh.integrate_values(&raw) / mesh.volume();
    for v in &mut raw {
        *v -= mean;
    }
    Field::from_raw(mesh.spec(), raw)
}

/// Least-squares slope of `ys` against `xs`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Cached per-run data for building records.
#[derive(Clone, Debug)]
pub struct DiagnosticsContext {
    k: usize,
    stencil: BallStencil,
}

impl DiagnosticsContext {
    pub fn new(mesh: &MeshGeometry, k: usize) -> Self {
        let r = mesh.injectivity_radius() / 4.0;
        DiagnosticsContext {
            k: k.max(1),
            stencil: symmetry::ball_stencil_checked(mesh, r).expect("i(M)/4 is a valid radius"),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub(crate) fn record_from(
        &self,
        mesh: &MeshGeometry,
        rho: f64,
        t: f64,
        u: &[f64],
        eval: &Evaluation,
    ) -> DiagnosticsRecord {
        let field = Field::from_raw(mesh.spec(), u.to_vec());
        let mass = mesh.integrate_values(&eval.exp_u);
        let mt = mt_functional(mesh, &field, self.k);
        let dissipation: f64 = eval
            .rhs
            .iter()
            .zip(&eval.exp_u)
            .zip(mesh.quad_weights())
            .map(|((&d, &e), &w)| w * d * d * e)
            .sum();
        let h2: f64 = eval
            .lap
            .iter()
            .zip(mesh.quad_weights())
            .map(|(&l, &w)| w * l * l)
            .sum();
        let (_, concentration) = symmetry::concentration_with_stencil(mesh, u, &self.stencil);
        DiagnosticsRecord {
            t,
            mass,
            energy: energy_from_evaluation(mesh, rho, u, eval),
            dissipation,
            residual: eval.residual(mesh, rho),
            mean: mesh.integrate_values(u) / mesh.volume(),
            h1_seminorm: mt.dirichlet,
            h2_proxy: h2,
            u_min: field.min(),
            u_max: field.max(),
            mt_gap_k: mt.gap,
            concentration,
        }
    }

    pub fn record(
        &self,
        mesh: &MeshGeometry,
        rho: f64,
        f: &Field,
        t: f64,
        u: &Field,
    ) -> Result<DiagnosticsRecord, NumericError> {
        let eval = Evaluation::new(mesh, rho, f.values(), u.values())?;
        Ok(self.record_from(mesh, rho, t, u.values(), &eval))
    }
}

/// Fills every [`DiagnosticsRecord`] field from `state`; `k` is the minimum orbit
/// cardinality used for the Moser–Trudinger gap.
pub fn sobolev_record(
    mesh: &MeshGeometry,
    rho: f64,
    f: &Field,
    state: &flow::FlowState,
    k: usize,
) -> Result<DiagnosticsRecord, NumericError> {
    DiagnosticsContext::new(mesh, k).record(mesh, rho, f, state.t, &state.u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus() -> MeshGeometry {
        MeshGeometry::torus_n(32).unwrap()
    }

    #[test]
    fn energy_of_zero_with_unit_weight() {
        let m = torus();
        let rho = 3.0;
        let e = energy(&m, rho, &Field::constant(&m, 1.0), &Field::zeros(&m)).unwrap();
        assert!((e + rho * math::ln(4.0 * PI * PI)).abs() < 1e-12);
    }

    #[test]
    fn energy_ignores_constants() {
        let m = torus();
        let f = Field::from_fn(&m, |x, _| 1.0 + 0.5 * math::cos(x));
        let u = Field::from_fn(&m, |x, y| math::sin(x) * math::cos(2.0 * y));
        let e0 = energy(&m, 4.0 * PI, &f, &u).unwrap();
        let e1 = energy(&m, 4.0 * PI, &f, &u.map(|v| v + 7.5)).unwrap();
        assert!((e0 - e1).abs() <= 1e-10 * e0.abs());
    }

    #[test]
    fn energy_without_rho_is_half_dirichlet() {
        let m = torus();
        let u = Field::from_fn(&m, |x, _| math::cos(x));
        let e = energy(&m, 0.0, &Field::constant(&m, 1.0), &u).unwrap();
        assert!((e - 0.5 * m.dirichlet_energy(&u)).abs() < 1e-14);
    }

    #[test]
    fn dissipation_vanishes_without_motion() {
        let m = torus();
        let u = Field::from_fn(&m, |x, _| math::cos(x));
        assert_eq!(dissipation(&m, &u, &Field::zeros(&m)), 0.0);
    }

    #[test]
    fn mt_of_constant() {
        let m = torus();
        let mt = mt_functional(&m, &Field::constant(&m, 2.0), 1);
        assert!((mt.lhs - math::ln(m.volume())).abs() < 1e-13);
        assert_eq!(mt.dirichlet, 0.0);
        assert_eq!(mt.gap, mt.lhs);
    }

    #[test]
    fn mt_of_cosine() {
        let m = MeshGeometry::torus_n(64).unwrap();
        let u = Field::from_fn(&m, |x, _| math::cos(x));
        let mt = mt_functional(&m, &u, 1);
        // ∫ e^{cos x} over the torus is 4π² I₀(1).
        let bessel_i0_1 = 1.266_065_877_752_008_4;
        assert!((mt.lhs - math::ln(4.0 * PI * PI * bessel_i0_1)).abs() < 1e-12);
        assert!((mt.dirichlet - 2.0 * PI * PI).abs() < 1e-10);
        assert!(mt.gap.is_finite());
    }

    #[test]
    fn mt_gap_shift_invariant() {
        let m = torus();
        let u = Field::from_fn(&m, |x, y| math::sin(x + y));
        let a = mt_functional(&m, &u, 2);
        let b = mt_functional(&m, &u.map(|v| v - 3.0), 2);
        assert!((a.gap - b.gap).abs() < 1e-12);
    }

    #[test]
    fn bubbles_have_zero_mean() {
        let m = MeshGeometry::torus_n(64).unwrap();
        for lam in [1.0, 4.0, 32.0] {
            let b = make_bubble(&m, 100, lam);
            assert!(m.mean(&b).abs() < 1e-12);
        }
        let b = make_bubble(&m, 0, 1.0);
        assert!(b.values().iter().all(|v| v.abs() <= 10.0));
    }

    #[test]
    fn slope_of_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        assert!((fitted_slope(&xs, &ys) - 2.0).abs() < 1e-15);
    }
}
