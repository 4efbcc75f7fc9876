//! Discrete surfaces: the flat torus `[0, 2π)²` and the unit sphere.
//!
//! The torus carries an exact spectral Laplacian. The sphere uses a cell-centred
//! latitude/longitude grid with a second-order flux-form Laplace–Beltrami operator
//! whose pole faces carry zero flux, so there is no pole node and no coordinate
//! singularity.
//!
//! Both operators satisfy the discrete divergence theorem `Σ w_i (Δu)_i = 0` and are
//! self-adjoint with respect to the quadrature weights `w_i`. The discrete volume
//! `|M| = Σ w_i` is used everywhere a volume appears.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use thiserror::Error;

use crate::fft::{wavenumber, Complex, Fft2d};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeshKind {
    Torus,
    Sphere,
}

impl fmt::Display for MeshKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshKind::Torus => f.write_str("torus"),
            MeshKind::Sphere => f.write_str("sphere"),
        }
    }
}

/// Mesh kind plus resolution. Doubles as the identity fields are tagged with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeshSpec {
    /// `n × n` grid over `[0, 2π)²`.
    Torus { n: usize },
    /// Cell-centred colatitudes `θ_j = (j + ½)π / n_theta`, longitudes `φ_i = 2πi / n_phi`.
    Sphere { n_theta: usize, n_phi: usize },
}

impl MeshSpec {
    pub fn kind(&self) -> MeshKind {
        match self {
            MeshSpec::Torus { .. } => MeshKind::Torus,
            MeshSpec::Sphere { .. } => MeshKind::Sphere,
        }
    }

    /// `(rows, cols)` of the grid; the second coordinate runs fastest.
    pub fn grid_dims(&self) -> (usize, usize) {
        match *self {
            MeshSpec::Torus { n } => (n, n),
            MeshSpec::Sphere { n_theta, n_phi } => (n_theta, n_phi),
        }
    }

    pub fn node_count(&self) -> usize {
        let (rows, cols) = self.grid_dims();
        rows * cols
    }
}

impl fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MeshSpec::Torus { n } => write!(f, "torus {n}"),
            MeshSpec::Sphere { n_theta, n_phi } => write!(f, "sphere {n_theta} {n_phi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeshError {
    #[error("invalid {kind} resolution: {constraint}")]
    Resolution {
        kind: MeshKind,
        constraint: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("field has {got} values but mesh {mesh} has {expected} nodes")]
    Length {
        mesh: MeshSpec,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },
}

/// Real values sampled at every node of one mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    mesh: MeshSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: &MeshGeometry, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != mesh.node_count() {
            return Err(FieldError::Length {
                mesh: mesh.spec(),
                expected: mesh.node_count(),
                got: values.len(),
            });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FieldError::NonFinite { node, value });
        }
        Ok(Field {
            mesh: mesh.spec(),
            values,
        })
    }

    /// Skips the finiteness scan; callers guarantee it.
    pub(crate) fn from_raw(mesh: MeshSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), mesh.node_count());
        Field { mesh, values }
    }

    pub fn constant(mesh: &MeshGeometry, value: f64) -> Self {
        assert!(value.is_finite(), "constant field must be finite");
        Field::from_raw(mesh.spec(), vec![value; mesh.node_count()])
    }

    pub fn zeros(mesh: &MeshGeometry) -> Self {
        Field::constant(mesh, 0.0)
    }

    /// Evaluates `func` at the surface coordinates of every node.
    pub fn from_fn(mesh: &MeshGeometry, mut func: impl FnMut(f64, f64) -> f64) -> Self {
        let values = mesh.coords.iter().map(|c| func(c[0], c[1])).collect();
        Field::new(mesh, values).expect("from_fn produced a non-finite value")
    }

    pub fn mesh(&self) -> MeshSpec {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, mut func: impl FnMut(f64) -> f64) -> Field {
        Field::from_raw(self.mesh, self.values.iter().map(|&v| func(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, mut func: impl FnMut(f64, f64) -> f64) -> Field {
        assert_eq!(self.mesh, other.mesh, "fields live on different meshes");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| func(a, b))
            .collect();
        Field::from_raw(self.mesh, values)
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        assert_eq!(self.mesh, other.mesh, "fields live on different meshes");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
enum Operator {
    Torus {
        fft: Fft2d,
        /// `-(m² + n²)` per spectral bin.
        symbol: Vec<f64>,
        /// `-m²` per bin of a single line.
        second: Vec<f64>,
    },
    Sphere {
        /// Per ring: coefficient toward the ring above (larger θ), below, and along φ.
        coef_up: Vec<f64>,
        coef_down: Vec<f64>,
        coef_phi: Vec<f64>,
        /// `sin θ` at faces `θ = fπ/n_theta`, `f = 0..=n_theta`; zero at both poles.
        sin_face: Vec<f64>,
        sin_center: Vec<f64>,
        dtheta: f64,
        dphi: f64,
        unit: Vec<[f64; 3]>,
    },
}

/// Immutable discrete surface with quadrature, operators and metric data.
#[derive(Clone, Debug)]
pub struct MeshGeometry {
    spec: MeshSpec,
    coords: Vec<[f64; 2]>,
    weights: Vec<f64>,
    volume: f64,
    injectivity_radius: f64,
    lambda1: f64,
    op: Operator,
}

impl MeshGeometry {
    pub fn build(spec: MeshSpec) -> Result<Self, MeshError> {
        match spec {
            MeshSpec::Torus { n } => {
                if n < 8 {
                    return Err(MeshError::Resolution {
                        kind: MeshKind::Torus,
                        constraint: "N must be at least 8",
                    });
                }
                if n % 2 != 0 {
                    return Err(MeshError::Resolution {
                        kind: MeshKind::Torus,
                        constraint: "N must be even",
                    });
                }
                Ok(Self::torus(n))
            }
            MeshSpec::Sphere { n_theta, n_phi } => {
                let constraint = if n_theta < 8 {
                    Some("n_theta must be at least 8")
                } else if n_theta % 2 != 0 {
                    Some("n_theta must be even")
                } else if n_phi < 8 {
                    Some("n_phi must be at least 8")
                } else if n_phi % 2 != 0 {
                    Some("n_phi must be even")
                } else {
                    None
                };
                if let Some(constraint) = constraint {
                    return Err(MeshError::Resolution {
                        kind: MeshKind::Sphere,
                        constraint,
                    });
                }
                Ok(Self::sphere(n_theta, n_phi))
            }
        }
    }

    pub fn torus_n(n: usize) -> Result<Self, MeshError> {
        Self::build(MeshSpec::Torus { n })
    }

    pub fn sphere_n(n_theta: usize, n_phi: usize) -> Result<Self, MeshError> {
        Self::build(MeshSpec::Sphere { n_theta, n_phi })
    }

    fn torus(n: usize) -> Self {
        let h = 2.0 * PI / n as f64;
        let mut coords = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                coords.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut symbol = Vec::with_capacity(n * n);
        for j in 0..n {
            let ky = wavenumber(j, n) as f64;
            for i in 0..n {
                let kx = wavenumber(i, n) as f64;
                symbol.push(-(kx * kx + ky * ky));
            }
        }
        MeshGeometry {
            spec: MeshSpec::Torus { n },
            coords,
            weights: vec![h * h; n * n],
            volume: (n * n) as f64 * h * h,
            injectivity_radius: PI,
            lambda1: 1.0,
            op: Operator::Torus {
                fft: Fft2d::new(n),
                symbol,
                second: (0..n).map(|i| -((wavenumber(i, n) * wavenumber(i, n)) as f64)).collect(),
            },
        }
    }

    fn sphere(n_theta: usize, n_phi: usize) -> Self {
        let dtheta = PI / n_theta as f64;
        let dphi = 2.0 * PI / n_phi as f64;
        let half = n_theta / 2;

        // Mirror-symmetric tables so θ → π − θ maps weights and coefficients exactly.
        let mut sin_center = vec![0.0; n_theta];
        let mut cos_center = vec![0.0; n_theta];
        for j in 0..half {
            let theta = (j as f64 + 0.5) * dtheta;
            sin_center[j] = math::sin(theta);
            sin_center[n_theta - 1 - j] = sin_center[j];
            cos_center[j] = math::cos(theta);
            cos_center[n_theta - 1 - j] = -cos_center[j];
        }
        let mut sin_face = vec![0.0; n_theta + 1];
        for f in 1..=half {
            sin_face[f] = math::sin(f as f64 * dtheta);
            sin_face[n_theta - f] = sin_face[f];
        }
        sin_face[half] = 1.0;

        let mut coef_up = vec![0.0; n_theta];
        let mut coef_down = vec![0.0; n_theta];
        let mut coef_phi = vec![0.0; n_theta];
        for j in 0..n_theta {
            let s = sin_center[j];
            coef_up[j] = sin_face[j + 1] / (s * dtheta * dtheta);
            coef_down[j] = sin_face[j] / (s * dtheta * dtheta);
            coef_phi[j] = 1.0 / (s * s * dphi * dphi);
        }

        let mut coords = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let mut unit = Vec::with_capacity(n_theta * n_phi);
        for j in 0..n_theta {
            let theta = (j as f64 + 0.5) * dtheta;
            for i in 0..n_phi {
                let phi = i as f64 * dphi;
                coords.push([theta, phi]);
                weights.push(sin_center[j] * dtheta * dphi);
                unit.push([
                    sin_center[j] * math::cos(phi),
                    sin_center[j] * math::sin(phi),
                    cos_center[j],
                ]);
            }
        }
        let volume = weights.iter().sum();
        MeshGeometry {
            spec: MeshSpec::Sphere { n_theta, n_phi },
            coords,
            weights,
            volume,
            injectivity_radius: PI,
            lambda1: 2.0,
            op: Operator::Sphere {
                coef_up,
                coef_down,
                coef_phi,
                sin_face,
                sin_center,
                dtheta,
                dphi,
                unit,
            },
        }
    }

    pub fn spec(&self) -> MeshSpec {
        self.spec
    }

    pub fn kind(&self) -> MeshKind {
        self.spec.kind()
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        self.spec.grid_dims()
    }

    /// Surface coordinates `(x, y)` on the torus or `(θ, φ)` on the sphere.
    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let c = self.coords[node];
        (c[0], c[1])
    }

    /// Node index of grid position (`row`, `col`), `col` running fastest.
    pub fn node_index(&self, row: usize, col: usize) -> usize {
        let (_, cols) = self.grid_dims();
        row * cols + col
    }

    pub fn grid_position(&self, node: usize) -> (usize, usize) {
        let (_, cols) = self.grid_dims();
        (node / cols, node % cols)
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Discrete `|M|`, the sum of the quadrature weights.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn injectivity_radius(&self) -> f64 {
        self.injectivity_radius
    }

    /// First nonzero eigenvalue of the continuum Laplacian.
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    /// Upper bound on the spectral radius of the discrete Laplacian.
    ///
    /// Exact on the torus (`2 (N/2)²`); a Gershgorin bound on the sphere.
    pub fn laplacian_spectral_radius(&self) -> f64 {
        match &self.op {
            Operator::Torus { .. } => {
                let MeshSpec::Torus { n } = self.spec else {
                    unreachable!()
                };
                let half = (n / 2) as f64;
                2.0 * half * half
            }
            Operator::Sphere {
                coef_up,
                coef_down,
                coef_phi,
                ..
            } => (0..coef_up.len())
                .map(|j| 2.0 * (coef_up[j] + coef_down[j] + 2.0 * coef_phi[j]))
                .fold(0.0, f64::max),
        }
    }

    fn check(&self, field: &Field) {
        assert_eq!(
            field.mesh, self.spec,
            "contract violation: field belongs to mesh {} but operator runs on {}",
            field.mesh, self.spec
        );
    }

    pub fn laplacian(&self, u: &Field) -> Field {
        self.check(u);
        let mut out = vec![0.0; u.len()];
        self.laplacian_into(&u.values, &mut out);
        Field::from_raw(self.spec, out)
    }

    /// Slice form of [`MeshGeometry::laplacian`]; `out` is overwritten.
    pub fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.node_count());
        assert_eq!(out.len(), self.node_count());
        match &self.op {
            Operator::Torus { fft, second, .. } => {
                // Δ = ∂xx + ∂yy, each applied along lines with two real lines
                // packed into one complex transform (the symbol is real and even).
                let n = fft.side();
                let plan = fft.plan();
                let inv_n = 1.0 / n as f64;
                let mut line = vec![Complex::ZERO; n];
                let mut scratch = vec![Complex::ZERO; n];
                let mut pass = |index: &dyn Fn(usize, usize) -> usize, out: &mut [f64]| {
                    for pair in (0..n).step_by(2) {
                        for (i, z) in line.iter_mut().enumerate() {
                            *z = Complex::new(u[index(pair, i)], u[index(pair + 1, i)]);
                        }
                        plan.forward(&mut line, &mut scratch);
                        for (z, &s) in line.iter_mut().zip(second) {
                            *z = z.scale(s * inv_n);
                        }
                        plan.inverse(&mut line, &mut scratch);
                        for (i, z) in line.iter().enumerate() {
                            out[index(pair, i)] += z.re;
                            out[index(pair + 1, i)] += z.im;
                        }
                    }
                };
                out.iter_mut().for_each(|o| *o = 0.0);
                pass(&|row, i| row * n + i, out);
                pass(&|col, j| j * n + col, out);
            }
            Operator::Sphere {
                coef_up,
                coef_down,
                coef_phi,
                ..
            } => {
                let (nt, np) = self.grid_dims();
                for j in 0..nt {
                    let row = j * np;
                    for i in 0..np {
                        let c = u[row + i];
                        let east = u[row + (i + 1) % np];
                        let west = u[row + (i + np - 1) % np];
                        let mut acc = coef_phi[j] * ((east - c) + (west - c));
                        if j + 1 < nt {
                            acc += coef_up[j] * (u[row + np + i] - c);
                        }
                        if j > 0 {
                            acc += coef_down[j] * (u[row - np + i] - c);
                        }
                        out[row + i] = acc;
                    }
                }
            }
        }
    }

    /// Diagonal of the discrete Laplacian (constant `0` mode aside).
    pub fn laplacian_diagonal(&self) -> Vec<f64> {
        match &self.op {
            Operator::Torus { symbol, .. } => {
                let trace = symbol.iter().sum::<f64>() / symbol.len() as f64;
                vec![trace; self.node_count()]
            }
            Operator::Sphere {
                coef_up,
                coef_down,
                coef_phi,
                ..
            } => {
                let (nt, np) = self.grid_dims();
                let mut d = Vec::with_capacity(nt * np);
                for j in 0..nt {
                    let v = -(coef_up[j] + coef_down[j] + 2.0 * coef_phi[j]);
                    d.extend(core::iter::repeat_n(v, np));
                }
                d
            }
        }
    }

    /// Exact inverse of the spectral Laplacian on mean-zero fields (torus only).
    /// The constant mode of the output is zero.
    pub fn inverse_laplacian_into(&self, rhs: &[f64], out: &mut [f64]) -> bool {
        let Operator::Torus { fft, symbol, .. } = &self.op else {
            return false;
        };
        let n2 = rhs.len() as f64;
        let mut grid: Vec<Complex> = rhs.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.forward(&mut grid);
        for (z, &s) in grid.iter_mut().zip(symbol) {
            *z = if s == 0.0 { Complex::ZERO } else { z.scale(1.0 / s) };
        }
        fft.inverse(&mut grid);
        for (o, z) in out.iter_mut().zip(&grid) {
            *o = z.re / n2;
        }
        true
    }

    pub fn integrate(&self, u: &Field) -> f64 {
        self.check(u);
        self.integrate_values(&u.values)
    }

    pub fn integrate_values(&self, u: &[f64]) -> f64 {
        assert_eq!(u.len(), self.node_count());
        u.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Quadrature mean `∫u / |M|`.
    pub fn mean(&self, u: &Field) -> f64 {
        self.integrate(u) / self.volume
    }

    /// `∫|∇u|² dV` (not halved). Spectral Parseval sum on the torus, face sums on
    /// the sphere; both equal `−∫u Δu` to roundoff.
    pub fn dirichlet_energy(&self, u: &Field) -> f64 {
        self.check(u);
        self.dirichlet_energy_values(&u.values)
    }

    pub fn dirichlet_energy_values(&self, u: &[f64]) -> f64 {
        assert_eq!(u.len(), self.node_count());
        match &self.op {
            Operator::Torus { fft, symbol, .. } => {
                let n2 = u.len() as f64;
                let mut grid: Vec<Complex> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
                fft.forward(&mut grid);
                let sum: f64 = grid
                    .iter()
                    .zip(symbol)
                    .map(|(z, &s)| -s * z.norm_sqr())
                    .sum();
                sum * self.weights[0] / n2
            }
            Operator::Sphere {
                sin_face,
                sin_center,
                dtheta,
                dphi,
                ..
            } => {
                let (nt, np) = self.grid_dims();
                let mut total = 0.0;
                for j in 0..nt {
                    let row = j * np;
                    let along = dtheta / (sin_center[j] * dphi);
                    for i in 0..np {
                        let d = u[row + (i + 1) % np] - u[row + i];
                        total += along * d * d;
                    }
                    if j + 1 < nt {
                        let across = sin_face[j + 1] * dphi / dtheta;
                        for i in 0..np {
                            let d = u[row + np + i] - u[row + i];
                            total += across * d * d;
                        }
                    }
                }
                total
            }
        }
    }

    pub fn geodesic_distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        match (&self.op, self.spec) {
            (Operator::Torus { .. }, MeshSpec::Torus { n }) => {
                let (ja, ia) = self.grid_position(a);
                let (jb, ib) = self.grid_position(b);
                let h = 2.0 * PI / n as f64;
                let dx = wrapped_offset(ia as i64 - ib as i64, n as i64) as f64;
                let dy = wrapped_offset(ja as i64 - jb as i64, n as i64) as f64;
                h * math::sqrt(dx * dx + dy * dy)
            }
            (Operator::Sphere { unit, .. }, _) => {
                let (p, q) = (unit[a], unit[b]);
                let dot = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
                math::acos(dot.clamp(-1.0, 1.0))
            }
            _ => unreachable!(),
        }
    }

    /// Nodes within geodesic distance `radius` of each possible centre, stored
    /// relative to one reference centre per grid row.
    pub fn ball_stencil(&self, radius: f64) -> BallStencil {
        let (rows, cols) = self.grid_dims();
        let reference_rows = match self.kind() {
            MeshKind::Torus => 1,
            MeshKind::Sphere => rows,
        };
        let mut offsets = Vec::with_capacity(reference_rows);
        for r in 0..reference_rows {
            let centre = self.node_index(r, 0);
            let mut members = Vec::new();
            for node in 0..self.node_count() {
                if self.geodesic_distance(centre, node) <= radius {
                    let (row, col) = self.grid_position(node);
                    members.push((row, col));
                }
            }
            offsets.push(members);
        }
        BallStencil {
            kind: self.kind(),
            rows,
            cols,
            offsets,
        }
    }

    #[doc(hidden)]
    /// Fault-injection hook: scales one quadrature weight, breaking the
    /// operator's self-adjointness. Only for exercising verification checks.
    pub fn corrupt_weight_for_testing(&mut self, node: usize, factor: f64) {
        self.weights[node] *= factor;
        self.volume = self.weights.iter().sum();
    }
}

fn wrapped_offset(d: i64, n: i64) -> i64 {
    [-1i64, 0, 1]
        .iter()
        .map(|k| (d + k * n).abs())
        .min()
        .unwrap_or(d.abs())
}

/// Precomputed geodesic balls; see [`MeshGeometry::ball_stencil`].
#[derive(Clone, Debug)]
pub struct BallStencil {
    kind: MeshKind,
    rows: usize,
    cols: usize,
    offsets: Vec<Vec<(usize, usize)>>,
}

impl BallStencil {
    pub fn members(&self, centre: usize) -> impl Iterator<Item = usize> + '_ {
        let (row, col) = (centre / self.cols, centre % self.cols);
        let (list, row_shift) = match self.kind {
            MeshKind::Torus => (&self.offsets[0], row),
            MeshKind::Sphere => (&self.offsets[row], 0),
        };
        let (rows, cols) = (self.rows, self.cols);
        list.iter()
            .map(move |&(r, c)| ((r + row_shift) % rows) * cols + (c + col) % cols)
    }

    pub fn len_at(&self, centre: usize) -> usize {
        match self.kind {
            MeshKind::Torus => self.offsets[0].len(),
            MeshKind::Sphere => self.offsets[centre / self.cols].len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_odd_resolutions() {
        assert!(matches!(
            MeshGeometry::torus_n(6),
            Err(MeshError::Resolution { constraint, .. }) if constraint.contains("at least 8")
        ));
        assert!(matches!(
            MeshGeometry::torus_n(9),
            Err(MeshError::Resolution { constraint, .. }) if constraint.contains("even")
        ));
        assert!(MeshGeometry::sphere_n(8, 9).is_err());
        assert!(MeshGeometry::sphere_n(7, 16).is_err());
        assert!(MeshGeometry::sphere_n(8, 8).is_ok());
    }

    #[test]
    fn torus_volume_and_radius() {
        let m = MeshGeometry::torus_n(64).unwrap();
        assert!((m.volume() - 4.0 * PI * PI).abs() < 1e-12);
        assert_eq!(m.injectivity_radius(), PI);
        assert_eq!(m.node_count(), 64 * 64);
    }

    #[test]
    fn sphere_volume_close_to_four_pi() {
        let m = MeshGeometry::sphere_n(64, 128).unwrap();
        let exact = 4.0 * PI;
        assert!((m.volume() - exact).abs() <= 1e-2 * exact);
        assert_eq!(m.node_count(), 64 * 128);
        assert!(m.quad_weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn sphere_tables_are_mirror_exact() {
        let m = MeshGeometry::sphere_n(16, 32).unwrap();
        let (nt, np) = m.grid_dims();
        for j in 0..nt {
            for i in 0..np {
                let a = m.node_index(j, i);
                let b = m.node_index(nt - 1 - j, i);
                assert_eq!(m.quad_weights()[a], m.quad_weights()[b]);
            }
        }
    }

    #[test]
    fn torus_laplacian_of_cosine() {
        let m = MeshGeometry::torus_n(64).unwrap();
        let u = Field::from_fn(&m, |x, _| math::cos(x));
        let lap = m.laplacian(&u);
        let expected = u.map(|v| -v);
        assert!(lap.max_abs_diff(&expected) <= 1e-12);
    }

    #[test]
    fn constants_are_harmonic() {
        for m in [
            MeshGeometry::torus_n(32).unwrap(),
            MeshGeometry::sphere_n(16, 32).unwrap(),
        ] {
            let lap = m.laplacian(&Field::constant(&m, 5.0));
            assert!(lap.values().iter().all(|v| v.abs() <= 1e-12));
        }
    }

    #[test]
    fn sphere_laplacian_of_cos_theta() {
        let m = MeshGeometry::sphere_n(64, 128).unwrap();
        let u = Field::from_fn(&m, |theta, _| math::cos(theta));
        let lap = m.laplacian(&u);
        let err = lap.zip_map(&u, |l, v| l + 2.0 * v);
        assert!(err.values().iter().all(|e| e.abs() <= 5e-3), "max err {}", err.max());
    }

    #[test]
    fn integrals() {
        let t = MeshGeometry::torus_n(32).unwrap();
        assert!((t.integrate(&Field::constant(&t, 1.0)) - 4.0 * PI * PI).abs() < 1e-12);
        assert!(t.integrate(&Field::from_fn(&t, |x, _| math::cos(x))).abs() < 1e-12);
        let s = MeshGeometry::sphere_n(64, 128).unwrap();
        let c2 = Field::from_fn(&s, |th, _| math::cos(th) * math::cos(th));
        assert!((s.integrate(&c2) - 4.0 * PI / 3.0).abs() < (PI / 64.0).powi(2));
    }

    #[test]
    fn dirichlet_energies() {
        let t = MeshGeometry::torus_n(64).unwrap();
        assert_eq!(t.dirichlet_energy(&Field::constant(&t, 3.0)), 0.0);
        let d = t.dirichlet_energy(&Field::from_fn(&t, |x, _| math::cos(x)));
        assert!((d - 2.0 * PI * PI).abs() < 1e-10);
        let s = MeshGeometry::sphere_n(64, 128).unwrap();
        let d = s.dirichlet_energy(&Field::from_fn(&s, |th, _| math::cos(th)));
        assert!((d - 8.0 * PI / 3.0).abs() < 1e-2);
        assert!(s.dirichlet_energy(&Field::constant(&s, -2.0)).abs() < 1e-20);
    }

    #[test]
    fn torus_distances() {
        let m = MeshGeometry::torus_n(64).unwrap();
        let h = 2.0 * PI / 64.0;
        let origin = m.node_index(0, 0);
        assert!((m.geodesic_distance(origin, m.node_index(0, 32)) - PI).abs() < 1e-15);
        assert!((m.geodesic_distance(origin, m.node_index(0, 63)) - h).abs() < 1e-15);
        assert_eq!(m.geodesic_distance(origin, origin), 0.0);
    }

    #[test]
    fn sphere_antipode_distance() {
        let m = MeshGeometry::sphere_n(64, 128).unwrap();
        let a = m.node_index(0, 5);
        let b = m.node_index(63, 5 + 64);
        let dtheta = PI / 64.0;
        assert!((m.geodesic_distance(a, b) - PI).abs() <= dtheta);
    }

    #[test]
    fn field_rejects_bad_input() {
        let m = MeshGeometry::torus_n(8).unwrap();
        assert!(matches!(
            Field::new(&m, vec![0.0; 3]),
            Err(FieldError::Length { got: 3, .. })
        ));
        let mut v = vec![0.0; 64];
        v[7] = f64::NAN;
        assert!(matches!(
            Field::new(&m, v),
            Err(FieldError::NonFinite { node: 7, .. })
        ));
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn mesh_mismatch_panics() {
        let a = MeshGeometry::torus_n(8).unwrap();
        let b = MeshGeometry::torus_n(16).unwrap();
        let _ = b.laplacian(&Field::zeros(&a));
    }

    #[test]
    fn ball_stencil_matches_direct_scan() {
        for m in [
            MeshGeometry::torus_n(16).unwrap(),
            MeshGeometry::sphere_n(8, 16).unwrap(),
        ] {
            let stencil = m.ball_stencil(0.9);
            for centre in [0, 5, m.node_count() - 3] {
                let mut got: Vec<usize> = stencil.members(centre).collect();
                got.sort_unstable();
                let direct: Vec<usize> = (0..m.node_count())
                    .filter(|&k| m.geodesic_distance(centre, k) <= 0.9)
                    .collect();
                // Sphere rows are rotation-invariant only up to roundoff of the
                // unit vectors, so compare sizes with a one-node slack there.
                if m.kind() == MeshKind::Torus {
                    assert_eq!(got, direct);
                } else {
                    assert!(got.len().abs_diff(direct.len()) <= 1);
                }
            }
        }
    }
}
