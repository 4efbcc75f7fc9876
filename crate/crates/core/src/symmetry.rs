//! Finite isometry groups acting on a mesh as exact node permutations.
//!
//! Only grid symmetries are admitted: translations and reflections of the torus
//! grid, longitude rotations and the equatorial/antipodal reflections of the
//! sphere grid. Every admitted map permutes nodes and preserves quadrature
//! weights bit for bit, so invariance is a machine-exact notion.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::math;
use crate::mesh::{Field, MeshGeometry, MeshKind, MeshSpec};

/// Default bound on the number of group elements materialized by closure.
pub const DEFAULT_GROUP_CAP: usize = 4096;

/// Largest orbit searched exhaustively by [`separated_orbit_points`].
pub const EXHAUSTIVE_ORBIT_LIMIT: usize = 12;

/// One entry of the generator catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorSpec {
    /// Torus translation by `(dx, dy)` grid steps.
    Shift(i64, i64),
    FlipX,
    FlipY,
    SwapXY,
    /// Sphere rotation by `m` longitude steps.
    RotPhi(i64),
    /// `θ → π − θ`.
    FlipTheta,
    /// `(θ, φ) → (π − θ, φ + π)`.
    Antipodal,
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::Shift(p, q) => write!(f, "shift({p},{q})"),
            GeneratorSpec::FlipX => f.write_str("flip_x"),
            GeneratorSpec::FlipY => f.write_str("flip_y"),
            GeneratorSpec::SwapXY => f.write_str("swap_xy"),
            GeneratorSpec::RotPhi(m) => write!(f, "rot_phi({m})"),
            GeneratorSpec::FlipTheta => f.write_str("flip_theta"),
            GeneratorSpec::Antipodal => f.write_str("antipodal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error("group too large: closure exceeds {cap} elements")]
    TooLarge { cap: usize },
    #[error("generator {generator} is not valid on a {mesh} mesh")]
    InvalidForMesh { generator: String, mesh: MeshKind },
    #[error("malformed generator list: {0}")]
    Syntax(String),
    #[error("field belongs to mesh {field} but the group acts on {group}")]
    MeshMismatch { field: MeshSpec, group: MeshSpec },
    #[error("orbit of node {node} has {orbit} points, fewer than the requested {k}")]
    OrbitTooSmall { node: usize, orbit: usize, k: usize },
    #[error("separation needs at least two points, got k = {0}")]
    TooFewPoints(usize),
    #[error("ball radius {radius} must lie in (0, {injectivity_radius})")]
    RadiusOutOfRange { radius: f64, injectivity_radius: f64 },
}

/// Parses a comma-separated generator list such as `shift(32,0), flip_x`.
pub fn parse_generators(text: &str) -> Result<Vec<GeneratorSpec>, GroupError> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    if rest.is_empty() || rest == "none" {
        return Ok(out);
    }
    while !rest.is_empty() {
        let name_end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        let name = &rest[..name_end];
        rest = rest[name_end..].trim_start();
        let mut args: Vec<i64> = Vec::new();
        if let Some(after) = rest.strip_prefix('(') {
            let close = after
                .find(')')
                .ok_or_else(|| GroupError::Syntax(alloc::format!("missing ')' after {name}")))?;
            for piece in after[..close].split(',') {
                let v = piece.trim().parse::<i64>().map_err(|_| {
                    GroupError::Syntax(alloc::format!(
                        "argument '{}' of {name} is not an integer",
                        piece.trim()
                    ))
                })?;
                args.push(v);
            }
            rest = after[close + 1..].trim_start();
        }
        let g = match (name, args.as_slice()) {
            ("shift", &[p, q]) => GeneratorSpec::Shift(p, q),
            ("flip_x", []) => GeneratorSpec::FlipX,
            ("flip_y", []) => GeneratorSpec::FlipY,
            ("swap_xy", []) => GeneratorSpec::SwapXY,
            ("rot_phi", &[m]) => GeneratorSpec::RotPhi(m),
            ("flip_theta", []) => GeneratorSpec::FlipTheta,
            ("antipodal", []) => GeneratorSpec::Antipodal,
            _ => {
                return Err(GroupError::Syntax(alloc::format!(
                    "unknown generator {name} with {} argument(s)",
                    args.len()
                )))
            }
        };
        out.push(g);
        if let Some(after) = rest.strip_prefix(',') {
            rest = after.trim_start();
            if rest.is_empty() {
                return Err(GroupError::Syntax("trailing ','".to_string()));
            }
        } else if !rest.is_empty() {
            return Err(GroupError::Syntax(alloc::format!("unexpected '{rest}'")));
        }
    }
    Ok(out)
}

type Perm = Vec<u32>;

fn generator_perm(mesh: &MeshGeometry, g: GeneratorSpec) -> Result<Perm, GroupError> {
    let invalid = || GroupError::InvalidForMesh {
        generator: g.to_string(),
        mesh: mesh.kind(),
    };
    let (rows, cols) = mesh.grid_dims();
    let wrap = |v: i64, n: usize| v.rem_euclid(n as i64) as usize;
    let map: alloc::boxed::Box<dyn Fn(usize, usize) -> (usize, usize)> = match (mesh.kind(), g) {
        (MeshKind::Torus, GeneratorSpec::Shift(p, q)) => alloc::boxed::Box::new(move |r, c| {
            (wrap(r as i64 + q, rows), wrap(c as i64 + p, cols))
        }),
        (MeshKind::Torus, GeneratorSpec::FlipX) => {
            alloc::boxed::Box::new(move |r, c| (r, (cols - c) % cols))
        }
        (MeshKind::Torus, GeneratorSpec::FlipY) => {
            alloc::boxed::Box::new(move |r, c| ((rows - r) % rows, c))
        }
        (MeshKind::Torus, GeneratorSpec::SwapXY) if rows == cols => {
            alloc::boxed::Box::new(|r, c| (c, r))
        }
        (MeshKind::Sphere, GeneratorSpec::RotPhi(m)) => {
            alloc::boxed::Box::new(move |r, c| (r, wrap(c as i64 + m, cols)))
        }
        (MeshKind::Sphere, GeneratorSpec::FlipTheta) => {
            alloc::boxed::Box::new(move |r, c| (rows - 1 - r, c))
        }
        (MeshKind::Sphere, GeneratorSpec::Antipodal) if cols % 2 == 0 => {
            alloc::boxed::Box::new(move |r, c| (rows - 1 - r, (c + cols / 2) % cols))
        }
        _ => return Err(invalid()),
    };
    let mut perm = vec![0u32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (r2, c2) = map(r, c);
            perm[r * cols + c] = (r2 * cols + c2) as u32;
        }
    }
    Ok(perm)
}

fn fingerprint(p: &[u32]) -> u64 {
    p.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &v| {
        (h ^ v as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Finite isometry group realized as a closed set of node permutations.
#[derive(Clone, Debug)]
pub struct GroupAction {
    mesh: MeshSpec,
    generators: Vec<(GeneratorSpec, Perm)>,
    elements: Vec<Perm>,
    orbits: Vec<Vec<u32>>,
    orbit_of: Vec<u32>,
    k_min: usize,
}

impl GroupAction {
    /// Closes the generated group under composition.
    pub fn build(
        mesh: &MeshGeometry,
        specs: &[GeneratorSpec],
        cap: usize,
    ) -> Result<Self, GroupError> {
        let n = mesh.node_count();
        let generators = specs
            .iter()
            .map(|&g| generator_perm(mesh, g).map(|p| (g, p)))
            .collect::<Result<Vec<_>, _>>()?;

        let identity: Perm = (0..n as u32).collect();
        let mut elements = vec![identity];
        let mut index: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        index.insert(fingerprint(&elements[0]), vec![0]);
        let mut cursor = 0;
        while cursor < elements.len() {
            for (_, g) in &generators {
                let product: Perm = elements[cursor].iter().map(|&i| g[i as usize]).collect();
                let key = fingerprint(&product);
                let bucket = index.entry(key).or_default();
                if bucket.iter().any(|&e| elements[e] == product) {
                    continue;
                }
                if elements.len() >= cap {
                    return Err(GroupError::TooLarge { cap });
                }
                bucket.push(elements.len());
                elements.push(product);
            }
            cursor += 1;
        }

        // Orbits are the connected components of the generator moves.
        let mut parent: Vec<u32> = (0..n as u32).collect();
        fn find(parent: &mut [u32], mut i: u32) -> u32 {
            while parent[i as usize] != i {
                parent[i as usize] = parent[parent[i as usize] as usize];
                i = parent[i as usize];
            }
            i
        }
        for (_, g) in &generators {
            for i in 0..n as u32 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, g[i as usize]));
                if a != b {
                    parent[a.max(b) as usize] = a.min(b);
                }
            }
        }
        let mut orbit_of = vec![u32::MAX; n];
        let mut orbits: Vec<Vec<u32>> = Vec::new();
        let mut root_slot: BTreeMap<u32, u32> = BTreeMap::new();
        for i in 0..n as u32 {
            let root = find(&mut parent, i);
            let slot = *root_slot.entry(root).or_insert_with(|| {
                orbits.push(Vec::new());
                (orbits.len() - 1) as u32
            });
            orbits[slot as usize].push(i);
            orbit_of[i as usize] = slot;
        }
        let k_min = orbits.iter().map(Vec::len).min().unwrap_or(1);

        Ok(GroupAction {
            mesh: mesh.spec(),
            generators,
            elements,
            orbits,
            orbit_of,
            k_min,
        })
    }

    /// The trivial group.
    pub fn identity(mesh: &MeshGeometry) -> Self {
        Self::build(mesh, &[], 1).expect("identity group always closes")
    }

    pub fn mesh(&self) -> MeshSpec {
        self.mesh
    }

    pub fn generator_specs(&self) -> impl Iterator<Item = GeneratorSpec> + '_ {
        self.generators.iter().map(|(g, _)| *g)
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// All elements; index 0 is the identity.
    pub fn elements(&self) -> &[Vec<u32>] {
        &self.elements
    }

    /// `min_x |O_G(x)|`.
    pub fn min_orbit_cardinality(&self) -> usize {
        self.k_min
    }

    pub fn orbit_count(&self) -> usize {
        self.orbits.len()
    }

    /// Sorted node indices of the orbit through `node`.
    pub fn orbit(&self, node: usize) -> Vec<usize> {
        self.orbits[self.orbit_of[node] as usize]
            .iter()
            .map(|&i| i as usize)
            .collect()
    }

    pub fn orbit_size(&self, node: usize) -> usize {
        self.orbits[self.orbit_of[node] as usize].len()
    }

    fn check(&self, u: &Field) -> Result<(), GroupError> {
        if u.mesh() != self.mesh {
            return Err(GroupError::MeshMismatch {
                field: u.mesh(),
                group: self.mesh,
            });
        }
        Ok(())
    }

    /// Group average `(1/|G|) Σ_σ u∘σ`, computed orbit by orbit so the result is
    /// bit-exactly invariant.
    pub fn symmetrize(&self, u: &Field) -> Result<Field, GroupError> {
        self.check(u)?;
        let mut values = u.values().to_vec();
        self.symmetrize_in_place(&mut values);
        Ok(Field::from_raw(self.mesh, values))
    }

    pub fn symmetrize_in_place(&self, values: &mut [f64]) {
        assert_eq!(values.len(), self.orbit_of.len());
        for orbit in &self.orbits {
            if orbit.len() == 1 {
                continue;
            }
            let mean = orbit.iter().map(|&i| values[i as usize]).sum::<f64>() / orbit.len() as f64;
            for &i in orbit {
                values[i as usize] = mean;
            }
        }
    }

    /// `max_x max_g |u(g x) − u(x)|` over the generators.
    pub fn invariance_error(&self, u: &[f64]) -> f64 {
        self.generators
            .iter()
            .flat_map(|(_, g)| {
                g.iter()
                    .enumerate()
                    .map(move |(i, &j)| math::abs(u[j as usize] - u[i]))
            })
            .fold(0.0, f64::max)
    }
}

/// `k` orbit points (including `node`) and their minimum pairwise distance.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparatedPoints {
    pub points: Vec<usize>,
    pub delta: f64,
    /// True when `delta` is the exact max-min optimum (exhaustive search).
    pub optimal: bool,
}

fn min_pairwise(mesh: &MeshGeometry, pts: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for (a, &p) in pts.iter().enumerate() {
        for &q in &pts[a + 1..] {
            best = best.min(mesh.geodesic_distance(p, q));
        }
    }
    best
}

/// Picks `k` points of the orbit through `node`, `node` first, maximizing the
/// minimum pairwise geodesic distance. Exhaustive for orbits of at most
/// [`EXHAUSTIVE_ORBIT_LIMIT`] points, greedy farthest-point otherwise.
pub fn separated_orbit_points(
    mesh: &MeshGeometry,
    group: &GroupAction,
    node: usize,
    k: usize,
) -> Result<SeparatedPoints, GroupError> {
    if k < 2 {
        return Err(GroupError::TooFewPoints(k));
    }
    let orbit = group.orbit(node);
    if orbit.len() < k {
        return Err(GroupError::OrbitTooSmall {
            node,
            orbit: orbit.len(),
            k,
        });
    }
    let others: Vec<usize> = orbit.into_iter().filter(|&p| p != node).collect();

    if others.len() < EXHAUSTIVE_ORBIT_LIMIT {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut chosen = vec![node];
        fn recurse(
            mesh: &MeshGeometry,
            others: &[usize],
            start: usize,
            k: usize,
            chosen: &mut Vec<usize>,
            best: &mut Option<(f64, Vec<usize>)>,
        ) {
            if chosen.len() == k {
                let d = min_pairwise(mesh, chosen);
                if best.as_ref().is_none_or(|(b, _)| d > *b) {
                    *best = Some((d, chosen.clone()));
                }
                return;
            }
            for i in start..others.len() {
                chosen.push(others[i]);
                recurse(mesh, others, i + 1, k, chosen, best);
                chosen.pop();
            }
        }
        recurse(mesh, &others, 0, k, &mut chosen, &mut best);
        let (delta, points) = best.expect("orbit holds at least k points");
        return Ok(SeparatedPoints {
            points,
            delta,
            optimal: true,
        });
    }

    let mut points = vec![node];
    let mut nearest: Vec<f64> = others
        .iter()
        .map(|&p| mesh.geodesic_distance(node, p))
        .collect();
    let mut used = vec![false; others.len()];
    while points.len() < k {
        let (pick, _) = nearest
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, &d)| {
                if d > acc.1 {
                    (i, d)
                } else {
                    acc
                }
            });
        used[pick] = true;
        let p = others[pick];
        points.push(p);
        for (i, &q) in others.iter().enumerate() {
            nearest[i] = nearest[i].min(mesh.geodesic_distance(p, q));
        }
    }
    let delta = min_pairwise(mesh, &points);
    Ok(SeparatedPoints {
        points,
        delta,
        optimal: false,
    })
}

/// Centre and captured fraction of the geodesic ball of radius `r` holding the
/// largest share of `∫ e^u dV`.
pub fn concentration_ball(
    mesh: &MeshGeometry,
    u: &Field,
    r: f64,
) -> Result<(usize, f64), GroupError> {
    let stencil = ball_stencil_checked(mesh, r)?;
    Ok(concentration_with_stencil(mesh, u.values(), &stencil))
}

pub(crate) fn ball_stencil_checked(
    mesh: &MeshGeometry,
    r: f64,
) -> Result<crate::mesh::BallStencil, GroupError> {
    if !(r > 0.0 && r < mesh.injectivity_radius()) {
        return Err(GroupError::RadiusOutOfRange {
            radius: r,
            injectivity_radius: mesh.injectivity_radius(),
        });
    }
    Ok(mesh.ball_stencil(r))
}

pub(crate) fn concentration_with_stencil(
    mesh: &MeshGeometry,
    u: &[f64],
    stencil: &crate::mesh::BallStencil,
) -> (usize, f64) {
    let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let density: Vec<f64> = u
        .iter()
        .zip(mesh.quad_weights())
        .map(|(&v, &w)| w * math::exp(v - top))
        .collect();
    let total: f64 = density.iter().sum();
    let mut best = (0usize, f64::NEG_INFINITY);
    for centre in 0..mesh.node_count() {
        let mass: f64 = stencil.members(centre).map(|k| density[k]).sum();
        if mass > best.1 {
            best = (centre, mass);
        }
    }
    (best.0, (best.1 / total).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_generator_lists() {
        assert_eq!(
            parse_generators("shift(32,0), flip_x").unwrap(),
            vec![GeneratorSpec::Shift(32, 0), GeneratorSpec::FlipX]
        );
        assert_eq!(
            parse_generators(" rot_phi( -3 ) ,antipodal").unwrap(),
            vec![GeneratorSpec::RotPhi(-3), GeneratorSpec::Antipodal]
        );
        assert!(parse_generators("").unwrap().is_empty());
        assert!(parse_generators("shift(1)").is_err());
        assert!(parse_generators("shift(a,b)").is_err());
        assert!(parse_generators("flip_x,").is_err());
        assert!(parse_generators("twist").is_err());
    }

    #[test]
    fn half_shift_is_free_of_order_two() {
        let m = MeshGeometry::torus_n(64).unwrap();
        let g = GroupAction::build(&m, &[GeneratorSpec::Shift(32, 0)], DEFAULT_GROUP_CAP).unwrap();
        assert_eq!(g.order(), 2);
        assert_eq!(g.min_orbit_cardinality(), 2);
        let origin = m.node_index(0, 0);
        assert_eq!(g.orbit(origin), vec![origin, m.node_index(0, 32)]);
    }

    #[test]
    fn antipodal_is_free_of_order_two() {
        let m = MeshGeometry::sphere_n(64, 128).unwrap();
        let g = GroupAction::build(&m, &[GeneratorSpec::Antipodal], DEFAULT_GROUP_CAP).unwrap();
        assert_eq!(g.order(), 2);
        assert_eq!(g.min_orbit_cardinality(), 2);
    }

    #[test]
    fn catalog_is_mesh_specific() {
        let t = MeshGeometry::torus_n(16).unwrap();
        let s = MeshGeometry::sphere_n(8, 16).unwrap();
        assert!(matches!(
            GroupAction::build(&t, &[GeneratorSpec::Antipodal], 64),
            Err(GroupError::InvalidForMesh { .. })
        ));
        assert!(matches!(
            GroupAction::build(&s, &[GeneratorSpec::SwapXY], 64),
            Err(GroupError::InvalidForMesh { .. })
        ));
    }

    #[test]
    fn closure_cap_is_enforced() {
        let m = MeshGeometry::torus_n(16).unwrap();
        let gens = [GeneratorSpec::Shift(1, 0), GeneratorSpec::Shift(0, 1)];
        assert_eq!(GroupAction::build(&m, &gens, 256).unwrap().order(), 256);
        assert_eq!(
            GroupAction::build(&m, &gens, 255).unwrap_err(),
            GroupError::TooLarge { cap: 255 }
        );
    }

    #[test]
    fn identity_group_orbits_are_singletons() {
        let m = MeshGeometry::torus_n(8).unwrap();
        let g = GroupAction::identity(&m);
        assert_eq!(g.order(), 1);
        assert_eq!(g.orbit(5), vec![5]);
        assert_eq!(g.min_orbit_cardinality(), 1);
    }

    #[test]
    fn flip_kills_odd_functions() {
        let m = MeshGeometry::torus_n(32).unwrap();
        let g = GroupAction::build(&m, &[GeneratorSpec::FlipX], 16).unwrap();
        let u = Field::from_fn(&m, |x, _| math::sin(x));
        let s = g.symmetrize(&u).unwrap();
        assert!(s.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn separation_on_half_shift() {
        let m = MeshGeometry::torus_n(64).unwrap();
        let g = GroupAction::build(&m, &[GeneratorSpec::Shift(32, 0)], 16).unwrap();
        let sep = separated_orbit_points(&m, &g, 0, 2).unwrap();
        assert!((sep.delta - core::f64::consts::PI).abs() < 1e-14);
        assert!(sep.optimal);
        assert_eq!(
            separated_orbit_points(&m, &g, 0, 3).unwrap_err(),
            GroupError::OrbitTooSmall {
                node: 0,
                orbit: 2,
                k: 3
            }
        );
    }

    #[test]
    fn radius_must_be_inside_injectivity_radius() {
        let m = MeshGeometry::torus_n(16).unwrap();
        let u = Field::zeros(&m);
        assert!(concentration_ball(&m, &u, 0.0).is_err());
        assert!(concentration_ball(&m, &u, core::f64::consts::PI).is_err());
        assert!(concentration_ball(&m, &u, 1.0).is_ok());
    }
}
