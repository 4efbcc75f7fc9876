use meanflow_core::mesh::{Field, MeshGeometry};
use proptest::prelude::*;

fn weighted_dot(mesh: &MeshGeometry, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(mesh.quad_weights()).map(|((x, y), w)| w * x * y).sum()
}

fn random_field(mesh: &MeshGeometry, seed: &[f64]) -> Field {
    let n = mesh.node_count();
    Field::new(mesh, (0..n).map(|i| seed[i % seed.len()] * ((i * 7919) % 13) as f64 / 13.0).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn torus_fourier_modes_are_eigenfunctions(m in -15i32..16, n in -15i32..16, phase in 0.0f64..6.3) {
        let mesh = MeshGeometry::torus_n(32).unwrap();
        let (mf, nf) = (m as f64, n as f64);
        let u = Field::from_fn(&mesh, |x, y| (mf * x + nf * y + phase).cos());
        let lap = mesh.laplacian(&u);
        let err = lap.zip_map(&u, |l, v| l + (mf * mf + nf * nf) * v);
        prop_assert!(err.values().iter().all(|e| e.abs() <= 1e-10));
    }

    #[test]
    fn torus_laplacian_is_self_adjoint(a in prop::collection::vec(-1.0f64..1.0, 37), b in prop::collection::vec(-1.0f64..1.0, 41)) {
        let mesh = MeshGeometry::torus_n(16).unwrap();
        let (u, v) = (random_field(&mesh, &a), random_field(&mesh, &b));
        let lhs = weighted_dot(&mesh, u.values(), mesh.laplacian(&v).values());
        let rhs = weighted_dot(&mesh, v.values(), mesh.laplacian(&u).values());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn sphere_laplacian_is_self_adjoint(a in prop::collection::vec(-1.0f64..1.0, 37), b in prop::collection::vec(-1.0f64..1.0, 41)) {
        let mesh = MeshGeometry::sphere_n(16, 32).unwrap();
        let (u, v) = (random_field(&mesh, &a), random_field(&mesh, &b));
        let lhs = weighted_dot(&mesh, u.values(), mesh.laplacian(&v).values());
        let rhs = weighted_dot(&mesh, v.values(), mesh.laplacian(&u).values());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn dirichlet_energy_is_summation_by_parts(a in prop::collection::vec(-1.0f64..1.0, 29), sphere in any::<bool>()) {
        let mesh = if sphere { MeshGeometry::sphere_n(16, 32).unwrap() } else { MeshGeometry::torus_n(16).unwrap() };
        let u = random_field(&mesh, &a);
        let by_parts = -weighted_dot(&mesh, u.values(), mesh.laplacian(&u).values());
        let d = mesh.dirichlet_energy(&u);
        prop_assert!(d >= -1e-12);
        prop_assert!((d - by_parts).abs() <= 1e-10 * (1.0 + d.abs()));
    }

    #[test]
    fn laplacian_annihilates_constants(c in -50.0f64..50.0, sphere in any::<bool>()) {
        let mesh = if sphere { MeshGeometry::sphere_n(16, 32).unwrap() } else { MeshGeometry::torus_n(16).unwrap() };
        let lap = mesh.laplacian(&Field::constant(&mesh, c));
        prop_assert!(lap.values().iter().all(|v| v.abs() <= 1e-11 * (1.0 + c.abs())));
    }
}

#[test]
fn inverse_laplacian_inverts_on_mean_zero_fields() {
    let mesh = MeshGeometry::torus_n(32).unwrap();
    let u = Field::from_fn(&mesh, |x, y| (2.0 * x).sin() * y.cos() + 0.3 * (x - 3.0 * y).cos());
    let lap = mesh.laplacian(&u);
    let mut back = vec![0.0; mesh.node_count()];
    assert!(mesh.inverse_laplacian_into(lap.values(), &mut back));
    for (a, b) in back.iter().zip(u.values()) {
        assert!((a - b).abs() < 1e-12);
    }
    let sphere = MeshGeometry::sphere_n(8, 16).unwrap();
    assert!(!sphere.inverse_laplacian_into(&vec![0.0; 128], &mut vec![0.0; 128]));
}

#[test]
fn sphere_cos_theta_is_an_eigenfunction_approximately() {
    let mesh = MeshGeometry::sphere_n(64, 128).unwrap();
    let u = Field::from_fn(&mesh, |theta, _| theta.cos());
    let err = mesh.laplacian(&u).zip_map(&u, |l, v| l + 2.0 * v);
    assert!(err.values().iter().map(|e| e.abs()).fold(0.0, f64::max) <= 5e-3);
}
