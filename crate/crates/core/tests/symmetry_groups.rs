use std::collections::HashSet;

use meanflow_core::mesh::{Field, MeshGeometry};
use meanflow_core::symmetry::{
    concentration_ball, parse_generators, separated_orbit_points, GeneratorSpec, GroupAction,
    GroupError, DEFAULT_GROUP_CAP,
};
use proptest::prelude::*;

fn compose(a: &[u32], b: &[u32]) -> Vec<u32> {
    // (a ∘ b)(x) = a(b(x))
    b.iter().map(|&x| a[x as usize]).collect()
}

fn check_axioms(group: &GroupAction) {
    let elements: HashSet<Vec<u32>> = group.elements().iter().cloned().collect();
    assert_eq!(elements.len(), group.order());
    let n = group.elements()[0].len();
    let identity: Vec<u32> = (0..n as u32).collect();
    assert!(elements.contains(&identity));
    for a in group.elements() {
        let mut seen = vec![false; n];
        for &x in a {
            assert!(!std::mem::replace(&mut seen[x as usize], true), "not a permutation");
        }
        for b in group.elements() {
            assert!(elements.contains(&compose(a, b)), "not closed");
        }
        let mut inverse = vec![0u32; n];
        for (x, &y) in a.iter().enumerate() {
            inverse[y as usize] = x as u32;
        }
        assert!(elements.contains(&inverse), "missing inverse");
    }
}

fn check_orbits(group: &GroupAction, n: usize) {
    let mut covered = vec![false; n];
    let mut count = 0;
    for x in 0..n {
        let orbit = group.orbit(x);
        let brute: HashSet<usize> = group.elements().iter().map(|g| g[x] as usize).collect();
        assert_eq!(orbit.iter().copied().collect::<HashSet<_>>(), brute);
        if !covered[x] {
            count += 1;
            for &y in &orbit {
                assert!(!covered[y], "orbits overlap");
                covered[y] = true;
            }
        }
        assert_eq!(group.orbit_size(x), orbit.len());
    }
    assert_eq!(count, group.orbit_count());
    let k = (0..n).map(|x| group.orbit_size(x)).min().unwrap();
    assert_eq!(k, group.min_orbit_cardinality());
}

#[test]
fn torus_groups_satisfy_axioms() {
    let mesh = MeshGeometry::torus_n(12).unwrap();
    for text in [
        "shift(6,0)",
        "shift(4,0), flip_x",
        "swap_xy, flip_y",
        "shift(3,3), shift(0,6), flip_x, flip_y",
    ] {
        let group = GroupAction::build(&mesh, &parse_generators(text).unwrap(), DEFAULT_GROUP_CAP).unwrap();
        check_axioms(&group);
        check_orbits(&group, mesh.node_count());
    }
}

#[test]
fn sphere_groups_satisfy_axioms() {
    let mesh = MeshGeometry::sphere_n(8, 16).unwrap();
    for text in ["antipodal", "rot_phi(4), flip_theta", "rot_phi(2), antipodal"] {
        let group = GroupAction::build(&mesh, &parse_generators(text).unwrap(), DEFAULT_GROUP_CAP).unwrap();
        check_axioms(&group);
        check_orbits(&group, mesh.node_count());
    }
}

#[test]
fn group_cap_is_enforced() {
    let mesh = MeshGeometry::torus_n(64).unwrap();
    let err = GroupAction::build(&mesh, &[GeneratorSpec::Shift(1, 0), GeneratorSpec::Shift(0, 1)], 100);
    assert!(matches!(err, Err(GroupError::TooLarge { .. })));
}

fn brute_best_delta(mesh: &MeshGeometry, orbit: &[usize], node: usize, k: usize) -> f64 {
    let others: Vec<usize> = orbit.iter().copied().filter(|&p| p != node).collect();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << others.len()) {
        if mask.count_ones() as usize != k - 1 {
            continue;
        }
        let mut pts = vec![node];
        pts.extend((0..others.len()).filter(|i| mask >> i & 1 == 1).map(|i| others[i]));
        let mut d = f64::INFINITY;
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                d = d.min(mesh.geodesic_distance(pts[a], pts[b]));
            }
        }
        best = best.max(d);
    }
    best
}

#[test]
fn six_element_group_separation_matches_brute_force() {
    let mesh = MeshGeometry::torus_n(60).unwrap();
    let group = GroupAction::build(
        &mesh,
        &[GeneratorSpec::Shift(20, 0), GeneratorSpec::Shift(0, 30)],
        DEFAULT_GROUP_CAP,
    )
    .unwrap();
    assert_eq!(group.order(), 6);
    assert_eq!(group.min_orbit_cardinality(), 6);
    let h = 2.0 * std::f64::consts::PI / 60.0;
    for node in [0, 17, 1234, 3599] {
        let orbit = group.orbit(node);
        for k in 2..=6 {
            let got = separated_orbit_points(&mesh, &group, node, k).unwrap();
            assert!(got.optimal);
            assert_eq!(got.points.len(), k);
            assert_eq!(got.points[0], node);
            assert_eq!(got.delta, brute_best_delta(&mesh, &orbit, node, k));
        }
        // All six points: nearest neighbours differ by one x-shift of 20 cells.
        let all = separated_orbit_points(&mesh, &group, node, 6).unwrap();
        assert!((all.delta - 20.0 * h).abs() < 1e-12);
    }
    assert!(matches!(
        separated_orbit_points(&mesh, &group, 0, 7),
        Err(GroupError::OrbitTooSmall { .. })
    ));
}

#[test]
fn concentration_ball_examples() {
    let mesh = MeshGeometry::torus_n(32).unwrap();
    let (_, frac) = concentration_ball(&mesh, &Field::zeros(&mesh), 1.0).unwrap();
    let stencil = mesh.ball_stencil(1.0);
    let expected = stencil.len_at(0) as f64 / mesh.node_count() as f64;
    assert!((frac - expected).abs() < 1e-12);

    let peak = mesh.node_index(10, 20);
    let u = Field::from_fn(&mesh, |x, y| {
        let (px, py) = mesh.node_coords(peak);
        -40.0 * ((x - px).powi(2) + (y - py).powi(2))
    });
    let (centre, frac) = concentration_ball(&mesh, &u, 0.5).unwrap();
    assert_eq!(centre, peak);
    assert!(frac > 0.99);
    assert!(concentration_ball(&mesh, &u, 4.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetrize_is_an_invariant_projection(seed in prop::collection::vec(-3.0f64..3.0, 64), which in 0usize..4) {
        let mesh = MeshGeometry::torus_n(16).unwrap();
        let text = ["shift(8,0)", "flip_x, flip_y", "swap_xy", "shift(4,4), flip_x"][which];
        let group = GroupAction::build(&mesh, &parse_generators(text).unwrap(), DEFAULT_GROUP_CAP).unwrap();
        let u = Field::new(&mesh, (0..mesh.node_count()).map(|i| seed[i % 64] + (i as f64).sin()).collect()).unwrap();
        let s = group.symmetrize(&u).unwrap();
        prop_assert_eq!(group.invariance_error(s.values()), 0.0);
        let twice = group.symmetrize(&s).unwrap();
        prop_assert!(twice.max_abs_diff(&s) <= 1e-14);
        // Group average computed directly from the elements.
        for x in [0usize, 37, 200] {
            let avg = group.elements().iter().map(|g| u.values()[g[x] as usize]).sum::<f64>() / group.order() as f64;
            prop_assert!((avg - s.values()[x]).abs() <= 1e-13);
        }
        prop_assert!((mesh.integrate(&s) - mesh.integrate(&u)).abs() <= 1e-10);
    }
}
