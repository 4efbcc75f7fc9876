//! Invariant checks at the configured resolution.

use std::f64::consts::PI;

use meanflow_core::diagnostics::energy;
use meanflow_core::flow::{Flow, FlowSettings};
use meanflow_core::mesh::{Field, MeshGeometry, MeshKind};
use meanflow_core::stationary::{apply_jacobian, mean_field_operator};
use meanflow_core::symmetry::{GeneratorSpec, GroupAction, DEFAULT_GROUP_CAP};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::config::ExperimentConfig;

const SEED: u64 = 0x6d65_616e_666c_6f77;
const RANDOM_PAIRS: usize = 20;
const FD_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Fault injection for the test suite.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VerifyOptions {
    /// Multiply the quadrature weight of `node` by `factor`.
    pub corrupt_weight: Option<(usize, f64)>,
}

fn dot(mesh: &MeshGeometry, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mesh.quad_weights())
        .map(|((x, y), w)| w * x * y)
        .sum()
}

fn random_field(mesh: &MeshGeometry, rng: &mut StdRng, amplitude: f64) -> Field {
    let values = (0..mesh.node_count())
        .map(|_| rng.gen_range(-amplitude..amplitude))
        .collect();
    Field::new(mesh, values).expect("finite samples")
}

/// Low-frequency random field, so finite differences are not dominated by grid noise.
fn smooth_field(mesh: &MeshGeometry, rng: &mut StdRng) -> Field {
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(0..4) as f64,
                rng.gen_range(0..4) as f64,
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    Field::from_fn(mesh, |a, b| {
        modes
            .iter()
            .map(|&(p, q, c, s)| c * (p * a + q * b + s).cos())
            .sum()
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn default_group(mesh: &MeshGeometry) -> Vec<GeneratorSpec> {
    match mesh.kind() {
        MeshKind::Torus => {
            let (n, _) = mesh.grid_dims();
            vec![
                GeneratorSpec::Shift(n as i64 / 2, 0),
                GeneratorSpec::SwapXY,
                GeneratorSpec::FlipX,
            ]
        }
        MeshKind::Sphere => vec![GeneratorSpec::Antipodal, GeneratorSpec::FlipTheta],
    }
}

/// Runs every check; the mesh is rebuilt so fault injection stays local.
pub fn run_checks(config: &ExperimentConfig, options: VerifyOptions) -> Vec<Check> {
    let mut mesh = MeshGeometry::build(config.flow.mesh).expect("validated config");
    if let Some((node, factor)) = options.corrupt_weight {
        mesh.corrupt_weight_for_testing(node % mesh.node_count(), factor);
    }
    let f = config.flow.f_expr.materialize(&mesh).expect("validated config");
    let rho = match config.flow.settings.rho {
        r if r == 0.0 => 8.0,
        r => r,
    };
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut checks = Vec::new();

    // Self-adjointness in the weighted inner product.
    let mut defect: f64 = 0.0;
    for _ in 0..5 {
        let u = random_field(&mesh, &mut rng, 1.0);
        let v = random_field(&mesh, &mut rng, 1.0);
        let (lu, lv) = (mesh.laplacian(&u), mesh.laplacian(&v));
        let a = dot(&mesh, u.values(), lv.values());
        let b = dot(&mesh, v.values(), lu.values());
        let scale = (dot(&mesh, u.values(), u.values()) * dot(&mesh, lv.values(), lv.values())).sqrt();
        defect = defect.max((a - b).abs() / scale);
    }
    checks.push(Check {
        name: "laplacian self-adjoint",
        value: defect,
        tolerance: 1e-10,
    });

    let c = mesh.laplacian(&Field::constant(&mesh, 3.0));
    checks.push(Check {
        name: "laplacian kills constants",
        value: max_abs(c.values()),
        tolerance: 1e-10,
    });

    let by_parts = {
        let u = smooth_field(&mesh, &mut rng);
        let d = mesh.dirichlet_energy(&u);
        let alt = -dot(&mesh, u.values(), mesh.laplacian(&u).values());
        (d - alt).abs() / (1.0 + d.abs())
    };
    checks.push(Check {
        name: "dirichlet energy by parts",
        value: by_parts,
        tolerance: 1e-10,
    });

    checks.push(match mesh.kind() {
        MeshKind::Torus => Check {
            name: "spectral eigenfunctions",
            value: torus_eigen_error(&mesh),
            tolerance: 1e-10,
        },
        MeshKind::Sphere => {
            let (nt, _) = mesh.grid_dims();
            let u = Field::from_fn(&mesh, |theta, _| theta.cos());
            let err = mesh.laplacian(&u).zip_map(&u, |l, v| l + 2.0 * v);
            Check {
                name: "sphere cos(theta) eigenfunction",
                value: max_abs(err.values()),
                tolerance: 5e-3 * (64.0 / nt as f64).powi(2),
            }
        }
    });

    // Energy gradient against central differences.
    let mut worst: f64 = 0.0;
    for _ in 0..RANDOM_PAIRS {
        let u = smooth_field(&mesh, &mut rng);
        let v = smooth_field(&mesh, &mut rng);
        let shifted = |s: f64| u.zip_map(&v, |a, b| a + s * b);
        let fd = (energy(&mesh, rho, &f, &shifted(FD_EPS)).unwrap()
            - energy(&mesh, rho, &f, &shifted(-FD_EPS)).unwrap())
            / (2.0 * FD_EPS);
        let grad = energy_gradient(&mesh, rho, &f, &u);
        let exact = dot(&mesh, &grad, v.values());
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-12));
    }
    checks.push(Check {
        name: "energy gradient vs finite differences",
        value: worst,
        tolerance: 1e-5,
    });

    let mut worst: f64 = 0.0;
    for _ in 0..RANDOM_PAIRS {
        let w = smooth_field(&mesh, &mut rng);
        let v = smooth_field(&mesh, &mut rng);
        let op = |s: f64| mean_field_operator(&mesh, rho, &f, &w.zip_map(&v, |a, b| a + s * b));
        let fd = op(FD_EPS).zip_map(&op(-FD_EPS), |a, b| (a - b) / (2.0 * FD_EPS));
        let jv = apply_jacobian(&mesh, rho, &f, &w, &v);
        worst = worst.max(fd.max_abs_diff(&jv) / max_abs(jv.values()).max(1e-12));
    }
    checks.push(Check {
        name: "newton jacobian vs finite differences",
        value: worst,
        tolerance: 1e-5,
    });

    checks.push(Check {
        name: "laplacian equivariance",
        value: equivariance_error(config, &mesh, &mut rng),
        tolerance: 1e-10,
    });

    let (dissipation_gap, mass_drift) = dissipation_identity(&mesh, &f, rho);
    checks.push(Check {
        name: "dissipation identity dE/dt = -y",
        value: dissipation_gap,
        tolerance: 1e-2,
    });
    checks.push(Check {
        name: "mass conservation",
        value: mass_drift,
        tolerance: 1e-12,
    });
    checks
}

fn torus_eigen_error(mesh: &MeshGeometry) -> f64 {
    let (n, _) = mesh.grid_dims();
    let half = (n / 2) as i64;
    let mut worst: f64 = 0.0;
    for m in -half + 1..half {
        for k in -half + 1..half {
            let (mf, kf) = (m as f64, k as f64);
            let u = Field::from_fn(mesh, |x, y| (mf * x + kf * y + 0.3).cos());
            let err = mesh.laplacian(&u).zip_map(&u, |l, v| l + (mf * mf + kf * kf) * v);
            worst = worst.max(max_abs(err.values()));
        }
    }
    worst
}

/// `δE/δu = −Δu + ρ/|M| − ρ f e^u / ∫ f e^u`.
fn energy_gradient(mesh: &MeshGeometry, rho: f64, f: &Field, u: &Field) -> Vec<f64> {
    let lap = mesh.laplacian(u);
    let top = u.max();
    let p: Vec<f64> = u
        .values()
        .iter()
        .zip(f.values())
        .map(|(v, fv)| fv * (v - top).exp())
        .collect();
    let s = mesh.integrate_values(&p);
    lap.values()
        .iter()
        .zip(&p)
        .map(|(l, pv)| -l + rho / mesh.volume() - rho * pv / s)
        .collect()
}

fn equivariance_error(config: &ExperimentConfig, mesh: &MeshGeometry, rng: &mut StdRng) -> f64 {
    let specs = if config.flow.group.is_empty() {
        default_group(mesh)
    } else {
        config.flow.group.clone()
    };
    let Ok(group) = GroupAction::build(mesh, &specs, DEFAULT_GROUP_CAP) else {
        return f64::INFINITY;
    };
    let u = random_field(mesh, rng, 1.0);
    let lu = mesh.laplacian(&u);
    let scale = max_abs(lu.values()).max(1.0);
    let mut worst: f64 = 0.0;
    for g in group.elements() {
        let gu: Vec<f64> = g.iter().map(|&j| u.values()[j as usize]).collect();
        let lgu = mesh.laplacian(&Field::new(mesh, gu).expect("finite"));
        for (x, &j) in g.iter().enumerate() {
            worst = worst.max((lgu.values()[x] - lu.values()[j as usize]).abs() / scale);
        }
    }
    worst
}

/// Short fixed-step run at a tenth of the stability ceiling. Returns the worst
/// relative gap between the centred `dE/dt` and `−y` over the middle 80% and
/// the largest relative mass deviation.
fn dissipation_identity(mesh: &MeshGeometry, f: &Field, rho: f64) -> (f64, f64) {
    let u0 = Field::from_fn(mesh, |a, b| 0.4 * a.cos() + 0.2 * (a + b).sin());
    let probe = Flow::new(mesh.clone(), f.clone(), None, FlowSettings { rho, ..FlowSettings::default() })
        .expect("validated config");
    let dt = probe.stability_ceiling(u0.values()) / (10.0 * probe.settings().cfl_safety);
    let settings = FlowSettings {
        rho,
        dt_init: dt,
        dt_min: dt * 1e-6,
        dt_max: dt,
        symmetrize_each_step: false,
        ..FlowSettings::default()
    };
    let flow = Flow::new(mesh.clone(), f.clone(), None, settings).expect("validated config");
    let Ok(mut state) = flow.initial_state(u0) else {
        return (f64::INFINITY, f64::INFINITY);
    };
    let a0 = state.a0;
    let mut times = vec![state.t];
    let mut energies = vec![state.energy];
    let mut ys = vec![state.dissipation(mesh)];
    let mut drift: f64 = 0.0;
    for _ in 0..40 {
        state = match flow.step(&state) {
            Ok(s) => s,
            Err(_) => return (f64::INFINITY, f64::INFINITY),
        };
        times.push(state.t);
        energies.push(state.energy);
        ys.push(state.dissipation(mesh));
        drift = drift.max((state.mass(mesh) - a0).abs() / a0);
    }
    let n = times.len();
    let (lo, hi) = (n / 10, n - n / 10);
    let mut worst: f64 = 0.0;
    for i in lo.max(1)..hi.min(n - 1) {
        let de = (energies[i + 1] - energies[i - 1]) / (times[i + 1] - times[i - 1]);
        worst = worst.max((de + ys[i]).abs() / ys[i].abs().max(1e-300));
    }
    (worst, drift)
}

pub fn render_table(checks: &[Check]) -> String {
    let mut out = format!("{:<40} {:>12} {:>12}  result\n", "check", "value", "tolerance");
    for c in checks {
        out.push_str(&format!(
            "{:<40} {:>12.3e} {:>12.3e}  {}\n",
            c.name,
            c.value,
            c.tolerance,
            if c.passed() { "pass" } else { "FAIL" }
        ));
    }
    out
}
