//! Restarted, right-preconditioned GMRES over a caller-supplied inner product.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

pub(crate) struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub(crate) struct Gmres {
    pub restart: usize,
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl Gmres {
    /// Solves `A x = b` starting from `x = 0`; `x` receives the solution.
    pub fn solve(
        &self,
        mut apply: impl FnMut(&[f64], &mut [f64]),
        mut precondition: impl FnMut(&[f64], &mut [f64]),
        dot: impl Fn(&[f64], &[f64]) -> f64,
        b: &[f64],
        x: &mut [f64],
    ) -> GmresOutcome {
        let n = b.len();
        let norm = |v: &[f64]| math::sqrt(dot(v, v).max(0.0));
        x.iter_mut().for_each(|v| *v = 0.0);
        let b_norm = norm(b);
        if b_norm == 0.0 {
            return GmresOutcome {
                iterations: 0,
                relative_residual: 0.0,
            };
        }
        let m = self.restart.max(1);
        let mut total = 0usize;
        let mut r = b.to_vec();
        let mut ax = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut w = vec![0.0; n];

        while total < self.max_iterations {
            let beta = norm(&r);
            if beta / b_norm <= self.rel_tol {
                break;
            }
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
            basis.push(r.iter().map(|v| v / beta).collect());
            let mut hess = vec![vec![0.0; m]; m + 1];
            let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
            let mut g = vec![0.0; m + 1];
            g[0] = beta;
            let mut used = 0;

            for j in 0..m {
                precondition(&basis[j], &mut z);
                apply(&z, &mut w);
                for (i, v) in basis.iter().enumerate() {
                    let h = dot(&w, v);
                    hess[i][j] = h;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= h * vk;
                    }
                }
                let h_next = norm(&w);
                hess[j + 1][j] = h_next;
                for i in 0..j {
                    let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                    hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                    hess[i][j] = t;
                }
                let denom = math::sqrt(hess[j][j] * hess[j][j] + h_next * h_next);
                if denom == 0.0 {
                    used = j;
                    break;
                }
                cs[j] = hess[j][j] / denom;
                sn[j] = h_next / denom;
                hess[j][j] = denom;
                hess[j + 1][j] = 0.0;
                g[j + 1] = -sn[j] * g[j];
                g[j] *= cs[j];
                used = j + 1;
                total += 1;
                let rel = math::abs(g[j + 1]) / b_norm;
                if rel <= self.rel_tol || h_next == 0.0 || total >= self.max_iterations {
                    break;
                }
                basis.push(w.iter().map(|v| v / h_next).collect());
            }

            // Back substitution for the Krylov coefficients.
            let mut y = vec![0.0; used];
            for i in (0..used).rev() {
                let mut acc = g[i];
                for k in i + 1..used {
                    acc -= hess[i][k] * y[k];
                }
                y[i] = acc / hess[i][i];
            }
            let mut update = vec![0.0; n];
            for (yi, v) in y.iter().zip(&basis) {
                for (u, vk) in update.iter_mut().zip(v) {
                    *u += yi * vk;
                }
            }
            precondition(&update, &mut z);
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += zi;
            }
            apply(x, &mut ax);
            for ((ri, bi), ai) in r.iter_mut().zip(b).zip(&ax) {
                *ri = bi - ai;
            }
            if used == 0 {
                break;
            }
        }
        let true_rel = norm(&r) / b_norm;
        GmresOutcome {
            iterations: total,
            relative_residual: true_rel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        // Tridiagonal, diagonally dominant, nonsymmetric.
        let n = 40;
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let mut v = 4.0 * x[i];
                if i > 0 {
                    v -= 1.5 * x[i - 1];
                }
                if i + 1 < n {
                    v -= 0.5 * x[i + 1];
                }
                out[i] = v;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let solver = Gmres {
            restart: 10,
            max_iterations: 200,
            rel_tol: 1e-12,
        };
        let out = solver.solve(
            apply,
            |v, z| z.copy_from_slice(v),
            |a, b| a.iter().zip(b).map(|(p, q)| p * q).sum(),
            &b,
            &mut x,
        );
        assert!(out.relative_residual < 1e-11);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }
}
