//! Restarted GMRES with right preconditioning.

use crate::error::{Error, Result};

pub(crate) struct Gmres {
    pub restart: usize,
    pub max_restarts: usize,
    pub tolerance: f64,
}

impl Default for Gmres {
    fn default() -> Self {
        Gmres {
            restart: 40,
            max_restarts: 25,
            tolerance: 1e-12,
        }
    }
}

/// A solve that stalls within this factor of the target is accepted.
const STALL_SLACK: f64 = 100.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nrm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl Gmres {
    /// Solves `A x = b` starting from `x`, with `M⁻¹` applied on the right.
    /// Convergence is `‖b − A x‖ ≤ tolerance · ‖b‖`, relaxed to
    /// `100 · tolerance` when restarts stop making progress.
    pub fn solve(
        &self,
        a: impl Fn(&[f64]) -> Vec<f64>,
        precond: impl Fn(&[f64]) -> Vec<f64>,
        b: &[f64],
        x: &mut [f64],
    ) -> Result<usize> {
        let n = b.len();
        let bnorm = nrm(b).max(f64::MIN_POSITIVE);
        let target = self.tolerance * bnorm;
        let m = self.restart.min(n.max(1));
        let mut total = 0;
        let mut resid = f64::INFINITY;
        let mut previous = f64::INFINITY;
        for _ in 0..=self.max_restarts {
            let ax = a(x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let beta = nrm(&r);
            resid = beta;
            if !beta.is_finite() {
                break;
            }
            if beta <= target {
                return Ok(total);
            }
            // restarts no longer help: rounding floor
            if beta > 0.9 * previous {
                break;
            }
            previous = beta;
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
            basis.push(r.iter().map(|v| v / beta).collect());
            let mut h = vec![vec![0.0; m]; m + 1];
            let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
            let mut g = vec![0.0; m + 1];
            g[0] = beta;
            let mut k_used = 0;
            for k in 0..m {
                total += 1;
                let mut w = a(&precond(&basis[k]));
                for (j, q) in basis.iter().enumerate() {
                    let hj = dot(&w, q);
                    h[j][k] = hj;
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= hj * qi);
                }
                let hn = nrm(&w);
                h[k + 1][k] = hn;
                for j in 0..k {
                    let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                    h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                    h[j][k] = t;
                }
                let d = h[k][k].hypot(h[k + 1][k]);
                if d == 0.0 {
                    break;
                }
                cs[k] = h[k][k] / d;
                sn[k] = h[k + 1][k] / d;
                h[k][k] = d;
                h[k + 1][k] = 0.0;
                g[k + 1] = -sn[k] * g[k];
                g[k] *= cs[k];
                k_used = k + 1;
                resid = g[k + 1].abs();
                if resid <= target || hn == 0.0 {
                    break;
                }
                basis.push(w.iter().map(|v| v / hn).collect());
            }
            // back substitution
            let mut y = vec![0.0; k_used];
            for i in (0..k_used).rev() {
                let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
                y[i] = (g[i] - s) / h[i][i];
            }
            let mut z = vec![0.0; n];
            for (yi, q) in y.iter().zip(&basis) {
                z.iter_mut().zip(q).for_each(|(zi, qi)| *zi += yi * qi);
            }
            let dx = precond(&z);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        }
        let ax = a(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let last = nrm(&r);
        if last <= STALL_SLACK * target {
            return Ok(total);
        }
        Err(Error::NoConvergence {
            what: "gmres",
            iterations: total,
            residual: if last.is_finite() {
                last / bnorm
            } else {
                resid
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 30;
        let a = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let left = if i > 0 { x[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { x[i + 1] } else { 0.0 };
                    3.0 * x[i] - 1.5 * left + 0.5 * right
                })
                .collect()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let solver = Gmres {
            restart: 7,
            ..Default::default()
        };
        solver.solve(a, |v| v.to_vec(), &b, &mut x).unwrap();
        let r: Vec<f64> = a(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(nrm(&r) <= 1e-12 * nrm(&b));
    }
}
