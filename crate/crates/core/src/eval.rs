//! Pointwise evaluators for holomorphic maps of the polydisc.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{JetMap, MultiJet, C64};
use crate::linalg;

type MapFn = dyn Fn(&[C64], &mut [C64]) + Send + Sync;

/// A closed-form (or composed) map `D^n -> C^n`, written into a caller buffer.
#[derive(Clone)]
pub struct Evaluator {
    dim: usize,
    f: Arc<MapFn>,
}

impl fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Evaluator(dim = {})", self.dim)
    }
}

impl Evaluator {
    pub fn new(dim: usize, f: impl Fn(&[C64], &mut [C64]) + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f) }
    }

    /// Evaluates a jet map as a polynomial.
    pub fn from_jet(map: &JetMap) -> Self {
        let map = map.clone();
        Self::new(map.dim(), move |z, out| {
            for (o, c) in out.iter_mut().zip(map.components()) {
                *o = c.eval(z);
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval_into(&self, z: &[C64], out: &mut [C64]) {
        (self.f)(z, out)
    }

    pub fn eval(&self, z: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        (self.f)(z, &mut out);
        out
    }
}

/// Row-major `n x n` Jacobian written into a caller buffer.
#[derive(Clone)]
pub struct JacobianEvaluator {
    dim: usize,
    f: Arc<MapFn>,
}

impl fmt::Debug for JacobianEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JacobianEvaluator(dim = {})", self.dim)
    }
}

impl JacobianEvaluator {
    pub fn new(dim: usize, f: impl Fn(&[C64], &mut [C64]) + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f) }
    }

    pub fn from_jet(map: &JetMap) -> Self {
        let jac = map.jacobian();
        let n = map.dim();
        Self::new(n, move |z, out| {
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = jac[i][j].eval(z);
                }
            }
        })
    }

    /// Jacobian by the Cauchy integral formula on small circles around `z`.
    ///
    /// Spectrally accurate for maps holomorphic on a neighbourhood of the
    /// closed polydisc of radius `‖z‖_∞ + ρ`.
    pub fn cauchy(map: Evaluator) -> Self {
        let n = map.dim();
        Self::new(n, move |z, out| cauchy_jacobian(&map, z, out))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval_into(&self, z: &[C64], out: &mut [C64]) {
        (self.f)(z, out)
    }

    pub fn eval(&self, z: &[C64]) -> Vec<Vec<C64>> {
        let n = self.dim;
        let mut flat = vec![C64::new(0.0, 0.0); n * n];
        (self.f)(z, &mut flat);
        flat.chunks(n).map(|r| r.to_vec()).collect()
    }
}

const CAUCHY_NODES: usize = 16;

fn cauchy_jacobian(map: &Evaluator, z: &[C64], out: &mut [C64]) {
    let n = map.dim();
    let sup = sup_norm(z);
    let rho = (0.25 * (1.0 - sup)).clamp(1e-4, 1e-2);
    let mut w = z.to_vec();
    let mut val = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        let mut acc = vec![C64::new(0.0, 0.0); n];
        for k in 0..CAUCHY_NODES {
            let omega = C64::from_polar(1.0, TAU * k as f64 / CAUCHY_NODES as f64);
            w[j] = z[j] + omega * rho;
            map.eval_into(&w, &mut val);
            for i in 0..n {
                acc[i] += val[i] * omega.conj();
            }
        }
        w[j] = z[j];
        for i in 0..n {
            out[i * n + j] = acc[i] / (rho * CAUCHY_NODES as f64);
        }
    }
}

/// `‖z‖_∞`
pub fn sup_norm(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// `-Df(z)^{-1} f(z)`, or `None` where `Df(z)` is singular.
pub fn starlike_generator_at(f: &Evaluator, df: &JacobianEvaluator, z: &[C64]) -> Option<Vec<C64>> {
    let n = f.dim();
    let value = f.eval(z);
    let jac = df.eval(z);
    let sol = linalg::solve(&jac, &value)?;
    debug_assert_eq!(sol.len(), n);
    Some(sol.into_iter().map(|v| -v).collect())
}

/// Taylor coefficients of `f` up to `degree`, extracted by discrete Fourier
/// sampling on the torus `|z_k| = radius` with `nodes` points per coordinate.
pub fn fourier_coefficients(f: &Evaluator, degree: usize, radius: f64, nodes: usize) -> JetMap {
    let n = f.dim();
    let template = MultiJet::zero(n, degree);
    let basis = template.basis().clone();
    let roots: Vec<C64> = (0..nodes).map(|k| C64::from_polar(1.0, TAU * k as f64 / nodes as f64)).collect();
    let total = nodes.pow(n as u32);
    let mut sums = vec![vec![C64::new(0.0, 0.0); basis.len()]; n];
    let mut z = vec![C64::new(0.0, 0.0); n];
    let mut val = vec![C64::new(0.0, 0.0); n];
    let mut node = vec![0usize; n];
    for flat in 0..total {
        let mut rem = flat;
        for k in 0..n {
            node[k] = rem % nodes;
            rem /= nodes;
            z[k] = roots[node[k]] * radius;
        }
        f.eval_into(&z, &mut val);
        for (pos, alpha) in basis.indices().iter().enumerate() {
            // ω^{-k·α}
            let mut idx = 0usize;
            for (k, e) in alpha.exponents().iter().enumerate() {
                idx += node[k] * *e as usize;
            }
            let phase = roots[idx % nodes].conj();
            for i in 0..n {
                sums[i][pos] += val[i] * phase;
            }
        }
    }
    let components = sums
        .into_iter()
        .map(|s| {
            let mut j = template.clone();
            for (pos, alpha) in basis.indices().iter().enumerate() {
                j.coeffs_mut()[pos] = s[pos] / (total as f64 * radius.powi(alpha.degree() as i32));
            }
            j
        })
        .collect();
    JetMap::general(components).expect("consistent shapes")
}

pub const CONSISTENCY_TOL: f64 = 1e-8;
const CONSISTENCY_RADIUS: f64 = 0.25;
const CONSISTENCY_NODES: usize = 32;

/// Checks that an evaluator's Taylor coefficients match a jet.
pub fn check_consistency(f: &Evaluator, jet: &JetMap, tol: f64) -> Result<()> {
    if f.dim() != jet.dim() {
        return Err(Error::Shape(format!("evaluator dim {} vs jet dim {}", f.dim(), jet.dim())));
    }
    let sampled = fourier_coefficients(f, jet.degree(), CONSISTENCY_RADIUS, CONSISTENCY_NODES);
    let err = sampled.max_abs_diff(&JetMap::general(jet.components().to_vec())?);
    if err.is_nan() || err > tol {
        return Err(Error::Domain(format!(
            "evaluator and jet disagree: max coefficient error {err:.3e} > {tol:.1e}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_jacobian_of_polynomial() {
        let f = Evaluator::new(2, |z, out| {
            out[0] = z[0] + z[1] * z[1];
            out[1] = z[1] * z[0];
        });
        let df = JacobianEvaluator::cauchy(f);
        let z = [C64::new(0.3, 0.2), C64::new(-0.5, 0.1)];
        let j = df.eval(&z);
        let expect = [[C64::new(1.0, 0.0), z[1] * 2.0], [z[1], z[0]]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((j[i][k] - expect[i][k]).norm() < 1e-12, "{i}{k}");
            }
        }
    }

    #[test]
    fn fourier_recovers_polynomial() {
        let f = Evaluator::new(2, |z, out| {
            out[0] = z[0] - z[0] * z[1] * 3.0;
            out[1] = z[1] * z[1] * z[1];
        });
        let j = fourier_coefficients(&f, 3, 0.5, 8);
        assert!((j.component(0).coeff(&[1, 1]) + 3.0).norm() < 1e-13);
        assert!((j.component(1).coeff(&[0, 3]) - 1.0).norm() < 1e-13);
        assert!(j.component(0).coeff(&[0, 2]).norm() < 1e-13);
    }
}
