//! Dense complex linear algebra for the small (n <= a handful) systems that
//! show up pointwise: Jacobians of maps and constant terms of jet matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Relative pivot threshold below which a system is treated as singular.
const PIVOT_EPS: f64 = 1e-13;

fn lu_checked(rows: &[Vec<Complex64>]) -> Option<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) || n == 0 {
        return None;
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let scale = m.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if !scale.is_finite() || scale == 0.0 {
        return None;
    }
    let lu = m.lu();
    let u = lu.u();
    let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if min_pivot <= PIVOT_EPS * scale {
        return None;
    }
    Some(lu)
}

/// Solves `A x = b`; `None` when `A` is (numerically) singular.
pub fn solve(a: &[Vec<Complex64>], b: &[Complex64]) -> Option<Vec<Complex64>> {
    if b.len() != a.len() {
        return None;
    }
    let lu = lu_checked(a)?;
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = lu.solve(&rhs)?;
    if x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return None;
    }
    Some(x.iter().copied().collect())
}

pub fn invert(a: &[Vec<Complex64>]) -> Option<Vec<Vec<Complex64>>> {
    let n = a.len();
    let inv = lu_checked(a)?.try_inverse()?;
    Some((0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect())
}
