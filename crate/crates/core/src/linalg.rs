//! Complex dense linear algebra shared by the channel, tracking, and
//! beamforming modules. Thin wrappers around `nalgebra` with explicit shape
//! checks at operation boundaries.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

/// `e^{j phase}` as a unit-modulus complex number.
#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::new(phase.cos(), phase.sin())
}

/// Inner product `a^H b`.
#[inline]
pub fn inner(a: &CVec, b: &CVec) -> C64 {
    a.dotc(b)
}

/// Rank-one outer product `a b^H`.
pub fn outer(a: &CVec, b: &CVec) -> CMat {
    let mut m = CMat::zeros(a.len(), b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            m[(i, j)] = a[i] * b[j].conj();
        }
    }
    m
}

pub fn check_len(name: &str, v: &CVec, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Shape(format!(
            "{name}: expected length {expected}, got {}",
            v.len()
        )));
    }
    Ok(())
}

pub fn check_dims(name: &str, m: &CMat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Shape(format!(
            "{name}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Maximum absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let adj = m.adjoint();
    (m - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
///
/// Two-sided complex Jacobi iteration. Unlike tridiagonalization-based
/// solvers, Jacobi keeps high relative accuracy on strongly graded
/// positive-semidefinite matrices (eigenvalues spread over many decades),
/// which the artificial-noise subproblem produces routinely.
///
/// Returns `(eigenvalues, eigenvectors)` with orthonormal columns matching
/// the eigenvalue order.
pub fn hermitian_eigen(m: &CMat) -> Result<(DVector<f64>, CMat)> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "hermitian_eigen: matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if hermitian_defect(m) > 1e-10 * scale.max(1.0) {
        return Err(Error::Domain("hermitian_eigen: matrix is not Hermitian".into()));
    }
    // Symmetrize exactly before factorizing to suppress round-off drift.
    let mut a = (m + m.adjoint()).scale(0.5);
    let n = a.nrows();
    let mut v = CMat::identity(n, n);

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].norm());
            }
        }
        // Rotations stop once every off-diagonal entry is negligible
        // relative to its own row/column diagonals (graded criterion).
        let mut converged = true;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let threshold = f64::EPSILON * (app.abs() * aqq.abs()).sqrt();
                if apq.norm() <= threshold.max(f64::MIN_POSITIVE) {
                    continue;
                }
                converged = false;
                // Absorb the phase so the 2x2 block becomes real symmetric.
                let r = apq.norm();
                let phase = apq / C64::new(r, 0.0);
                // Classic Jacobi angle for [[app, r], [r, aqq]].
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Column rotation G: columns (p, q) of A and V.
                // New col_p = c * col_p * phase.conj()... fold the phase into
                // column p so the rotated block is real.
                let cs = C64::new(c, 0.0);
                let sn = C64::new(s, 0.0);
                for i in 0..n {
                    let aip = a[(i, p)] * phase;
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * cs - aiq * sn;
                    a[(i, q)] = aip * sn + aiq * cs;
                    let vip = v[(i, p)] * phase;
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * cs - viq * sn;
                    v[(i, q)] = vip * sn + viq * cs;
                }
                for j in 0..n {
                    let apj = a[(p, j)] * phase.conj();
                    let aqj = a[(q, j)];
                    a[(p, j)] = apj * cs - aqj * sn;
                    a[(q, j)] = apj * sn + aqj * cs;
                }
                // Clean the annihilated pair against round-off drift.
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
            }
        }
        if converged {
            break;
        }
        let _ = off;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.partial_cmp(&a[(i, i)].re).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)].re));
    let mut vectors = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &v.column(i));
    }
    Ok((values, vectors))
}

/// Ratio of the second to the largest singular value; 0 for rank-one input.
pub fn rank_one_defect(m: &CMat) -> f64 {
    let svd = m.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sv.len() < 2 || sv[0] == 0.0 {
        0.0
    } else {
        sv[1] / sv[0]
    }
}
