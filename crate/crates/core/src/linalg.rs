//! Small dense complex kernels used by the receivers.
//!
//! Matrices are column-major slices. Everything here is sized for MIMO
//! systems with at most a few dozen antennas, so the routines favour
//! simple loops and caller-provided buffers over generality.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Conjugated inner product `a^H b`.
#[inline]
pub fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

#[inline]
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `y -= alpha * x`
#[inline]
pub fn axpy_sub(y: &mut [Complex64], alpha: Complex64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi -= alpha * xi;
    }
}

/// Gram matrix `A^H A` of the selected columns of a column-major `rows`-row
/// matrix, written into `out` (column-major, `cols.len()` square).
pub fn gram_of_columns(data: &[Complex64], rows: usize, cols: &[usize], out: &mut [Complex64]) {
    let k = cols.len();
    debug_assert!(out.len() >= k * k);
    for (a, &ca) in cols.iter().enumerate() {
        let col_a = &data[ca * rows..(ca + 1) * rows];
        for (b, &cb) in cols.iter().enumerate().skip(a) {
            let col_b = &data[cb * rows..(cb + 1) * rows];
            let g = dot_conj(col_a, col_b);
            out[b * k + a] = g;
            out[a * k + b] = g.conj();
        }
    }
}

/// In-place inverse of a Hermitian positive-definite `k x k` matrix via
/// Cholesky factorisation. Fails with [`Error::RankDeficient`] when a pivot
/// drops below `rel_tol` times the largest diagonal entry.
pub fn hermitian_pd_inverse(a: &mut [Complex64], k: usize, rel_tol: f64) -> Result<()> {
    debug_assert!(a.len() >= k * k);
    let max_diag = (0..k).map(|i| a[i * k + i].re).fold(0.0_f64, f64::max);
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return Err(Error::RankDeficient);
    }
    let floor = rel_tol * max_diag;

    // Lower Cholesky factor L stored in the lower triangle (column-major: (r, c) at c*k + r).
    for j in 0..k {
        let mut d = a[j * k + j].re;
        for p in 0..j {
            d -= a[p * k + j].norm_sqr();
        }
        if !(d > floor) {
            return Err(Error::RankDeficient);
        }
        let ljj = d.sqrt();
        a[j * k + j] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..k {
            let mut s = a[j * k + i];
            for p in 0..j {
                s -= a[p * k + i] * a[p * k + j].conj();
            }
            a[j * k + i] = s / ljj;
        }
    }

    // Invert L in place (lower triangular).
    for j in 0..k {
        let ljj = a[j * k + j].re;
        a[j * k + j] = Complex64::new(1.0 / ljj, 0.0);
        for i in (j + 1)..k {
            let mut s = Complex64::new(0.0, 0.0);
            for p in j..i {
                s -= a[p * k + i] * a[j * k + p];
            }
            a[j * k + i] = s / a[i * k + i].re;
        }
    }

    // A^{-1} = L^{-H} L^{-1}; fill lower triangle then mirror.
    for j in 0..k {
        for i in j..k {
            let mut s = Complex64::new(0.0, 0.0);
            for p in i..k {
                s += a[i * k + p].conj() * a[j * k + p];
            }
            // (i, j) with i >= j holds sum_p conj(Linv[p,i]) Linv[p,j]
            a[j * k + i] = s;
        }
    }
    for j in 0..k {
        a[j * k + j].im = 0.0;
        for i in (j + 1)..k {
            a[i * k + j] = a[j * k + i].conj();
        }
    }
    Ok(())
}

/// Solve `A x = b` for a general square complex matrix with partial pivoting.
pub fn solve_square(a: &[Complex64], k: usize, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if !(scale > 0.0) {
        return Err(Error::RankDeficient);
    }
    for col in 0..k {
        let (piv, pmag) =
            (col..k)
                .map(|r| (r, m[col * k + r].norm()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pmag <= 1e-13 * scale {
            return Err(Error::RankDeficient);
        }
        if piv != col {
            for c in 0..k {
                m.swap(c * k + col, c * k + piv);
            }
            x.swap(col, piv);
        }
        let p = m[col * k + col];
        for r in (col + 1)..k {
            let f = m[col * k + r] / p;
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for c in col..k {
                let v = m[c * k + col];
                m[c * k + r] -= f * v;
            }
            let xc = x[col];
            x[r] -= f * xc;
        }
    }
    for col in (0..k).rev() {
        let mut s = x[col];
        for c in (col + 1)..k {
            s -= m[c * k + col] * x[c];
        }
        x[col] = s / m[col * k + col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn inverse_of_known_hermitian() {
        // [[2, i], [-i, 2]] has inverse (1/3) [[2, -i], [i, 2]]
        let mut a = vec![c(2.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(2.0, 0.0)];
        hermitian_pd_inverse(&mut a, 2, 1e-12).unwrap();
        let want = [
            c(2.0 / 3.0, 0.0),
            c(0.0, 1.0 / 3.0),
            c(0.0, -1.0 / 3.0),
            c(2.0 / 3.0, 0.0),
        ];
        for (g, w) in a.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-14, "{g} vs {w}");
        }
    }

    #[test]
    fn singular_gram_is_rejected() {
        let mut a = vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        assert_eq!(
            hermitian_pd_inverse(&mut a, 2, 1e-12),
            Err(Error::RankDeficient)
        );
    }

    #[test]
    fn solve_matches_inverse() {
        let a = vec![c(4.0, 0.0), c(1.0, 1.0), c(0.5, -0.2), c(3.0, 0.0)];
        let b = vec![c(1.0, 2.0), c(-1.0, 0.5)];
        let x = solve_square(&a, 2, &b).unwrap();
        // residual
        for r in 0..2 {
            let got = a[r] * x[0] + a[2 + r] * x[1];
            assert!((got - b[r]).norm() < 1e-13);
        }
    }
}
