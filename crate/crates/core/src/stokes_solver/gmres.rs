//! Restarted GMRES on a compressed-row matrix.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from per-row entry lists; duplicate columns are summed.
    pub fn from_rows(rows: &[Vec<(usize, T)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            let mut r = row.clone();
            r.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in r {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n: rows.len(), row_ptr, cols, vals }
    }

    pub fn mul(&self, x: &[T], y: &mut [T]) {
        for r in 0..self.n {
            let mut s = T::zero();
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            y[r] = s;
        }
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b * b).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome<T> {
    pub iterations: usize,
    pub relative_residual: T,
    pub converged: bool,
}

/// Solves `A x = b` from the initial guess in `x`.
pub fn gmres<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    x: &mut [T],
    restart: usize,
    max_iter: usize,
    tol: T,
) -> GmresOutcome<T> {
    let n = a.n;
    let bnorm = norm(b).max(T::min_positive_value());
    let mut r = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut iterations = 0;
    let m = restart.max(1);
    loop {
        a.mul(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm(&r);
        if beta / bnorm <= tol || iterations >= max_iter {
            return GmresOutcome {
                iterations,
                relative_residual: beta / bnorm,
                converged: beta / bnorm <= tol,
            };
        }
        let mut v: Vec<Vec<T>> = vec![r.iter().map(|&e| e / beta).collect()];
        let mut h = vec![vec![T::zero(); m]; m + 1];
        let mut cs = vec![T::zero(); m];
        let mut sn = vec![T::zero(); m];
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            a.mul(&v[j], &mut w);
            for i in 0..=j {
                let hij = w.iter().zip(&v[i]).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
                h[i][j] = hij;
                for (wk, &vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if d == T::zero() {
                cs[j] = T::one();
                sn[j] = T::zero();
            } else {
                cs[j] = h[j][j] / d;
                sn[j] = h[j + 1][j] / d;
            }
            h[j][j] = cs[j] * h[j][j] + sn[j] * h[j + 1][j];
            h[j + 1][j] = T::zero();
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            used = j + 1;
            iterations += 1;
            if g[j + 1].abs() / bnorm <= tol || hn == T::zero() || iterations >= max_iter {
                break;
            }
            v.push(w.iter().map(|&e| e / hn).collect());
        }
        let mut y = vec![T::zero(); used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += *yk * v[k][i];
            }
        }
    }
}
