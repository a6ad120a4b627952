//! Banded LU factorization with partial pivoting.

use crate::scalar::Scalar;

/// LU factors of a banded matrix with `kl` sub- and `ku` super-diagonals.
/// Row `r` of the working array spans columns `r - kl ..= r + kl + ku` so the
/// fill produced by row interchanges fits.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
    lower: Vec<T>,
    piv: Vec<usize>,
}

/// Pivot column at which the factorization found no usable pivot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularPivot(pub usize);

/// Lower and upper bandwidth of a set of `(row, col)` positions.
pub fn bandwidth(entries: impl Iterator<Item = (usize, usize)>) -> (usize, usize) {
    entries.fold((0, 0), |(kl, ku), (r, c)| {
        if r > c {
            (kl.max(r - c), ku)
        } else {
            (kl, ku.max(c - r))
        }
    })
}

impl<T: Scalar> BandedLu<T> {
    fn pos(&self, r: usize, c: usize) -> usize {
        r * self.width + (c + self.kl - r)
    }

    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        entries: &[(usize, usize, T)],
    ) -> Result<Self, SingularPivot> {
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
            lower: vec![T::zero(); n * kl.max(1)],
            piv: vec![0; n],
        };
        let mut scale = T::zero();
        for &(r, c, v) in entries {
            debug_assert!(c + kl >= r && c <= r + ku);
            let p = lu.pos(r, c);
            lu.data[p] += v;
            scale = scale.max(v.abs());
        }
        let tiny = scale * T::epsilon() * T::lit(16.0);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let right = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = lu.data[lu.pos(k, k)].abs();
            for r in k + 1..=last {
                let v = lu.data[lu.pos(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(SingularPivot(k));
            }
            lu.piv[k] = p;
            if p != k {
                for c in k..=right {
                    let (a, b) = (lu.pos(k, c), lu.pos(p, c));
                    lu.data.swap(a, b);
                }
            }
            let pivot = lu.data[lu.pos(k, k)];
            for r in k + 1..=last {
                let prk = lu.pos(r, k);
                let l = lu.data[prk] / pivot;
                lu.data[prk] = T::zero();
                lu.lower[k * kl + (r - k - 1)] = l;
                if l != T::zero() {
                    for c in k + 1..=right {
                        let v = lu.data[lu.pos(k, c)];
                        let prc = lu.pos(r, c);
                        lu.data[prc] -= l * v;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &mut [T]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                for r in k + 1..=(k + self.kl).min(n - 1) {
                    b[r] -= self.lower[k * self.kl + (r - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                s -= self.data[self.pos(k, c)] * b[c];
            }
            b[k] = s / self.data[self.pos(k, k)];
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }
}
