//! Small fixed-size vector and tensor helpers.
//!
//! `Mat2` is indexed `m[i][j]`. A velocity gradient is stored with
//! `g[i][j] = ∂u_i/∂X_j`. Symmetric tensors store `(s11, s12, s22)`.

use crate::scalar::Scalar;

pub type Vec2<T> = [T; 2];
pub type Mat2<T> = [[T; 2]; 2];
pub type Sym<T> = [T; 3];

pub fn zero2<T: Scalar>() -> Vec2<T> {
    [T::zero(); 2]
}

pub fn zero_mat<T: Scalar>() -> Mat2<T> {
    [[T::zero(); 2]; 2]
}

pub fn zero_sym<T: Scalar>() -> Sym<T> {
    [T::zero(); 3]
}

pub fn identity<T: Scalar>() -> Mat2<T> {
    [[T::one(), T::zero()], [T::zero(), T::one()]]
}

pub fn mat_mul<T: Scalar>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    let mut c = zero_mat();
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn mat_vec<T: Scalar>(a: &Mat2<T>, v: &Vec2<T>) -> Vec2<T> {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn transpose<T: Scalar>(a: &Mat2<T>) -> Mat2<T> {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn mat_add<T: Scalar>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

pub fn mat_scale<T: Scalar>(a: &Mat2<T>, s: T) -> Mat2<T> {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

pub fn det<T: Scalar>(a: &Mat2<T>) -> T {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn sym_to_mat<T: Scalar>(s: &Sym<T>) -> Mat2<T> {
    [[s[0], s[1]], [s[1], s[2]]]
}

/// Symmetric part of `m`, returned in packed form.
pub fn mat_to_sym<T: Scalar>(m: &Mat2<T>) -> Sym<T> {
    let half = T::lit(0.5);
    [m[0][0], (m[0][1] + m[1][0]) * half, m[1][1]]
}

pub fn sym_add<T: Scalar>(a: &Sym<T>, b: &Sym<T>) -> Sym<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sym_sub<T: Scalar>(a: &Sym<T>, b: &Sym<T>) -> Sym<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn sym_scale<T: Scalar>(a: &Sym<T>, s: T) -> Sym<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn sym_trace<T: Scalar>(a: &Sym<T>) -> T {
    a[0] + a[2]
}

pub fn sym_vec<T: Scalar>(s: &Sym<T>, v: &Vec2<T>) -> Vec2<T> {
    [s[0] * v[0] + s[1] * v[1], s[1] * v[0] + s[2] * v[1]]
}

/// Frobenius norm with the off-diagonal counted twice.
pub fn sym_norm<T: Scalar>(a: &Sym<T>) -> T {
    (a[0] * a[0] + T::lit(2.0) * a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn vec_add<T: Scalar>(a: &Vec2<T>, b: &Vec2<T>) -> Vec2<T> {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn vec_sub<T: Scalar>(a: &Vec2<T>, b: &Vec2<T>) -> Vec2<T> {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn vec_scale<T: Scalar>(a: &Vec2<T>, s: T) -> Vec2<T> {
    [a[0] * s, a[1] * s]
}

pub fn dot<T: Scalar>(a: &Vec2<T>, b: &Vec2<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

pub fn inverse<T: Scalar>(a: &Mat2<T>) -> Option<Mat2<T>> {
    let d = det(a);
    if d == T::zero() {
        return None;
    }
    let inv = T::one() / d;
    Some([
        [a[1][1] * inv, -a[0][1] * inv],
        [-a[1][0] * inv, a[0][0] * inv],
    ])
}

/// Solves a 3×3 system by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot vanishes relative to the matrix scale.
pub fn solve3<T: Scalar>(a: &[[T; 3]; 3], b: &[T; 3]) -> Option<[T; 3]> {
    let mut m = *a;
    let mut r = *b;
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale == T::zero() {
        return None;
    }
    let tiny = scale * T::epsilon() * T::lit(16.0);
    for col in 0..3 {
        let mut piv = col;
        for row in col + 1..3 {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col].abs() <= tiny {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                let v = m[col][k];
                m[row][k] -= f * v;
            }
            let v = r[col];
            r[row] -= f * v;
        }
    }
    let mut x = [T::zero(); 3];
    for col in (0..3).rev() {
        let mut acc = r[col];
        for k in col + 1..3 {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

/// Cheap 1-norm condition estimate of a 3×3 matrix via its explicit inverse.
pub fn cond3<T: Scalar>(a: &[[T; 3]; 3]) -> T {
    let norm1 = |m: &[[T; 3]; 3]| {
        (0..3)
            .map(|j| (0..3).fold(T::zero(), |acc, i| acc + m[i][j].abs()))
            .fold(T::zero(), T::max)
    };
    let mut inv = [[T::zero(); 3]; 3];
    for j in 0..3 {
        let mut e = [T::zero(); 3];
        e[j] = T::one();
        match solve3(a, &e) {
            Some(col) => {
                for i in 0..3 {
                    inv[i][j] = col[i];
                }
            }
            None => return T::infinity(),
        }
    }
    norm1(a) * norm1(&inv)
}
