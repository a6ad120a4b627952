//! Periodic one-dimensional transforms used for surface derivatives and norms.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Scalar;

/// How derivatives along X₁ are computed on periodic samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SurfaceDerivative {
    #[default]
    Spectral,
    CentralDifference,
}

fn forward<T: Scalar>(f: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = f.iter().map(|&v| Complex::new(v, T::zero())).collect();
    let mut planner = FftPlanner::<T>::new();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

fn inverse_real<T: Scalar>(mut buf: Vec<Complex<T>>) -> Vec<T> {
    let n = buf.len();
    let mut planner = FftPlanner::<T>::new();
    planner.plan_fft_inverse(n).process(&mut buf);
    let inv = T::one() / T::from_count(n);
    buf.iter().map(|c| c.re * inv).collect()
}

/// Signed integer wavenumber index of DFT bin `m` for length `n`.
pub fn wave_index(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Angular wavenumber of DFT bin `m`.
pub fn wavenumber<T: Scalar>(m: usize, n: usize, period: T) -> T {
    T::lit(2.0) * T::PI() * T::lit(wave_index(m, n) as f64) / period
}

/// `order`-th derivative of periodic samples `f` over one `period`.
pub fn derivative<T: Scalar>(f: &[T], period: T, order: usize, mode: SurfaceDerivative) -> Vec<T> {
    let n = f.len();
    if order == 0 || n == 0 {
        return f.to_vec();
    }
    match mode {
        SurfaceDerivative::Spectral => {
            let mut c = forward(f);
            for (m, cm) in c.iter_mut().enumerate() {
                let nyquist = n.is_multiple_of(2) && m == n / 2;
                if nyquist && order % 2 == 1 {
                    *cm = Complex::new(T::zero(), T::zero());
                    continue;
                }
                let k = wavenumber(m, n, period);
                let ik = Complex::new(T::zero(), k);
                let mut factor = Complex::new(T::one(), T::zero());
                for _ in 0..order {
                    factor *= ik;
                }
                *cm *= factor;
            }
            inverse_real(c)
        }
        SurfaceDerivative::CentralDifference => {
            let h = period / T::from_count(n);
            if order == 2 {
                return (0..n)
                    .map(|i| {
                        let ip = (i + 1) % n;
                        let im = (i + n - 1) % n;
                        (f[ip] - T::lit(2.0) * f[i] + f[im]) / (h * h)
                    })
                    .collect();
            }
            let mut out = f.to_vec();
            for _ in 0..order {
                let prev = out.clone();
                for i in 0..n {
                    let ip = (i + 1) % n;
                    let im = (i + n - 1) % n;
                    out[i] = (prev[ip] - prev[im]) / (T::lit(2.0) * h);
                }
            }
            out
        }
    }
}

/// Values of the periodic samples at the midpoints `x_i + h/2`.
pub fn half_shift<T: Scalar>(f: &[T], period: T, mode: SurfaceDerivative) -> Vec<T> {
    let n = f.len();
    match mode {
        SurfaceDerivative::Spectral => {
            let h = period / T::from_count(n);
            let mut c = forward(f);
            for (m, cm) in c.iter_mut().enumerate() {
                let k = wavenumber(m, n, period);
                let theta = k * h * T::lit(0.5);
                if n.is_multiple_of(2) && m == n / 2 {
                    *cm *= Complex::new(theta.cos(), T::zero());
                } else {
                    *cm *= Complex::new(theta.cos(), theta.sin());
                }
            }
            inverse_real(c)
        }
        SurfaceDerivative::CentralDifference => (0..n)
            .map(|i| (f[i] + f[(i + 1) % n]) * T::lit(0.5))
            .collect(),
    }
}

/// Trigonometric interpolation of `f` onto `m` equispaced points.
pub fn resample<T: Scalar>(f: &[T], m: usize) -> Vec<T> {
    let n = f.len();
    if n == m {
        return f.to_vec();
    }
    let c = forward(f);
    let mut d = vec![Complex::new(T::zero(), T::zero()); m];
    let keep = n.min(m);
    let half = keep / 2;
    for idx in 0..n {
        let k = wave_index(idx, n);
        let ku = k.unsigned_abs() as usize;
        if ku > half || (keep.is_multiple_of(2) && ku == half && k < 0) {
            continue;
        }
        let mut v = c[idx];
        if keep.is_multiple_of(2) && ku == half {
            // split the unpaired Nyquist bin symmetrically
            if m > n {
                v *= T::lit(0.5);
                let target_neg = (m as i64 - half as i64) as usize;
                d[target_neg] += v;
            }
        }
        let target = if k >= 0 { k as usize } else { (m as i64 + k) as usize };
        d[target] += v;
    }
    let scale = T::from_count(m) / T::from_count(n);
    for v in d.iter_mut() {
        *v *= scale;
    }
    inverse_real(d)
}

/// Applies the Fourier multiplier `(1 + k²)^(s/2)` to periodic samples.
pub fn bessel_potential<T: Scalar>(f: &[T], period: T, s: T) -> Vec<T> {
    let n = f.len();
    let mut c = forward(f);
    for (m, cm) in c.iter_mut().enumerate() {
        let k = wavenumber(m, n, period);
        let w = (T::one() + k * k).powf(s * T::lit(0.5));
        *cm *= w;
    }
    inverse_real(c)
}
