//! Mixed-radix complex FFT (Stockham autosort) for arbitrary lengths.
//!
//! Lengths are factored into primes; radices 2 and 4 have dedicated butterflies and every
//! other prime uses a direct DFT of that size. Good enough for the grid sizes a
//! desk-scale torus uses (N up to a few hundred, typically highly composite).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use crate::math;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    #[inline]
    pub const fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    #[inline]
    pub fn conj(self) -> Self {
        Complex::new(self.re, -self.im)
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn scale(self, s: f64) -> Self {
        Complex::new(self.re * s, self.im * s)
    }
}

impl Add for Complex {
    type Output = Complex;
    #[inline]
    fn add(self, rhs: Complex) -> Complex {
        Complex::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    #[inline]
    fn sub(self, rhs: Complex) -> Complex {
        Complex::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    #[inline]
    fn mul(self, rhs: Complex) -> Complex {
        Complex::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}

/// Precomputed factorization and twiddle table for one transform length.
#[derive(Clone, Debug)]
pub struct FftPlan {
    len: usize,
    factors: Vec<usize>,
    /// `e^{-2πi t / len}` for `t in 0..len`.
    twiddles: Vec<Complex>,
    max_radix: usize,
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let mut factors = prime_factors(len);
        // Pair factors of two into radix-4 passes.
        let twos = factors.iter().filter(|&&p| p == 2).count();
        factors.retain(|&p| p != 2);
        let mut merged = vec![4; twos / 2];
        if twos % 2 == 1 {
            merged.push(2);
        }
        merged.extend(factors);
        let factors = merged;
        let twiddles = (0..len)
            .map(|t| {
                let angle = -2.0 * PI * (t as f64) / (len as f64);
                Complex::new(math::cos(angle), math::sin(angle))
            })
            .collect();
        let max_radix = factors.iter().copied().max().unwrap_or(1);
        FftPlan {
            len,
            factors,
            twiddles,
            max_radix,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward transform `X[k] = Σ x[n] e^{-2πi kn/N}` in place.
    /// `scratch` must hold at least `len` entries.
    pub fn forward(&self, data: &mut [Complex], scratch: &mut [Complex]) {
        self.run(data, scratch);
    }

    /// Unnormalized inverse transform (no `1/N` factor) in place.
    pub fn inverse(&self, data: &mut [Complex], scratch: &mut [Complex]) {
        for z in data.iter_mut() {
            *z = z.conj();
        }
        self.run(data, scratch);
        for z in data.iter_mut() {
            *z = z.conj();
        }
    }

    fn run(&self, data: &mut [Complex], scratch: &mut [Complex]) {
        let n = self.len;
        assert_eq!(data.len(), n, "FFT buffer length mismatch");
        assert!(scratch.len() >= n, "FFT scratch too small");
        if n == 1 {
            return;
        }
        let scratch = &mut scratch[..n];
        let mut radix_buf = [Complex::ZERO; 16];
        let mut radix_heap = if self.max_radix > 8 {
            vec![Complex::ZERO; 2 * self.max_radix]
        } else {
            Vec::new()
        };

        let mut in_data = true;
        let mut span = 1usize;
        for &p in &self.factors {
            let (src, dst): (&[Complex], &mut [Complex]) = if in_data {
                (&*data, &mut *scratch)
            } else {
                (&*scratch, &mut *data)
            };
            if p == 2 {
                radix2_pass(src, dst, span, &self.twiddles);
            } else if p == 4 {
                radix4_pass(src, dst, span, &self.twiddles);
            } else {
                let buf: &mut [Complex] = if p <= 8 {
                    &mut radix_buf[..2 * p]
                } else {
                    &mut radix_heap[..2 * p]
                };
                generic_pass(src, dst, span, p, &self.twiddles, buf);
            }
            in_data = !in_data;
            span *= p;
        }
        if !in_data {
            data.copy_from_slice(scratch);
        }
    }
}

fn radix2_pass(src: &[Complex], dst: &mut [Complex], span: usize, tw: &[Complex]) {
    let n = src.len();
    let half = n / 2;
    let tw_stride = n / (span * 2);
    for block in 0..half / span {
        let j0 = block * span;
        let base = block * span * 2;
        for k in 0..span {
            let a = src[j0 + k];
            let b = src[j0 + k + half] * tw[k * tw_stride];
            dst[base + k] = a + b;
            dst[base + k + span] = a - b;
        }
    }
}

fn radix4_pass(src: &[Complex], dst: &mut [Complex], span: usize, tw: &[Complex]) {
    let n = src.len();
    let m = n / 4;
    let tw_stride = n / (span * 4);
    // Multiplication by −i.
    let rot = |z: Complex| Complex::new(z.im, -z.re);
    for block in 0..m / span {
        let j0 = block * span;
        let base = block * span * 4;
        for k in 0..span {
            let j = j0 + k;
            let t = k * tw_stride;
            let v0 = src[j];
            let v1 = src[j + m] * tw[t];
            let v2 = src[j + 2 * m] * tw[2 * t];
            let v3 = src[j + 3 * m] * tw[3 * t];
            let s02 = v0 + v2;
            let d02 = v0 - v2;
            let s13 = v1 + v3;
            let d13 = rot(v1 - v3);
            dst[base + k] = s02 + s13;
            dst[base + k + span] = d02 + d13;
            dst[base + k + 2 * span] = s02 - s13;
            dst[base + k + 3 * span] = d02 - d13;
        }
    }
}

fn generic_pass(
    src: &[Complex],
    dst: &mut [Complex],
    span: usize,
    p: usize,
    tw: &[Complex],
    buf: &mut [Complex],
) {
    let n = src.len();
    let m = n / p;
    let tw_stride = n / (span * p);
    let root_stride = n / p;
    let (v, out) = buf.split_at_mut(p);
    for j in 0..m {
        let k = j % span;
        for (r, slot) in v.iter_mut().enumerate() {
            *slot = src[j + r * m] * tw[(r * k * tw_stride) % n];
        }
        for (s, slot) in out.iter_mut().enumerate() {
            let mut acc = v[0];
            for (r, &x) in v.iter().enumerate().skip(1) {
                acc = acc + x * tw[((r * s) % p) * root_stride];
            }
            *slot = acc;
        }
        let base = (j / span) * span * p + k;
        for (s, &x) in out.iter().enumerate() {
            dst[base + s * span] = x;
        }
    }
}

/// Row/column 2D transform over a square `n × n` grid stored row-major
/// (x fastest).
#[derive(Clone, Debug)]
pub struct Fft2d {
    plan: FftPlan,
}

impl Fft2d {
    pub fn new(n: usize) -> Self {
        Fft2d {
            plan: FftPlan::new(n),
        }
    }

    pub fn side(&self) -> usize {
        self.plan.len()
    }

    pub fn plan(&self) -> &FftPlan {
        &self.plan
    }

    pub fn forward(&self, grid: &mut [Complex]) {
        self.apply(grid, false);
    }

    /// Unnormalized; divide by `n²` to invert [`Fft2d::forward`].
    pub fn inverse(&self, grid: &mut [Complex]) {
        self.apply(grid, true);
    }

    fn apply(&self, grid: &mut [Complex], inverse: bool) {
        let n = self.plan.len();
        assert_eq!(grid.len(), n * n);
        let mut line = vec![Complex::ZERO; n];
        let mut scratch = vec![Complex::ZERO; n];
        for row in grid.chunks_exact_mut(n) {
            if inverse {
                self.plan.inverse(row, &mut scratch);
            } else {
                self.plan.forward(row, &mut scratch);
            }
        }
        for col in 0..n {
            for (j, z) in line.iter_mut().enumerate() {
                *z = grid[j * n + col];
            }
            if inverse {
                self.plan.inverse(&mut line, &mut scratch);
            } else {
                self.plan.forward(&mut line, &mut scratch);
            }
            for (j, z) in line.iter().enumerate() {
                grid[j * n + col] = *z;
            }
        }
    }
}

/// Signed wavenumber of FFT bin `index` for length `n`, in `[-n/2, n/2)`.
#[inline]
pub fn wavenumber(index: usize, n: usize) -> i64 {
    if index < n.div_ceil(2) {
        index as i64
    } else {
        index as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex]) -> Vec<Complex> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex::ZERO, |acc, (j, &v)| {
                    let a = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                    acc + v * Complex::new(math::cos(a), math::sin(a))
                })
            })
            .collect()
    }

    fn sample(n: usize) -> Vec<Complex> {
        (0..n)
            .map(|j| {
                let t = j as f64;
                Complex::new(math::sin(0.7 * t) + 0.1 * t, math::cos(1.3 * t * t))
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_mixed_lengths() {
        for n in [1, 2, 3, 4, 5, 6, 8, 12, 14, 30, 37, 60, 64, 74, 96, 128] {
            let x = sample(n);
            let expected = naive_dft(&x);
            let mut got = x.clone();
            let mut scratch = vec![Complex::ZERO; n];
            FftPlan::new(n).forward(&mut got, &mut scratch);
            for (a, b) in got.iter().zip(&expected) {
                assert!((*a - *b).norm_sqr().sqrt() < 1e-9 * n as f64, "n = {n}");
            }
        }
    }

    #[test]
    fn inverse_round_trips() {
        for n in [6, 60, 64] {
            let x = sample(n);
            let plan = FftPlan::new(n);
            let mut y = x.clone();
            let mut scratch = vec![Complex::ZERO; n];
            plan.forward(&mut y, &mut scratch);
            plan.inverse(&mut y, &mut scratch);
            for (a, b) in y.iter().zip(&x) {
                assert!((a.scale(1.0 / n as f64) - *b).norm_sqr().sqrt() < 1e-12);
            }
        }
    }

    #[test]
    fn wavenumbers_cover_symmetric_range() {
        let ks: Vec<i64> = (0..8).map(|i| wavenumber(i, 8)).collect();
        assert_eq!(ks, [0, 1, 2, 3, -4, -3, -2, -1]);
        let ks: Vec<i64> = (0..5).map(|i| wavenumber(i, 5)).collect();
        assert_eq!(ks, [0, 1, 2, -2, -1]);
    }
}
