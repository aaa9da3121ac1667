//! OTFS transform chain with rectangular pulses.
//!
//! The ISFFT carries the `1/(MN)` factor and the SFFT is an unnormalized
//! sum, so `sfft(isfft(x)) = x`. The sampled Heisenberg/Wigner pair uses
//! scale factors `1` and `1/M`, which also makes it an exact inverse pair.
//! All transforms are evaluated as separable direct DFT sums with exact
//! twiddle tables (phases reduced modulo the period before `exp`).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::PathTap;
use crate::error::{Error, Result};
use crate::grid::{DdGrid, GridDims, TfGrid};

/// `table[i] = exp(sign * j 2 pi i / len)`.
fn twiddles(len: usize, sign: f64) -> Vec<Complex64> {
    (0..len)
        .map(|i| Complex64::from_polar(1.0, sign * 2.0 * PI * i as f64 / len as f64))
        .collect()
}

/// `out[i][j] = sum_k sum_l in[k][l] * tw_n[(i k) mod N] * tw_m[(j l) mod M]`
/// on row-major data.
fn dft2(input: &[Complex64], n: usize, m: usize, tw_n: &[Complex64], tw_m: &[Complex64]) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    // along the second index
    let mut tmp = vec![zero; n * m];
    for k in 0..n {
        let row = &input[k * m..(k + 1) * m];
        for j in 0..m {
            let mut acc = zero;
            for (l, x) in row.iter().enumerate() {
                acc += x * tw_m[(j * l) % m];
            }
            tmp[k * m + j] = acc;
        }
    }
    // along the first index
    let mut out = vec![zero; n * m];
    for i in 0..n {
        for k in 0..n {
            let w = tw_n[(i * k) % n];
            let src = &tmp[k * m..(k + 1) * m];
            let dst = &mut out[i * m..(i + 1) * m];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * w;
            }
        }
    }
    out
}

/// `X[n,m] = 1/(MN) sum_k sum_l x[k,l] exp(j 2 pi (nk/N - ml/M))`.
pub fn isfft(x: &DdGrid) -> TfGrid {
    let dims = *x.dims();
    let (n, m) = (dims.n, dims.m);
    let scale = 1.0 / (n * m) as f64;
    let data = dft2(x.as_rows(), n, m, &twiddles(n, 1.0), &twiddles(m, -1.0))
        .into_iter()
        .map(|z| z * scale)
        .collect();
    TfGrid::from_rows(dims, data).expect("shape preserved")
}

/// `x[k,l] = sum_n sum_m X[n,m] exp(-j 2 pi (nk/N - ml/M))`.
pub fn sfft(big_x: &TfGrid) -> DdGrid {
    let dims = *big_x.dims();
    let (n, m) = (dims.n, dims.m);
    let data = dft2(big_x.as_rows(), n, m, &twiddles(n, -1.0), &twiddles(m, 1.0));
    DdGrid::from_rows(dims, data).expect("shape preserved")
}

/// Sampled time-domain frame, `N M` samples at period `1/(M delta_f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrame {
    dims: GridDims,
    samples: Vec<Complex64>,
}

impl TimeFrame {
    pub fn new(dims: GridDims, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != dims.len() {
            return Err(Error::LengthMismatch { expected: dims.len(), actual: samples.len() });
        }
        Ok(Self { dims, samples })
    }

    pub fn dims(&self) -> &GridDims {
        &self.dims
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn sample_period(&self) -> f64 {
        self.dims.delay_resolution()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Cyclic delay by `shift` samples.
    pub fn delayed(&self, shift: usize) -> Self {
        let len = self.samples.len();
        let samples = (0..len).map(|i| self.samples[(i + len - shift % len) % len]).collect();
        Self { dims: self.dims, samples }
    }
}

/// Rectangular-pulse Heisenberg transform: symbol `n` occupies samples
/// `[nM, (n+1)M)` and `s[nM + q] = sum_m X[n,m] exp(j 2 pi m q / M)`.
pub fn heisenberg_rect(big_x: &TfGrid) -> TimeFrame {
    let dims = *big_x.dims();
    let m = dims.m;
    let tw = twiddles(m, 1.0);
    let mut samples = Vec::with_capacity(dims.len());
    for n in 0..dims.n {
        for q in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for sc in 0..m {
                acc += big_x.get(n, sc) * tw[(sc * q) % m];
            }
            samples.push(acc);
        }
    }
    TimeFrame { dims, samples }
}

/// Rectangular-pulse Wigner transform,
/// `Y[n,m] = 1/M sum_q y[nM + q] exp(-j 2 pi m q / M)`.
pub fn wigner_rect(y: &TimeFrame) -> TfGrid {
    let dims = y.dims;
    let m = dims.m;
    let tw = twiddles(m, -1.0);
    let scale = 1.0 / m as f64;
    TfGrid::from_fn(dims, |n, sc| {
        let block = &y.samples[n * m..(n + 1) * m];
        let acc: Complex64 = block.iter().enumerate().map(|(q, s)| s * tw[(sc * q) % m]).sum();
        acc * scale
    })
}

/// Time-frequency channel coefficients for integer taps:
/// `H[n,m] = sum_i h_i exp(j 2 pi beta_i n / N) exp(-j 2 pi alpha_i beta_i / (NM)) exp(-j 2 pi m alpha_i / M)`.
pub fn tf_channel_gains(taps: &[PathTap], dims: &GridDims) -> TfGrid {
    let (n_sz, m_sz) = (dims.n, dims.m);
    let nm = (n_sz * m_sz) as f64;
    TfGrid::from_fn(*dims, |n, m| {
        taps.iter()
            .map(|t| {
                let doppler = ((t.beta * n) % n_sz) as f64 / n_sz as f64;
                let cross = (t.alpha * t.beta) as f64 / nm;
                let delay = ((m * t.alpha) % m_sz) as f64 / m_sz as f64;
                t.gain * Complex64::from_polar(1.0, 2.0 * PI * (doppler - cross - delay))
            })
            .sum()
    })
}

/// Noiseless end-to-end channel evaluated through the TF domain:
/// `sfft(H .* isfft(x))`. Independent of the sparse matrix assembly.
pub fn oracle_apply(x: &DdGrid, taps: &[PathTap]) -> DdGrid {
    let dims = *x.dims();
    let tf = isfft(x);
    let gains = tf_channel_gains(taps, &dims);
    let product = tf
        .as_rows()
        .iter()
        .zip(gains.as_rows())
        .map(|(a, b)| a * b)
        .collect();
    sfft(&TfGrid::from_rows(dims, product).expect("shape preserved"))
}
