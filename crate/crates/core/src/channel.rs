//! Sparse delay-Doppler channels and their vectorized equivalent matrices.
//!
//! A path with integer delay tap `alpha` and Doppler tap `beta` moves the
//! symbol at `(k, l)` to `(k + beta, l + alpha)` (both cyclic) and scales it
//! by the effective gain `h exp(-j 2 pi alpha beta / (NM))`.

use std::collections::HashSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::GridDims;
use crate::sparse::SparseChannelMatrix;

/// Reference profile path delays in microseconds.
pub const REFERENCE_DELAYS_US: [f64; 5] = [2.08, 4.164, 6.246, 8.328, 10.41];
/// Reference profile path Doppler shifts in Hz.
pub const REFERENCE_DOPPLERS_HZ: [f64; 5] = [0.0, 470.0, 940.0, 1410.0, 1880.0];

// Largest accepted distance from an integer tap, in taps.
const TAP_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TapIndex {
    pub alpha: usize,
    pub beta: usize,
}

impl TapIndex {
    pub fn new(alpha: usize, beta: usize) -> Self {
        Self { alpha, beta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTap {
    pub alpha: usize,
    pub beta: usize,
    pub gain: Complex64,
}

impl PathTap {
    pub fn new(alpha: usize, beta: usize, gain: Complex64) -> Self {
        Self { alpha, beta, gain }
    }

    pub fn index(&self) -> TapIndex {
        TapIndex::new(self.alpha, self.beta)
    }
}

/// Taps between one transmit and one receive antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannel {
    taps: Vec<PathTap>,
}

impl LinkChannel {
    pub fn new(taps: Vec<PathTap>) -> Result<Self> {
        check_distinct(taps.iter().map(PathTap::index))?;
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[PathTap] {
        &self.taps
    }

    pub fn support(&self) -> Vec<TapIndex> {
        self.taps.iter().map(PathTap::index).collect()
    }
}

fn check_distinct(indices: impl Iterator<Item = TapIndex>) -> Result<()> {
    let mut seen = HashSet::new();
    for t in indices {
        if !seen.insert(t) {
            return Err(Error::DuplicateTap { alpha: t.alpha, beta: t.beta });
        }
    }
    Ok(())
}

/// `n_a x n_a` links; `link(q, p)` is transmit `p` to receive `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoChannel {
    n_a: usize,
    links: Vec<LinkChannel>,
}

impl MimoChannel {
    /// `links` in row-major `(q, p)` order. All links must share one
    /// delay-Doppler support.
    pub fn new(n_a: usize, links: Vec<LinkChannel>) -> Result<Self> {
        if n_a == 0 || links.len() != n_a * n_a {
            return Err(Error::InvalidChannel(format!(
                "expected {} links for n_a={n_a}, got {}",
                n_a * n_a,
                links.len()
            )));
        }
        let mut reference = links[0].support();
        reference.sort();
        for (i, link) in links.iter().enumerate().skip(1) {
            let mut s = link.support();
            s.sort();
            if s != reference {
                return Err(Error::InvalidChannel(format!(
                    "link ({}, {}) has a different delay-Doppler support",
                    i / n_a,
                    i % n_a
                )));
            }
        }
        Ok(Self { n_a, links })
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn link(&self, q: usize, p: usize) -> &LinkChannel {
        &self.links[q * self.n_a + p]
    }

    pub fn links(&self) -> &[LinkChannel] {
        &self.links
    }

    pub fn support(&self) -> Vec<TapIndex> {
        self.links[0].support()
    }

    pub fn max_alpha(&self) -> usize {
        self.support().iter().map(|t| t.alpha).max().unwrap_or(0)
    }

    pub fn max_beta(&self) -> usize {
        self.support().iter().map(|t| t.beta).max().unwrap_or(0)
    }
}

/// Maps physical delays (s) and Doppler shifts (Hz) to integer taps.
/// Negative Doppler wraps onto the upper Doppler bins.
pub fn taps_from_profile(
    delays: &[f64],
    dopplers: &[f64],
    gains: &[Complex64],
    dims: &GridDims,
) -> Result<Vec<PathTap>> {
    if delays.len() != dopplers.len() || delays.len() != gains.len() {
        return Err(Error::Config(format!(
            "profile lists differ in length: {} delays, {} dopplers, {} gains",
            delays.len(),
            dopplers.len(),
            gains.len()
        )));
    }
    let mut taps = Vec::with_capacity(delays.len());
    for ((&tau, &nu), &gain) in delays.iter().zip(dopplers).zip(gains) {
        let a = tau / dims.delay_resolution();
        let b = nu / dims.doppler_resolution();
        let (ar, br) = (a.round(), b.round());
        if (a - ar).abs() > TAP_TOLERANCE || (b - br).abs() > TAP_TOLERANCE {
            return Err(Error::FractionalTap(format!(
                "delay {tau:e} s / Doppler {nu} Hz is ({a:.3}, {b:.3}) taps"
            )));
        }
        if ar < 0.0 || ar >= dims.m as f64 || br.abs() >= dims.n as f64 {
            return Err(Error::TapOutOfRange {
                alpha: ar.max(0.0) as usize,
                beta: br.abs() as usize,
                n: dims.n,
                m: dims.m,
            });
        }
        let beta = (br as i64).rem_euclid(dims.n as i64) as usize;
        taps.push(PathTap::new(ar as usize, beta, gain));
    }
    check_distinct(taps.iter().map(PathTap::index))?;
    Ok(taps)
}

/// Tap support of a physical profile, ignoring gains.
pub fn support_from_profile(delays: &[f64], dopplers: &[f64], dims: &GridDims) -> Result<Vec<TapIndex>> {
    let ones = vec![Complex64::new(1.0, 0.0); delays.len()];
    Ok(taps_from_profile(delays, dopplers, &ones, dims)?.iter().map(PathTap::index).collect())
}

/// Reference profile support mapped onto `dims`.
pub fn reference_support(dims: &GridDims) -> Result<Vec<TapIndex>> {
    let delays: Vec<f64> = REFERENCE_DELAYS_US.iter().map(|d| d * 1e-6).collect();
    support_from_profile(&delays, &REFERENCE_DOPPLERS_HZ, dims)
}

/// Zero-mean circularly-symmetric complex Gaussian with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Draws i.i.d. Rayleigh gains with variance `1/P` per tap on a fixed support.
pub fn gen_random_mimo_channel<R: Rng + ?Sized>(
    rng: &mut R,
    support: &[TapIndex],
    n_a: usize,
) -> Result<MimoChannel> {
    if support.is_empty() {
        return Err(Error::InvalidChannel("empty tap support".into()));
    }
    let var = 1.0 / support.len() as f64;
    let links = (0..n_a * n_a)
        .map(|_| {
            LinkChannel::new(
                support
                    .iter()
                    .map(|t| PathTap::new(t.alpha, t.beta, complex_gaussian(rng, var)))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    MimoChannel::new(n_a, links)
}

/// `h exp(-j 2 pi alpha beta / (NM))`.
pub fn effective_gain(tap: &PathTap, dims: &GridDims) -> Complex64 {
    let nm = dims.n * dims.m;
    let frac = ((tap.alpha * tap.beta) % nm) as f64 / nm as f64;
    tap.gain * Complex64::from_polar(1.0, -2.0 * PI * frac)
}

fn check_in_grid(t: TapIndex, dims: &GridDims) -> Result<()> {
    if t.alpha >= dims.m || t.beta >= dims.n {
        return Err(Error::TapOutOfRange { alpha: t.alpha, beta: t.beta, n: dims.n, m: dims.m });
    }
    Ok(())
}

/// Appends the rows of one `NM x NM` block with the given effective gains,
/// column indices shifted by `col_offset`.
fn push_block_rows(
    rows: &mut [Vec<(usize, Complex64)>],
    effective: &[(TapIndex, Complex64)],
    dims: &GridDims,
    col_offset: usize,
) {
    let (n, m) = (dims.n, dims.m);
    for l in 0..m {
        for k in 0..n {
            let row = &mut rows[k + n * l];
            for &(t, g) in effective {
                let kk = (k + n - t.beta) % n;
                let ll = (l + m - t.alpha) % m;
                row.push((col_offset + kk + n * ll, g));
            }
        }
    }
}

/// Assembles a block matrix from effective (phase-included) gains, one list
/// per link in row-major `(q, p)` order.
pub fn assemble_from_effective(
    links: &[Vec<(TapIndex, Complex64)>],
    n_a: usize,
    dims: &GridDims,
) -> Result<SparseChannelMatrix> {
    if links.len() != n_a * n_a {
        return Err(Error::InvalidChannel(format!("expected {} links, got {}", n_a * n_a, links.len())));
    }
    let nm = dims.len();
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n_a * nm];
    for q in 0..n_a {
        let block_rows = &mut rows[q * nm..(q + 1) * nm];
        for p in 0..n_a {
            let link = &links[q * n_a + p];
            check_distinct(link.iter().map(|(t, _)| *t))?;
            for (t, _) in link {
                check_in_grid(*t, dims)?;
            }
            push_block_rows(block_rows, link, dims, p * nm);
        }
    }
    SparseChannelMatrix::from_rows(n_a * nm, rows)
}

/// Equivalent `NM x NM` matrix of one link.
pub fn build_link_matrix(link: &LinkChannel, dims: &GridDims) -> Result<SparseChannelMatrix> {
    assemble_from_effective(&[effective_taps(link, dims)], 1, dims)
}

/// Block matrix `[H_qp]` of order `n_a N M`.
pub fn build_mimo_matrix(ch: &MimoChannel, dims: &GridDims) -> Result<SparseChannelMatrix> {
    let links: Vec<_> = ch.links().iter().map(|l| effective_taps(l, dims)).collect();
    assemble_from_effective(&links, ch.n_a(), dims)
}

fn effective_taps(link: &LinkChannel, dims: &GridDims) -> Vec<(TapIndex, Complex64)> {
    link.taps().iter().map(|t| (t.index(), effective_gain(t, dims))).collect()
}

/// `y = H x + v` with `v` i.i.d. complex Gaussian of total variance
/// `noise_std^2` per element.
pub fn apply_channel<R: Rng + ?Sized>(
    h: &SparseChannelMatrix,
    x: &[Complex64],
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let mut y = h.mul_vec(x)?;
    if noise_std > 0.0 {
        let var = noise_std * noise_std;
        for v in &mut y {
            *v += complex_gaussian(rng, var);
        }
    }
    Ok(y)
}
