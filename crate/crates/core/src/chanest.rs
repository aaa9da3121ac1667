//! Delay-Doppler channel estimation from impulse pilots.
//!
//! Each transmit antenna sends a single impulse in its own pilot frame
//! position. After the channel, receive grid `q` holds a copy of link
//! `(q, p)`'s effective taps starting at antenna `p`'s pilot, so reading a
//! guard rectangle next to every pilot gives all links from one frame. Cells
//! outside every guard rectangle carry only noise and set the detection
//! threshold.

use num_complex::Complex64;

use crate::channel::{assemble_from_effective, effective_gain, MimoChannel, TapIndex};
use crate::error::{Error, Result};
use crate::grid::{DdGrid, GridDims};
use crate::sparse::SparseChannelMatrix;

/// Default detection threshold in multiples of the estimated noise std.
pub const DEFAULT_THRESHOLD_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    /// `(Doppler index, delay index)` of each transmit antenna's impulse.
    pub pilots: Vec<(usize, usize)>,
    pub amplitude: f64,
    /// Doppler extent of each guard rectangle (offsets `0..=guard_beta`).
    pub guard_beta: usize,
    /// Delay extent of each guard rectangle (offsets `0..=guard_alpha`).
    pub guard_alpha: usize,
}

impl PilotPlan {
    /// Pilots on the grid diagonal with equal cyclic spacing. Two antennas
    /// give `(0, 0)` and `(N/2, M/2)` with guards `(N/2 - 1, M/2 - 1)`; a
    /// single antenna keeps the same guard so half the grid stays noise-only.
    pub fn lattice(dims: &GridDims, n_a: usize, amplitude: f64) -> Result<Self> {
        let slots = n_a.max(2);
        let (step_b, step_a) = (dims.n / slots, dims.m / slots);
        if n_a == 0 || step_b == 0 || step_a == 0 {
            return Err(Error::PilotPlan(format!(
                "cannot place {n_a} pilots on a {}x{} grid",
                dims.n, dims.m
            )));
        }
        Ok(Self {
            pilots: (0..n_a).map(|p| (p * step_b, p * step_a)).collect(),
            amplitude,
            guard_beta: step_b - 1,
            guard_alpha: step_a - 1,
        })
    }

    fn region_fits(&self, dims: &GridDims) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::PilotPlan(format!("amplitude {} must be > 0", self.amplitude)));
        }
        if self.guard_beta >= dims.n || self.guard_alpha >= dims.m {
            return Err(Error::PilotPlan("guard region wraps onto itself".into()));
        }
        for &(n, m) in &self.pilots {
            if n >= dims.n || m >= dims.m {
                return Err(Error::PilotPlan(format!("pilot ({n}, {m}) outside the grid")));
            }
        }
        // cyclic overlap test per axis: offsets differ by at most the extent
        let overlaps = |d: usize, len: usize, extent: usize| d <= extent || len - d <= extent;
        for (i, a) in self.pilots.iter().enumerate() {
            for b in &self.pilots[i + 1..] {
                let dn = (b.0 + dims.n - a.0) % dims.n;
                let dm = (b.1 + dims.m - a.1) % dims.m;
                if overlaps(dn, dims.n, self.guard_beta) && overlaps(dm, dims.m, self.guard_alpha) {
                    return Err(Error::PilotPlan(format!("guard regions of pilots {a:?} and {b:?} overlap")));
                }
            }
        }
        Ok(())
    }

    /// Checks the plan against a channel's largest Doppler and delay taps.
    pub fn validate(&self, dims: &GridDims, max_beta: usize, max_alpha: usize) -> Result<()> {
        if self.guard_beta < max_beta || self.guard_alpha < max_alpha {
            return Err(Error::PilotPlan(format!(
                "guard ({}, {}) smaller than channel spread ({max_beta}, {max_alpha})",
                self.guard_beta, self.guard_alpha
            )));
        }
        self.region_fits(dims)
    }

    pub fn guard_contains(&self, pilot: usize, k: usize, l: usize, dims: &GridDims) -> bool {
        let (n, m) = self.pilots[pilot];
        (k + dims.n - n) % dims.n <= self.guard_beta && (l + dims.m - m) % dims.m <= self.guard_alpha
    }
}

/// One impulse frame per transmit antenna.
pub fn make_pilot_frames(plan: &PilotPlan, dims: &GridDims) -> Result<Vec<DdGrid>> {
    plan.region_fits(dims)?;
    Ok(plan
        .pilots
        .iter()
        .map(|&(n, m)| {
            let mut g = DdGrid::zeros(*dims);
            g.set(n, m, Complex64::new(plan.amplitude, 0.0));
            g
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedTap {
    pub beta: usize,
    pub alpha: usize,
    /// Estimated effective gain `h'`.
    pub gain: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    n_rx: usize,
    n_tx: usize,
    links: Vec<Vec<EstimatedTap>>,
    noise_std: Vec<f64>,
}

impl ChannelEstimate {
    pub fn link(&self, q: usize, p: usize) -> &[EstimatedTap] {
        &self.links[q * self.n_tx + p]
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    /// Estimated noise std (total complex) of each receive grid.
    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    pub fn is_empty(&self) -> bool {
        self.links.iter().all(Vec::is_empty)
    }

    pub fn num_taps(&self) -> usize {
        self.links.iter().map(Vec::len).sum()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Reads every link's response out of the receive grids and keeps cells at
/// or above `threshold_sigmas` noise standard deviations.
///
/// The noise std comes from the median magnitude of the noise-only cells:
/// for circular complex Gaussian noise `median |v| = sigma sqrt(ln 2)`.
pub fn estimate_links(
    received: &[DdGrid],
    plan: &PilotPlan,
    dims: &GridDims,
    threshold_sigmas: f64,
) -> Result<ChannelEstimate> {
    plan.region_fits(dims)?;
    for g in received {
        if g.dims().n != dims.n || g.dims().m != dims.m {
            return Err(Error::LengthMismatch { expected: dims.len(), actual: g.dims().len() });
        }
    }
    let noise_cells: Vec<(usize, usize)> = (0..dims.n)
        .flat_map(|k| (0..dims.m).map(move |l| (k, l)))
        .filter(|&(k, l)| !(0..plan.pilots.len()).any(|p| plan.guard_contains(p, k, l, dims)))
        .collect();
    if noise_cells.is_empty() {
        return Err(Error::NoNoiseCells);
    }
    let n_tx = plan.pilots.len();
    let mut links = Vec::with_capacity(received.len() * n_tx);
    let mut noise_std = Vec::with_capacity(received.len());
    for grid in received {
        let mut mags: Vec<f64> = noise_cells.iter().map(|&(k, l)| grid.get(k, l).norm()).collect();
        let sigma = median(&mut mags) / std::f64::consts::LN_2.sqrt();
        noise_std.push(sigma);
        let threshold = threshold_sigmas * sigma;
        for &(n_p, m_p) in &plan.pilots {
            let mut taps = Vec::new();
            for beta in 0..=plan.guard_beta {
                for alpha in 0..=plan.guard_alpha {
                    let v = grid.get((n_p + beta) % dims.n, (m_p + alpha) % dims.m);
                    let mag = v.norm();
                    if mag > 0.0 && mag >= threshold {
                        taps.push(EstimatedTap { beta, alpha, gain: v / plan.amplitude });
                    }
                }
            }
            links.push(taps);
        }
    }
    Ok(ChannelEstimate { n_rx: received.len(), n_tx, links, noise_std })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedMatrix {
    pub matrix: SparseChannelMatrix,
    /// Set when no tap survived thresholding on any link.
    pub degenerate: bool,
}

/// Equivalent MIMO matrix built from the estimated effective gains.
pub fn assemble_estimate(est: &ChannelEstimate, dims: &GridDims) -> Result<EstimatedMatrix> {
    if est.n_rx != est.n_tx {
        return Err(Error::InvalidChannel(format!(
            "assembly needs a square system, got {}x{}",
            est.n_rx, est.n_tx
        )));
    }
    let links: Vec<Vec<(TapIndex, Complex64)>> = est
        .links
        .iter()
        .map(|l| l.iter().map(|t| (TapIndex::new(t.alpha, t.beta), t.gain)).collect())
        .collect();
    let matrix = assemble_from_effective(&links, est.n_tx, dims)?;
    Ok(EstimatedMatrix { matrix, degenerate: est.is_empty() })
}

/// `||A - B||_F` for two sparse matrices of equal order.
pub fn frobenius_error(a: &SparseChannelMatrix, b: &SparseChannelMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::LengthMismatch { expected: a.dim(), actual: b.dim() });
    }
    let mut sum = 0.0;
    for r in 0..a.dim() {
        let ((ca, va), (cb, vb)) = (a.row(r), b.row(r));
        let (mut i, mut j) = (0, 0);
        while i < ca.len() || j < cb.len() {
            let take_a = j >= cb.len() || (i < ca.len() && ca[i] < cb[j]);
            let take_b = i >= ca.len() || (j < cb.len() && cb[j] < ca[i]);
            let d = if take_a {
                i += 1;
                va[i - 1]
            } else if take_b {
                j += 1;
                -vb[j - 1]
            } else {
                i += 1;
                j += 1;
                va[i - 1] - vb[j - 1]
            };
            sum += d.norm_sqr();
        }
    }
    Ok(sum.sqrt())
}

/// Tap-level comparison of an estimate with the true channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SupportStats {
    pub true_taps: usize,
    pub detected_true: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    /// Missed taps whose true magnitude is at least the caller's floor.
    pub false_neg_strong: usize,
    pub strong_taps: usize,
}

/// Counts detected, spurious and missed taps over all links. Taps with
/// `|h'| >= strong_floor` are also tallied separately.
pub fn support_stats(est: &ChannelEstimate, ch: &MimoChannel, dims: &GridDims, strong_floor: f64) -> SupportStats {
    let mut s = SupportStats::default();
    for q in 0..est.n_rx {
        for p in 0..est.n_tx {
            let truth = ch.link(q, p).taps();
            let found = est.link(q, p);
            for t in truth {
                let hit = found.iter().any(|e| e.alpha == t.alpha && e.beta == t.beta);
                let strong = effective_gain(t, dims).norm() >= strong_floor;
                s.true_taps += 1;
                s.strong_taps += strong as usize;
                if hit {
                    s.detected_true += 1;
                } else {
                    s.false_neg += 1;
                    s.false_neg_strong += strong as usize;
                }
            }
            s.false_pos += found
                .iter()
                .filter(|e| !truth.iter().any(|t| t.alpha == e.alpha && t.beta == e.beta))
                .count();
        }
    }
    s
}
