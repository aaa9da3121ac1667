//! MIMO-OFDM baseline over the same delay-Doppler channel.
//!
//! A frame is `N` OFDM blocks of `M` subcarriers, each with a cyclic prefix.
//! The end-to-end matrix is `D B_cpre H_td B_cpin D^H` with a unitary block
//! DFT `D`. Because the prefix covers the largest delay and samples before
//! the frame are taken as zero, that product is block diagonal; the
//! production path builds each `M x M` block directly while
//! [`build_ofdm_matrix_factored`] multiplies the five factors out.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{LinkChannel, MimoChannel, PathTap, TapIndex};
use crate::error::{Error, Result};
use crate::sparse::SparseChannelMatrix;

pub type DenseMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfdmDims {
    /// Blocks per frame.
    pub n: usize,
    /// Subcarriers per block.
    pub m: usize,
    /// Cyclic prefix length.
    pub cp: usize,
}

impl OfdmDims {
    pub fn new(n: usize, m: usize, cp: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidDims(format!("N={n}, M={m} must both be >= 1")));
        }
        if cp > m {
            return Err(Error::Config(format!("cyclic prefix {cp} longer than block {m}")));
        }
        Ok(Self { n, m, cp })
    }

    /// Prefix of `P - 1` samples, extended to the largest delay tap when the
    /// support needs more.
    pub fn for_support(n: usize, m: usize, support: &[TapIndex]) -> Result<Self> {
        let p = support.len();
        let max_alpha = support.iter().map(|t| t.alpha).max().unwrap_or(0);
        Self::new(n, m, p.saturating_sub(1).max(max_alpha))
    }

    /// Block length including the prefix.
    pub fn block_len(&self) -> usize {
        self.m + self.cp
    }

    pub fn frame_len(&self) -> usize {
        self.n * self.block_len()
    }
}

/// Sampled time-varying channel over one prefixed frame, order `N L`.
/// Lower banded: entry `(r, r - alpha)` holds `h exp(j 2 pi beta r / (NM))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDelayMatrix {
    dims: OfdmDims,
    matrix: SparseChannelMatrix,
}

impl TimeDelayMatrix {
    pub fn dims(&self) -> &OfdmDims {
        &self.dims
    }

    pub fn matrix(&self) -> &SparseChannelMatrix {
        &self.matrix
    }
}

pub fn build_time_delay_matrix(taps: &[PathTap], dims: &OfdmDims) -> Result<TimeDelayMatrix> {
    let max_alpha = taps.iter().map(|t| t.alpha).max().unwrap_or(0);
    if max_alpha > dims.cp {
        return Err(Error::Config(format!(
            "delay tap {max_alpha} exceeds cyclic prefix {}",
            dims.cp
        )));
    }
    let nm = dims.n * dims.m;
    let len = dims.frame_len();
    let rows = (0..len).map(|r| {
        // taps sharing a delay land on the same entry
        let mut row: BTreeMap<usize, Complex64> = BTreeMap::new();
        for t in taps {
            if r >= t.alpha {
                let frac = ((t.beta * r) % nm) as f64 / nm as f64;
                *row.entry(r - t.alpha).or_default() += t.gain * Complex64::from_polar(1.0, 2.0 * PI * frac);
            }
        }
        row.into_iter().collect::<Vec<_>>()
    });
    let matrix = SparseChannelMatrix::from_rows(len, rows)?;
    Ok(TimeDelayMatrix { dims: *dims, matrix })
}

/// Unitary `M`-point DFT matrix, `W[k, u] = exp(-j 2 pi k u / M) / sqrt(M)`.
pub fn dft_matrix(m: usize) -> DenseMatrix {
    let s = 1.0 / (m as f64).sqrt();
    DenseMatrix::from_fn(m, m, |k, u| {
        Complex64::from_polar(s, -2.0 * PI * ((k * u) % m) as f64 / m as f64)
    })
}

/// Frequency-domain blocks `W R_CP H_td^(n) T_CP W^H`, one per OFDM block.
pub fn ofdm_blocks(htd: &TimeDelayMatrix) -> Vec<DenseMatrix> {
    let d = htd.dims;
    let (m, cp, l) = (d.m, d.cp, d.block_len());
    let w = dft_matrix(m);
    let wh = w.adjoint();
    (0..d.n)
        .map(|n| {
            let mut g = DenseMatrix::zeros(m, m);
            for u in 0..m {
                let (cols, vals) = htd.matrix.row(n * l + cp + u);
                for (&col, v) in cols.iter().zip(vals) {
                    // prefix sample c < cp repeats data sample m - cp + c
                    let c = col - n * l;
                    let data = if c < cp { m - cp + c } else { c - cp };
                    g[(u, data)] += v;
                }
            }
            &w * g * &wh
        })
        .collect()
}

/// End-to-end `NM x NM` matrix of one link.
pub fn build_ofdm_matrix(htd: &TimeDelayMatrix) -> DenseMatrix {
    let d = htd.dims;
    let mut out = DenseMatrix::zeros(d.n * d.m, d.n * d.m);
    for (n, block) in ofdm_blocks(htd).iter().enumerate() {
        out.view_mut((n * d.m, n * d.m), (d.m, d.m)).copy_from(block);
    }
    out
}

/// Literal five-factor product `D B_cpre H_td B_cpin D^H`. Dense and
/// cubic in `N L`; meant for cross-checking small frames.
pub fn build_ofdm_matrix_factored(htd: &TimeDelayMatrix) -> DenseMatrix {
    let d = htd.dims;
    let (n, m, cp, l) = (d.n, d.m, d.cp, d.block_len());
    let one = Complex64::new(1.0, 0.0);
    let w = dft_matrix(m);

    let mut big_d = DenseMatrix::zeros(n * m, n * m);
    let mut cp_in = DenseMatrix::zeros(n * l, n * m);
    let mut cp_out = DenseMatrix::zeros(n * m, n * l);
    for b in 0..n {
        big_d.view_mut((b * m, b * m), (m, m)).copy_from(&w);
        // T_CP = [C_CP; I_M], C_CP = last cp rows of I_M
        for r in 0..cp {
            cp_in[(b * l + r, b * m + m - cp + r)] = one;
        }
        for r in 0..m {
            cp_in[(b * l + cp + r, b * m + r)] = one;
            // R_CP = [0_{M x cp} I_M]
            cp_out[(b * m + r, b * l + cp + r)] = one;
        }
    }
    let dense_td = DenseMatrix::from_row_slice(n * l, n * l, &htd.matrix.to_dense());
    let big_dh = big_d.adjoint();
    &big_d * cp_out * dense_td * cp_in * big_dh
}

fn link_time_delay(link: &LinkChannel, dims: &OfdmDims) -> Result<TimeDelayMatrix> {
    build_time_delay_matrix(link.taps(), dims)
}

/// Block matrix `[H_OFDM,qp]` of order `n_a N M`.
pub fn build_mimo_ofdm_matrix(ch: &MimoChannel, n: usize, m: usize) -> Result<DenseMatrix> {
    let dims = OfdmDims::for_support(n, m, &ch.support())?;
    let na = ch.n_a();
    let nm = n * m;
    let mut out = DenseMatrix::zeros(na * nm, na * nm);
    for q in 0..na {
        for p in 0..na {
            let h = build_ofdm_matrix(&link_time_delay(ch.link(q, p), &dims)?);
            out.view_mut((q * nm, p * nm), (nm, nm)).copy_from(&h);
        }
    }
    Ok(out)
}

/// Keeps the largest-magnitude entries of a row (ties by column) until
/// they hold `energy_keep` of the row energy. `entries` must be in column
/// order; the result is too.
fn sparsify_row(entries: &[(usize, Complex64)], energy_keep: f64) -> Vec<(usize, Complex64)> {
    let nonzero: Vec<(usize, Complex64)> = entries.iter().copied().filter(|(_, v)| v.norm_sqr() > 0.0).collect();
    if energy_keep >= 1.0 {
        return nonzero;
    }
    let total: f64 = nonzero.iter().map(|(_, v)| v.norm_sqr()).sum();
    let mut order: Vec<usize> = (0..nonzero.len()).collect();
    order.sort_by(|&a, &b| {
        nonzero[b].1.norm_sqr().total_cmp(&nonzero[a].1.norm_sqr()).then(nonzero[a].0.cmp(&nonzero[b].0))
    });
    let target = energy_keep * total;
    let mut kept_energy = 0.0;
    let mut kept = Vec::new();
    for i in order {
        if kept_energy >= target {
            break;
        }
        kept_energy += nonzero[i].1.norm_sqr();
        kept.push(nonzero[i]);
    }
    kept.sort_by_key(|&(c, _)| c);
    kept
}

fn check_keep(energy_keep: f64) -> Result<()> {
    if !(energy_keep > 0.0 && energy_keep <= 1.0) {
        return Err(Error::Config(format!("energy_keep {energy_keep} outside (0, 1]")));
    }
    Ok(())
}

/// Row-wise energy truncation of a dense square matrix into a sparse graph
/// matrix for message passing.
pub fn sparsify_for_mp(h: &DenseMatrix, energy_keep: f64) -> Result<SparseChannelMatrix> {
    check_keep(energy_keep)?;
    if h.nrows() != h.ncols() {
        return Err(Error::LengthMismatch { expected: h.nrows(), actual: h.ncols() });
    }
    let dim = h.nrows();
    let rows = (0..dim).map(|r| {
        let entries: Vec<(usize, Complex64)> = (0..dim).map(|c| (c, h[(r, c)])).collect();
        sparsify_row(&entries, energy_keep)
    });
    SparseChannelMatrix::from_rows(dim, rows)
}

/// Row-wise energy truncation of an already sparse matrix.
pub fn sparsify_sparse(h: &SparseChannelMatrix, energy_keep: f64) -> Result<SparseChannelMatrix> {
    check_keep(energy_keep)?;
    let rows = h.rows().map(|(cols, vals)| {
        let entries: Vec<(usize, Complex64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
        sparsify_row(&entries, energy_keep)
    });
    SparseChannelMatrix::from_rows(h.dim(), rows)
}

/// Same result as `sparsify_for_mp(build_mimo_ofdm_matrix(..))` without
/// materializing the dense `n_a N M` matrix.
pub fn build_mimo_ofdm_sparse(ch: &MimoChannel, n: usize, m: usize, energy_keep: f64) -> Result<SparseChannelMatrix> {
    check_keep(energy_keep)?;
    let dims = OfdmDims::for_support(n, m, &ch.support())?;
    let na = ch.n_a();
    let nm = n * m;
    // blocks[q * na + p][b] is the b-th diagonal block of link (q, p)
    let blocks = ch
        .links()
        .iter()
        .map(|link| Ok(ofdm_blocks(&link_time_delay(link, &dims)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(na * nm);
    for q in 0..na {
        for b in 0..n {
            for u in 0..m {
                let mut entries = Vec::with_capacity(na * m);
                for p in 0..na {
                    let block = &blocks[q * na + p][b];
                    for v in 0..m {
                        entries.push((p * nm + b * m + v, block[(u, v)]));
                    }
                }
                rows.push(sparsify_row(&entries, energy_keep));
            }
        }
    }
    SparseChannelMatrix::from_rows(na * nm, rows)
}
