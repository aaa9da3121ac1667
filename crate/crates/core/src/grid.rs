//! Grid dimensions, delay-Doppler / time-frequency frames and the
//! column-stacking convention `x[k + N l] = x[k, l]`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Frame geometry. `n` Doppler bins (symbols in time), `m` delay bins
/// (subcarriers), subcarrier spacing `delta_f` in Hz. The symbol time is
/// always `1 / delta_f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDims {
    pub n: usize,
    pub m: usize,
    pub delta_f: f64,
}

impl GridDims {
    pub fn new(n: usize, m: usize, delta_f: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidDims(format!("N={n}, M={m} must both be >= 1")));
        }
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return Err(Error::InvalidDims(format!("delta_f={delta_f} must be > 0")));
        }
        Ok(Self { n, m, delta_f })
    }

    /// Reference geometry: N = M = 32, 15 kHz spacing.
    pub fn reference() -> Self {
        Self { n: 32, m: 32, delta_f: 15e3 }
    }

    /// Square grid with 15 kHz spacing, handy for tests.
    pub fn square(size: usize) -> Self {
        Self { n: size, m: size, delta_f: 15e3 }
    }

    pub fn symbol_time(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Delay resolution `1 / (M delta_f)` in seconds, also the sample period.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m as f64 * self.delta_f)
    }

    /// Doppler resolution `1 / (N T)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n as f64 * self.symbol_time())
    }

    pub fn len(&self) -> usize {
        self.n * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Position of grid element `(k, l)` in the vectorized frame.
pub fn vec_index(k: usize, l: usize, dims: &GridDims) -> Result<usize> {
    if k >= dims.n || l >= dims.m {
        return Err(Error::IndexOutOfRange { k, l, n: dims.n, m: dims.m });
    }
    Ok(k + dims.n * l)
}

/// Inverse of [`vec_index`].
pub fn unvec_index(idx: usize, dims: &GridDims) -> Result<(usize, usize)> {
    if idx >= dims.len() {
        return Err(Error::IndexOutOfRange {
            k: idx % dims.n,
            l: idx / dims.n,
            n: dims.n,
            m: dims.m,
        });
    }
    Ok((idx % dims.n, idx / dims.n))
}

macro_rules! complex_grid {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            dims: GridDims,
            // row-major over the first index: data[i * M + j] = grid[i, j]
            data: Vec<Complex64>,
        }

        impl $name {
            pub fn zeros(dims: GridDims) -> Self {
                Self { dims, data: vec![Complex64::new(0.0, 0.0); dims.len()] }
            }

            pub fn from_fn(dims: GridDims, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
                let mut data = Vec::with_capacity(dims.len());
                for i in 0..dims.n {
                    for j in 0..dims.m {
                        data.push(f(i, j));
                    }
                }
                Self { dims, data }
            }

            /// Builds a grid from row-major data (`data[i * M + j]`).
            pub fn from_rows(dims: GridDims, data: Vec<Complex64>) -> Result<Self> {
                if data.len() != dims.len() {
                    return Err(Error::LengthMismatch { expected: dims.len(), actual: data.len() });
                }
                Ok(Self { dims, data })
            }

            pub fn dims(&self) -> &GridDims {
                &self.dims
            }

            pub fn get(&self, i: usize, j: usize) -> Complex64 {
                self.data[i * self.dims.m + j]
            }

            pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
                let m = self.dims.m;
                self.data[i * m + j] = value;
            }

            /// Element access with both indices reduced modulo the grid
            /// period.
            pub fn get_cyclic(&self, i: isize, j: isize) -> Complex64 {
                let i = i.rem_euclid(self.dims.n as isize) as usize;
                let j = j.rem_euclid(self.dims.m as isize) as usize;
                self.get(i, j)
            }

            pub fn as_rows(&self) -> &[Complex64] {
                &self.data
            }

            pub fn energy(&self) -> f64 {
                self.data.iter().map(|z| z.norm_sqr()).sum()
            }

            pub fn max_abs_diff(&self, other: &Self) -> f64 {
                assert_eq!(self.dims.n, other.dims.n);
                assert_eq!(self.dims.m, other.dims.m);
                self.data
                    .iter()
                    .zip(&other.data)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
            }
        }
    };
}

complex_grid!(
    /// Delay-Doppler frame, indexed `[k, l]` with Doppler index `k < N`
    /// and delay index `l < M`.
    DdGrid
);

complex_grid!(
    /// Time-frequency frame, indexed `[n, m]` with symbol index `n < N`
    /// and subcarrier index `m < M`.
    TfGrid
);

/// Stacks a delay-Doppler frame column by column (`k` fastest).
pub fn vectorize(frame: &DdGrid) -> Vec<Complex64> {
    let dims = frame.dims();
    let mut out = Vec::with_capacity(dims.len());
    for l in 0..dims.m {
        for k in 0..dims.n {
            out.push(frame.get(k, l));
        }
    }
    out
}

pub fn unvectorize(v: &[Complex64], dims: GridDims) -> Result<DdGrid> {
    if v.len() != dims.len() {
        return Err(Error::LengthMismatch { expected: dims.len(), actual: v.len() });
    }
    Ok(DdGrid::from_fn(dims, |k, l| v[k + dims.n * l]))
}
