//! Unit-energy constellations with Gray bit labels.
//!
//! Point `j` of an alphabet carries the bits of `j` written MSB first, so
//! the label lookup is just the binary expansion of the symbol index.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
        })
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" | "4qam" => Ok(Modulation::Qpsk),
            "16qam" | "qam16" => Ok(Modulation::Qam16),
            other => Err(Error::Config(format!("unknown modulation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    modulation: Modulation,
    points: Vec<Complex64>,
}

// Gray-coded 4-PAM levels for label 00, 01, 10, 11.
const PAM4_GRAY: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

impl Alphabet {
    pub fn new(modulation: Modulation) -> Self {
        let points = match modulation {
            // 0 -> +1, 1 -> -1
            Modulation::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            Modulation::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                (0..4)
                    .map(|j| {
                        let re = if j & 0b10 == 0 { s } else { -s };
                        let im = if j & 0b01 == 0 { s } else { -s };
                        Complex64::new(re, im)
                    })
                    .collect()
            }
            Modulation::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                (0..16)
                    .map(|j| Complex64::new(PAM4_GRAY[j >> 2] * s, PAM4_GRAY[j & 0b11] * s))
                    .collect()
            }
        };
        Self { modulation, points }
    }

    pub fn bpsk() -> Self {
        Self::new(Modulation::Bpsk)
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation.bits_per_symbol()
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Number of differing label bits between two symbol indices.
    pub fn bit_errors(&self, sent: usize, detected: usize) -> u32 {
        ((sent ^ detected) as u32).count_ones()
    }

    /// Symbol index closest to `z` in Euclidean distance (lowest index on ties).
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}
