//! Simulation configuration and its flat TOML file form.
//!
//! Every key is optional; missing keys take the reference defaults:
//!
//! ```toml
//! n = 32                  # Doppler bins
//! m = 32                  # delay bins
//! delta_f_hz = 15000.0
//! n_a = 2                 # antennas on each side
//! modulation = "bpsk"     # bpsk | qpsk | 16qam
//! delays_us = [2.08, 4.164, 6.246, 8.328, 10.41]
//! dopplers_hz = [0.0, 470.0, 940.0, 1410.0, 1880.0]
//! profile_file = "..."    # optional; replaces delays_us / dopplers_hz
//! damping = 0.5
//! max_iterations = 30
//! epsilon = 0.01
//! master_seed = 1
//! frames_per_point = 100
//! min_bit_errors = 100
//! max_frames_per_point = 10000
//! ofdm_energy_keep = 0.999
//! threshold_sigmas = 3.0
//! fixed_channel = false
//! ```

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alphabet::{Alphabet, Modulation};
use crate::channel::{support_from_profile, LinkChannel, MimoChannel, PathTap, TapIndex};
use crate::channel::{REFERENCE_DELAYS_US, REFERENCE_DOPPLERS_HZ};
use crate::chanest::DEFAULT_THRESHOLD_SIGMAS;
use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::grid::GridDims;

/// Physical path delays and Doppler shifts, optionally with fixed gains for
/// every link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub delays_s: Vec<f64>,
    pub dopplers_hz: Vec<f64>,
    /// Effective per-path gains per link in row-major `(q, p)` order.
    pub gains: Option<Vec<Vec<Complex64>>>,
}

impl ChannelProfile {
    pub fn reference() -> Self {
        Self {
            delays_s: REFERENCE_DELAYS_US.iter().map(|d| d * 1e-6).collect(),
            dopplers_hz: REFERENCE_DOPPLERS_HZ.to_vec(),
            gains: None,
        }
    }

    /// Profile placing one path exactly on each given grid tap.
    pub fn from_taps(taps: &[TapIndex], dims: &GridDims) -> Self {
        Self {
            delays_s: taps.iter().map(|t| t.alpha as f64 * dims.delay_resolution()).collect(),
            dopplers_hz: taps.iter().map(|t| t.beta as f64 * dims.doppler_resolution()).collect(),
            gains: None,
        }
    }

    pub fn support(&self, dims: &GridDims) -> Result<Vec<TapIndex>> {
        support_from_profile(&self.delays_s, &self.dopplers_hz, dims)
    }

    /// The channel fixed by the gain override, if there is one.
    pub fn fixed_channel(&self, dims: &GridDims, n_a: usize) -> Result<Option<MimoChannel>> {
        let Some(gains) = &self.gains else { return Ok(None) };
        if gains.len() != n_a * n_a {
            return Err(Error::Config(format!(
                "profile fixes {} links but n_a={n_a} needs {}",
                gains.len(),
                n_a * n_a
            )));
        }
        let support = self.support(dims)?;
        let links = gains
            .iter()
            .map(|g| {
                if g.len() != support.len() {
                    return Err(Error::Config(format!("gain row has {} values for {} paths", g.len(), support.len())));
                }
                LinkChannel::new(support.iter().zip(g).map(|(t, &h)| PathTap::new(t.alpha, t.beta, h)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(MimoChannel::new(n_a, links)?))
    }

    /// Parses the text table form:
    ///
    /// ```text
    /// # comment
    /// delay_us, doppler_hz
    /// 2.08, 0
    /// 4.164, 470
    /// gain 0 0  0.3 -0.1  0.2 0.4     # rx tx, then re im per path
    /// ```
    ///
    /// Fields may be separated by commas and/or whitespace. `gain` rows are
    /// optional but, when present, must cover every link.
    pub fn parse(text: &str) -> Result<Self> {
        let mut delays = Vec::new();
        let mut dopplers = Vec::new();
        let mut gain_rows: Vec<(usize, usize, Vec<Complex64>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
            let bad = |what: &str| Error::Parse(format!("profile line {}: {what}: '{raw}'", lineno + 1));
            if fields[0].eq_ignore_ascii_case("delay_us") {
                continue;
            }
            if fields[0].eq_ignore_ascii_case("gain") {
                if fields.len() < 3 || (fields.len() - 3) % 2 != 0 {
                    return Err(bad("expected 'gain rx tx re im ...'"));
                }
                let q: usize = fields[1].parse().map_err(|_| bad("bad rx index"))?;
                let p: usize = fields[2].parse().map_err(|_| bad("bad tx index"))?;
                let nums = fields[3..]
                    .iter()
                    .map(|f| f.parse::<f64>().map_err(|_| bad("bad gain value")))
                    .collect::<Result<Vec<_>>>()?;
                let gains = nums.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
                gain_rows.push((q, p, gains));
                continue;
            }
            if fields.len() != 2 {
                return Err(bad("expected 'delay_us doppler_hz'"));
            }
            let d: f64 = fields[0].parse().map_err(|_| bad("bad delay"))?;
            let f: f64 = fields[1].parse().map_err(|_| bad("bad Doppler"))?;
            delays.push(d * 1e-6);
            dopplers.push(f);
        }
        if delays.is_empty() {
            return Err(Error::Parse("profile has no paths".into()));
        }
        let gains = if gain_rows.is_empty() {
            None
        } else {
            let n_a = (gain_rows.len() as f64).sqrt().round() as usize;
            if n_a * n_a != gain_rows.len() {
                return Err(Error::Parse(format!("{} gain rows do not form a square system", gain_rows.len())));
            }
            let mut grid = vec![None; n_a * n_a];
            for (q, p, g) in gain_rows {
                if q >= n_a || p >= n_a || grid[q * n_a + p].is_some() {
                    return Err(Error::Parse(format!("gain row ({q}, {p}) repeated or out of range")));
                }
                grid[q * n_a + p] = Some(g);
            }
            Some(grid.into_iter().map(Option::unwrap).collect())
        };
        Ok(Self { delays_s: delays, dopplers_hz: dopplers, gains })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dims: GridDims,
    pub n_a: usize,
    pub alphabet: Alphabet,
    pub profile: ChannelProfile,
    pub detector: DetectorParams,
    pub master_seed: u64,
    pub frames_per_point: usize,
    pub min_bit_errors: u64,
    pub max_frames_per_point: usize,
    pub ofdm_energy_keep: f64,
    pub threshold_sigmas: f64,
    /// Reuse frame 0's channel draw for every frame.
    pub fixed_channel: bool,
}

impl SimConfig {
    /// Tables I and II with `n_a` antennas per side.
    pub fn reference(n_a: usize) -> Self {
        Self {
            dims: GridDims::reference(),
            n_a,
            alphabet: Alphabet::bpsk(),
            profile: ChannelProfile::reference(),
            detector: DetectorParams::default(),
            master_seed: 1,
            frames_per_point: 100,
            min_bit_errors: 100,
            max_frames_per_point: 10_000,
            ofdm_energy_keep: 0.999,
            threshold_sigmas: DEFAULT_THRESHOLD_SIGMAS,
            fixed_channel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        GridDims::new(self.dims.n, self.dims.m, self.dims.delta_f)?;
        if self.n_a == 0 {
            return Err(Error::Config("n_a must be >= 1".into()));
        }
        self.detector.validate()?;
        self.profile.support(&self.dims)?;
        self.profile.fixed_channel(&self.dims, self.n_a)?;
        if self.frames_per_point == 0 || self.max_frames_per_point < self.frames_per_point {
            return Err(Error::Config(format!(
                "need 1 <= frames_per_point ({}) <= max_frames_per_point ({})",
                self.frames_per_point, self.max_frames_per_point
            )));
        }
        if !(self.ofdm_energy_keep > 0.0 && self.ofdm_energy_keep <= 1.0) {
            return Err(Error::Config(format!("ofdm_energy_keep {} outside (0, 1]", self.ofdm_energy_keep)));
        }
        if !(self.threshold_sigmas >= 0.0) {
            return Err(Error::Config("threshold_sigmas must be >= 0".into()));
        }
        Ok(())
    }

    pub fn to_file(&self) -> ConfigFile {
        ConfigFile {
            n: self.dims.n,
            m: self.dims.m,
            delta_f_hz: self.dims.delta_f,
            n_a: self.n_a,
            modulation: self.alphabet.modulation().to_string(),
            delays_us: self.profile.delays_s.iter().map(|d| d * 1e6).collect(),
            dopplers_hz: self.profile.dopplers_hz.clone(),
            profile_file: None,
            damping: self.detector.damping,
            max_iterations: self.detector.max_iterations,
            epsilon: self.detector.epsilon,
            master_seed: self.master_seed,
            frames_per_point: self.frames_per_point,
            min_bit_errors: self.min_bit_errors,
            max_frames_per_point: self.max_frames_per_point,
            ofdm_energy_keep: self.ofdm_energy_keep,
            threshold_sigmas: self.threshold_sigmas,
            fixed_channel: self.fixed_channel,
        }
    }

    /// Short SHA-256 digest of everything that affects results.
    pub fn hash(&self) -> String {
        let mut text = toml::to_string(&self.to_file()).expect("config serializes");
        if let Some(gains) = &self.profile.gains {
            for g in gains {
                for z in g {
                    let _ = write!(text, "{:e},{:e};", z.re, z.im);
                }
            }
        }
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Flat on-disk form of [`SimConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub n: usize,
    pub m: usize,
    pub delta_f_hz: f64,
    pub n_a: usize,
    pub modulation: String,
    pub delays_us: Vec<f64>,
    pub dopplers_hz: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_file: Option<String>,
    pub damping: f64,
    pub max_iterations: usize,
    pub epsilon: f64,
    pub master_seed: u64,
    pub frames_per_point: usize,
    pub min_bit_errors: u64,
    pub max_frames_per_point: usize,
    pub ofdm_energy_keep: f64,
    pub threshold_sigmas: f64,
    pub fixed_channel: bool,
}

impl Default for ConfigFile {
    fn default() -> Self {
        SimConfig::reference(2).to_file()
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Resolves into a validated config. A relative `profile_file` is taken
    /// relative to `base_dir`.
    pub fn into_config(self, base_dir: Option<&Path>) -> Result<SimConfig> {
        let profile = match &self.profile_file {
            Some(p) => {
                let path = Path::new(p);
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.to_path_buf(),
                };
                ChannelProfile::load(&path)?
            }
            None => ChannelProfile {
                delays_s: self.delays_us.iter().map(|d| d * 1e-6).collect(),
                dopplers_hz: self.dopplers_hz.clone(),
                gains: None,
            },
        };
        let config = SimConfig {
            dims: GridDims::new(self.n, self.m, self.delta_f_hz)?,
            n_a: self.n_a,
            alphabet: Alphabet::new(self.modulation.parse::<Modulation>()?),
            profile,
            detector: DetectorParams {
                damping: self.damping,
                max_iterations: self.max_iterations,
                epsilon: self.epsilon,
            },
            master_seed: self.master_seed,
            frames_per_point: self.frames_per_point,
            min_bit_errors: self.min_bit_errors,
            max_frames_per_point: self.max_frames_per_point,
            ofdm_energy_keep: self.ofdm_energy_keep,
            threshold_sigmas: self.threshold_sigmas,
            fixed_channel: self.fixed_channel,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)?.into_config(path.parent())
    }
}
