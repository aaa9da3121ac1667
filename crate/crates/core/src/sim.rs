//! Monte Carlo drivers: single-frame link simulation, BER sweeps, channel
//! estimation trials and the built-in oracle self-checks.
//!
//! Every random draw comes from a stream keyed by `(frame, purpose)` under the
//! master seed, so a frame's outcome does not depend on which worker ran it.
//! The SNR index is deliberately not part of the key: all SNR points of a
//! sweep see the same channels, symbols and unit-variance noise shapes.

use std::fmt;
use std::io::{self, Write};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::alphabet::Alphabet;
use crate::chanest::{assemble_estimate, estimate_links, frobenius_error, make_pilot_frames, support_stats, PilotPlan};
use crate::channel::{
    apply_channel, build_mimo_matrix, complex_gaussian, gen_random_mimo_channel, MimoChannel, PathTap, TapIndex,
};
use crate::config::SimConfig;
use crate::detector::{detect_map_bruteforce, detect_mp, DetectorParams};
use crate::error::{Error, Result};
use crate::grid::{unvectorize, vectorize, DdGrid, GridDims};
use crate::ofdm::{build_mimo_ofdm_sparse, build_ofdm_matrix, build_ofdm_matrix_factored, build_time_delay_matrix};
use crate::ofdm::{sparsify_sparse, OfdmDims};
use crate::rng::{stream_rng, Purpose, SimRng, StreamId};
use crate::sparse::SparseChannelMatrix;
use crate::transforms::{heisenberg_rect, isfft, oracle_apply, sfft, wigner_rect};

pub const SNR_CONVENTION: &str = "snr_db=10log10(Es/sigma^2) per rx stream, Es=1";
pub const PILOT_SNR_CONVENTION: &str = "pilot_snr_db=10log10(A^2/sigma^2), A=pilot amplitude";

/// Frames evaluated together between stopping-rule checks after the first
/// `frames_per_point`. Fixed so results do not depend on the worker count.
const BATCH: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Waveform {
    Otfs,
    Ofdm,
}

impl Waveform {
    pub fn tag(self) -> &'static str {
        match self {
            Waveform::Otfs => "otfs-mp",
            Waveform::Ofdm => "ofdm-mp",
        }
    }
}

/// Power of the dedicated pilot frame used for channel estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PilotPower {
    /// Pilot frame energy equals a data frame's: `A^2 = N M Es`, sent over
    /// the data SNR's noise. Average energy per grid cell over `sigma^2` is
    /// then the same for pilot and data frames.
    MatchedFrameEnergy,
    /// `A = 1` with noise set by `A^2/sigma^2` in dB.
    SnrDb(f64),
}

impl PilotPower {
    /// Pilot amplitude and pilot noise variance at data SNR `snr_db`.
    pub fn amplitude_and_noise(self, dims: &GridDims, snr_db: f64) -> (f64, f64) {
        match self {
            PilotPower::MatchedFrameEnergy => ((dims.len() as f64).sqrt(), noise_variance(snr_db)),
            PilotPower::SnrDb(p) => (1.0, noise_variance(p)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKnowledge {
    Perfect,
    /// Channel estimated from a dedicated pilot frame.
    Estimated(PilotPower),
}

impl ChannelKnowledge {
    pub fn tag(self) -> &'static str {
        match self {
            ChannelKnowledge::Perfect => "perfect",
            ChannelKnowledge::Estimated(_) => "estimated",
        }
    }
}

/// `sigma^2 = 10^(-snr_db/10)`; `+inf` means noiseless.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameOutcome {
    pub bit_errors: u64,
    pub bits: u64,
    pub iterations: usize,
}

fn rng_for(config: &SimConfig, frame: u64, purpose: Purpose) -> SimRng {
    stream_rng(config.master_seed, StreamId::new(frame, purpose))
}

/// The channel seen by `frame`: the profile's fixed gains if it has any,
/// otherwise a fresh Rayleigh draw (frame 0's draw in fixed-channel mode).
pub fn frame_channel(config: &SimConfig, frame: u64) -> Result<MimoChannel> {
    if let Some(ch) = config.profile.fixed_channel(&config.dims, config.n_a)? {
        return Ok(ch);
    }
    let support = config.profile.support(&config.dims)?;
    let frame = if config.fixed_channel { 0 } else { frame };
    gen_random_mimo_channel(&mut rng_for(config, frame, Purpose::Channel), &support, config.n_a)
}

/// Sends one pilot frame per transmit antenna through `h` and returns the
/// assembled estimate of the equivalent matrix.
pub fn estimate_matrix<R: Rng + ?Sized>(
    config: &SimConfig,
    ch: &MimoChannel,
    h: &SparseChannelMatrix,
    amplitude: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<(crate::chanest::ChannelEstimate, SparseChannelMatrix)> {
    let dims = &config.dims;
    let plan = PilotPlan::lattice(dims, config.n_a, amplitude)?;
    plan.validate(dims, ch.max_beta(), ch.max_alpha())?;
    let x: Vec<Complex64> = make_pilot_frames(&plan, dims)?.iter().flat_map(vectorize).collect();
    let y = apply_channel(h, &x, noise_var.sqrt(), rng)?;
    let received = split_streams(&y, dims)?;
    let est = estimate_links(&received, &plan, dims, config.threshold_sigmas)?;
    let assembled = assemble_estimate(&est, dims)?;
    Ok((est, assembled.matrix))
}

fn split_streams(y: &[Complex64], dims: &GridDims) -> Result<Vec<DdGrid>> {
    y.chunks(dims.len()).map(|c| unvectorize(c, *dims)).collect()
}

/// Simulates one frame: channel, symbols, noise at `snr_db`, detection and
/// bit-error count.
pub fn run_frame(
    config: &SimConfig,
    waveform: Waveform,
    knowledge: ChannelKnowledge,
    snr_db: f64,
    frame: u64,
) -> Result<FrameOutcome> {
    let ch = frame_channel(config, frame)?;
    let (n, m) = (config.dims.n, config.dims.m);
    let h_true = match waveform {
        Waveform::Otfs => build_mimo_matrix(&ch, &config.dims)?,
        Waveform::Ofdm => build_mimo_ofdm_sparse(&ch, n, m, 1.0)?,
    };
    let alphabet = &config.alphabet;
    let mut sym_rng = rng_for(config, frame, Purpose::Symbols);
    let sent: Vec<usize> = (0..h_true.dim()).map(|_| sym_rng.random_range(0..alphabet.len())).collect();
    let x: Vec<Complex64> = sent.iter().map(|&i| alphabet.point(i)).collect();
    let noise_var = noise_variance(snr_db);
    let y = apply_channel(&h_true, &x, noise_var.sqrt(), &mut rng_for(config, frame, Purpose::Noise))?;

    let h_det = match (waveform, knowledge) {
        (Waveform::Otfs, ChannelKnowledge::Perfect) => h_true,
        (Waveform::Ofdm, ChannelKnowledge::Perfect) => sparsify_sparse(&h_true, config.ofdm_energy_keep)?,
        (Waveform::Otfs, ChannelKnowledge::Estimated(pilot)) => {
            let (amplitude, pilot_var) = pilot.amplitude_and_noise(&config.dims, snr_db);
            let mut rng = rng_for(config, frame, Purpose::PilotNoise);
            estimate_matrix(config, &ch, &h_true, amplitude, pilot_var, &mut rng)?.1
        }
        (Waveform::Ofdm, ChannelKnowledge::Estimated(_)) => {
            return Err(Error::Config("channel estimation is only available for OTFS".into()))
        }
    };
    let out = detect_mp(&y, &h_det, alphabet, &config.detector, noise_var)?;
    let bit_errors = sent.iter().zip(&out.symbols).map(|(&s, &d)| alphabet.bit_errors(s, d) as u64).sum();
    Ok(FrameOutcome { bit_errors, bits: (sent.len() * alphabet.bits_per_symbol()) as u64, iterations: out.iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub total_bits: u64,
    pub ber: f64,
    pub mean_iterations: f64,
    pub detector: Waveform,
    pub channel_knowledge: ChannelKnowledge,
    /// Fewer than `min_bit_errors` errors were seen before the frame cap.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub snr_db: Vec<f64>,
    pub config: SimConfig,
    pub waveform: Waveform,
    pub knowledge: ChannelKnowledge,
}

impl SweepSpec {
    pub fn new(config: SimConfig, snr_db: Vec<f64>) -> Self {
        Self { snr_db, config, waveform: Waveform::Otfs, knowledge: ChannelKnowledge::Perfect }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.snr_db.is_empty() {
            return Err(Error::Config("empty SNR list".into()));
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::Config("SNR values must be numbers or +inf".into()));
        }
        if self.snr_db.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("SNR list must be strictly increasing".into()));
        }
        if self.waveform == Waveform::Ofdm && self.knowledge != ChannelKnowledge::Perfect {
            return Err(Error::Config("channel estimation is only available for OTFS".into()));
        }
        Ok(())
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_point(spec: &SweepSpec, snr_db: f64) -> Result<BerRecord> {
    let c = &spec.config;
    let (min_frames, max_frames) = (c.frames_per_point as u64, c.max_frames_per_point as u64);
    let (mut frames, mut errors, mut bits, mut iters) = (0u64, 0u64, 0u64, 0u64);
    let mut next = 0u64;
    'outer: while next < max_frames {
        let end = if next == 0 { min_frames } else { (next + BATCH).min(max_frames) };
        let outcomes: Vec<Result<FrameOutcome>> = (next..end)
            .into_par_iter()
            .map(|f| run_frame(c, spec.waveform, spec.knowledge, snr_db, f))
            .collect();
        // merged in frame order, stopping at the first frame that satisfies the rule
        for o in outcomes {
            let o = o?;
            frames += 1;
            errors += o.bit_errors;
            bits += o.bits;
            iters += o.iterations as u64;
            if frames >= min_frames && errors >= c.min_bit_errors {
                break 'outer;
            }
        }
        next = end;
    }
    Ok(BerRecord {
        snr_db,
        frames,
        bit_errors: errors,
        total_bits: bits,
        ber: errors as f64 / bits as f64,
        mean_iterations: iters as f64 / frames as f64,
        detector: spec.waveform,
        channel_knowledge: spec.knowledge,
        low_confidence: errors < c.min_bit_errors,
    })
}

/// One record per SNR point. Each point runs at least `frames_per_point`
/// frames and continues until `min_bit_errors` errors or
/// `max_frames_per_point` frames.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<Vec<BerRecord>> {
    spec.validate()?;
    with_threads(threads, || spec.snr_db.iter().map(|&s| run_point(spec, s)).collect())?
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationRow {
    pub pilot_snr_db: f64,
    pub trial: u64,
    pub frobenius_error: f64,
    pub false_pos: usize,
    pub false_neg: usize,
}

/// Channel estimation trials: for each pilot SNR, `trials` independent
/// channels (shared across pilot SNRs) are sounded and compared with the
/// true equivalent matrix.
pub fn run_estimation_experiment(
    config: &SimConfig,
    pilot_snrs: &[f64],
    trials: u64,
    threads: Option<usize>,
) -> Result<Vec<EstimationRow>> {
    config.validate()?;
    if pilot_snrs.is_empty() {
        return Err(Error::Config("empty pilot SNR list".into()));
    }
    let support = config.profile.support(&config.dims)?;
    let one_trial = |snr: f64, trial: u64| -> Result<EstimationRow> {
        let ch = match config.profile.fixed_channel(&config.dims, config.n_a)? {
            Some(ch) => ch,
            None => gen_random_mimo_channel(&mut rng_for(config, trial, Purpose::Trial), &support, config.n_a)?,
        };
        let h = build_mimo_matrix(&ch, &config.dims)?;
        let mut rng = rng_for(config, trial, Purpose::PilotNoise);
        let (est, h_est) = estimate_matrix(config, &ch, &h, 1.0, noise_variance(snr), &mut rng)?;
        let stats = support_stats(&est, &ch, &config.dims, 0.0);
        Ok(EstimationRow {
            pilot_snr_db: snr,
            trial,
            frobenius_error: frobenius_error(&h, &h_est)?,
            false_pos: stats.false_pos,
            false_neg: stats.false_neg,
        })
    };
    with_threads(threads, || {
        let jobs: Vec<(f64, u64)> = pilot_snrs.iter().flat_map(|&s| (0..trials).map(move |t| (s, t))).collect();
        jobs.into_par_iter().map(|(s, t)| one_trial(s, t)).collect::<Result<Vec<_>>>()
    })?
}

/// Mean Frobenius error per pilot SNR, in input order.
pub fn mean_frobenius_by_snr(rows: &[EstimationRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(s, _, _)| *s == r.pilot_snr_db) {
            Some(e) => {
                e.1 += r.frobenius_error;
                e.2 += 1;
            }
            None => out.push((r.pilot_snr_db, r.frobenius_error, 1)),
        }
    }
    out.into_iter().map(|(s, sum, n)| (s, sum / n as f64)).collect()
}

fn comment_line(config: &SimConfig, extra: &str) -> String {
    format!("# config_hash={} seed={} {}{}", config.hash(), config.master_seed, SNR_CONVENTION, extra)
}

pub fn write_ber_csv<W: Write>(w: &mut W, spec: &SweepSpec, records: &[BerRecord]) -> io::Result<()> {
    let extra = match spec.knowledge {
        ChannelKnowledge::Perfect => String::new(),
        ChannelKnowledge::Estimated(PilotPower::SnrDb(p)) => format!("; {PILOT_SNR_CONVENTION}; pilot_snr_db={p}"),
        ChannelKnowledge::Estimated(PilotPower::MatchedFrameEnergy) => format!(
            "; {PILOT_SNR_CONVENTION}; pilot frame energy = data frame energy (A^2=NM), pilot_snr_db=snr_db+{:.4}",
            10.0 * (spec.config.dims.len() as f64).log10()
        ),
    };
    writeln!(w, "{}", comment_line(&spec.config, &extra))?;
    writeln!(w, "snr_db,frames,bit_errors,total_bits,ber,mean_iterations,detector,channel_knowledge,low_confidence")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{:.6e},{:.4},{},{},{}",
            r.snr_db,
            r.frames,
            r.bit_errors,
            r.total_bits,
            r.ber,
            r.mean_iterations,
            r.detector.tag(),
            r.channel_knowledge.tag(),
            r.low_confidence
        )?;
    }
    Ok(())
}

pub fn write_estimation_csv<W: Write>(w: &mut W, config: &SimConfig, rows: &[EstimationRow]) -> io::Result<()> {
    writeln!(w, "{}", comment_line(config, &format!("; {PILOT_SNR_CONVENTION}")))?;
    writeln!(w, "pilot_snr_db,trial,frobenius_error,false_pos,false_neg")?;
    for r in rows {
        writeln!(w, "{},{},{:.9e},{},{}", r.pilot_snr_db, r.trial, r.frobenius_error, r.false_pos, r.false_neg)?;
    }
    Ok(())
}

/// Fraction of symbol decisions on which message passing agrees with
/// exhaustive MAP, over random `N = M = 2`, single-antenna, BPSK channels
/// with one or two taps.
pub fn mp_map_agreement(trials: u64, snr_db: f64, seed: u64) -> Result<f64> {
    let dims = GridDims::square(2);
    let alphabet = Alphabet::bpsk();
    let params = DetectorParams::default();
    let noise_var = noise_variance(snr_db);
    let mut agree = 0usize;
    let mut total = 0usize;
    for t in 0..trials {
        let mut rng = stream_rng(seed, StreamId::new(t, Purpose::Trial));
        let h = random_small_channel(&mut rng, &dims, 2)?;
        let sent: Vec<usize> = (0..dims.len()).map(|_| rng.random_range(0..2)).collect();
        let x: Vec<Complex64> = sent.iter().map(|&i| alphabet.point(i)).collect();
        let y = apply_channel(&h, &x, noise_var.sqrt(), &mut rng)?;
        let mp = detect_mp(&y, &h, &alphabet, &params, noise_var)?.symbols;
        let map = detect_map_bruteforce(&y, &h, &alphabet)?;
        agree += mp.iter().zip(&map).filter(|(a, b)| a == b).count();
        total += mp.len();
    }
    Ok(agree as f64 / total as f64)
}

/// Random single-link channel with 1..=max_taps distinct taps, unit mean power.
fn random_small_channel(rng: &mut SimRng, dims: &GridDims, max_taps: usize) -> Result<SparseChannelMatrix> {
    let taps = random_taps(rng, dims, max_taps);
    let link = crate::channel::LinkChannel::new(taps)?;
    crate::channel::build_link_matrix(&link, dims)
}

fn random_taps(rng: &mut SimRng, dims: &GridDims, max_taps: usize) -> Vec<PathTap> {
    let p = rng.random_range(1..=max_taps.min(dims.len()));
    let mut chosen: Vec<TapIndex> = Vec::with_capacity(p);
    while chosen.len() < p {
        let t = TapIndex::new(rng.random_range(0..dims.m), rng.random_range(0..dims.n));
        if !chosen.contains(&t) {
            chosen.push(t);
        }
    }
    chosen
        .into_iter()
        .map(|t| PathTap::new(t.alpha, t.beta, complex_gaussian(rng, 1.0 / p as f64)))
        .collect()
}

fn random_grid(rng: &mut SimRng, dims: GridDims) -> DdGrid {
    DdGrid::from_fn(dims, |_, _| complex_gaussian(rng, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub module: &'static str,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleReport {
    pub checks: Vec<CheckResult>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, module: &'static str, max_deviation: f64, tolerance: f64) {
        let passed = max_deviation.is_finite() && max_deviation < tolerance;
        self.checks.push(CheckResult { name, module, max_deviation, tolerance, passed });
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<28} {:<11} max_dev={:.3e} tol={:.0e}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.module,
                c.max_deviation,
                c.tolerance
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OracleOptions {
    /// Perturbs one entry of every assembled matrix before the equivalence
    /// check; the check must then fail.
    pub corrupt_channel_entry: bool,
}

const ORACLE_SEED: u64 = 0x5eed;

/// Cross-module self-checks with their max deviations.
pub fn run_oracle_checks(opts: OracleOptions) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    let mut rng = stream_rng(ORACLE_SEED, StreamId::new(0, Purpose::Trial));

    let (mut dev_sfft, mut dev_wigner) = (0.0f64, 0.0f64);
    for (n, m) in [(1, 1), (2, 3), (8, 8), (16, 4), (32, 32)] {
        let dims = GridDims::new(n, m, 15e3)?;
        let x = random_grid(&mut rng, dims);
        dev_sfft = dev_sfft.max(sfft(&isfft(&x)).max_abs_diff(&x));
        let tf = isfft(&x);
        dev_wigner = dev_wigner.max(wigner_rect(&heisenberg_rect(&tf)).max_abs_diff(&tf));
    }
    report.push("sfft(isfft(x)) = x", "transforms", dev_sfft, 1e-12);
    report.push("wigner(heisenberg(X)) = X", "transforms", dev_wigner, 1e-12);

    let mut dev_oracle = 0.0f64;
    for size in [2, 4, 8, 16] {
        let dims = GridDims::square(size);
        for _ in 0..25 {
            let taps = random_taps(&mut rng, &dims, 4.min(dims.len()));
            let link = crate::channel::LinkChannel::new(taps.clone())?;
            let mut h = crate::channel::build_link_matrix(&link, &dims)?;
            if opts.corrupt_channel_entry {
                let (cols, vals) = h.row(0);
                let (c0, v0) = (cols[0], vals[0]);
                h.set_existing(0, c0, v0 + Complex64::new(0.5, 0.0));
            }
            let x = random_grid(&mut rng, dims);
            let hx = unvectorize(&h.mul_vec(&vectorize(&x))?, dims)?;
            dev_oracle = dev_oracle.max(hx.max_abs_diff(&oracle_apply(&x, &taps)));
        }
    }
    report.push("H x = oracle_apply(x)", "channel", dev_oracle, 1e-9);

    let agreement = mp_map_agreement(200, 20.0, ORACLE_SEED)?;
    report.push("MP vs MAP disagreement", "detector", 1.0 - agreement, 0.01);

    let support = vec![TapIndex::new(0, 0), TapIndex::new(2, 1), TapIndex::new(3, 7)];
    let ch = gen_random_mimo_channel(&mut rng, &support, 1)?;
    let od = OfdmDims::for_support(8, 8, &support)?;
    let htd = build_time_delay_matrix(ch.link(0, 0).taps(), &od)?;
    let diff = build_ofdm_matrix(&htd) - build_ofdm_matrix_factored(&htd);
    let dev_ofdm = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
    report.push("H_OFDM = five-factor product", "ofdm", dev_ofdm, 1e-10);

    let config = SimConfig {
        dims: GridDims::square(16),
        profile: crate::config::ChannelProfile::from_taps(&support, &GridDims::square(16)),
        ..SimConfig::reference(2)
    };
    let ch = gen_random_mimo_channel(&mut rng, &support, 2)?;
    let h = build_mimo_matrix(&ch, &config.dims)?;
    let (_, h_est) = estimate_matrix(&config, &ch, &h, 1.0, 0.0, &mut rng)?;
    report.push("noiseless estimate = H", "chanest", frobenius_error(&h, &h_est)?, 1e-12);

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ChannelProfile;

    fn small_config(n_a: usize) -> SimConfig {
        let dims = GridDims::square(8);
        let taps = [TapIndex::new(0, 0), TapIndex::new(1, 1), TapIndex::new(2, 3)];
        SimConfig {
            dims,
            profile: ChannelProfile::from_taps(&taps, &dims),
            frames_per_point: 4,
            min_bit_errors: 20,
            max_frames_per_point: 40,
            ..SimConfig::reference(n_a)
        }
    }

    #[test]
    fn noise_variance_convention() {
        assert_eq!(noise_variance(0.0), 1.0);
        assert!((noise_variance(10.0) - 0.1).abs() < 1e-15);
        assert_eq!(noise_variance(f64::INFINITY), 0.0);
    }

    #[test]
    fn noiseless_otfs_frame_is_error_free() {
        let c = small_config(2);
        for f in 0..5 {
            let o = run_frame(&c, Waveform::Otfs, ChannelKnowledge::Perfect, f64::INFINITY, f).unwrap();
            assert_eq!(o.bit_errors, 0);
            assert_eq!(o.bits, 2 * 64);
            let o = run_frame(&c, Waveform::Otfs, ChannelKnowledge::Estimated(PilotPower::MatchedFrameEnergy), f64::INFINITY, f)
                .unwrap();
            assert_eq!(o.bit_errors, 0);
        }
    }

    #[test]
    fn frames_are_deterministic() {
        let c = small_config(2);
        for w in [Waveform::Otfs, Waveform::Ofdm] {
            let a = run_frame(&c, w, ChannelKnowledge::Perfect, 4.0, 3).unwrap();
            let b = run_frame(&c, w, ChannelKnowledge::Perfect, 4.0, 3).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fixed_channel_reuses_frame_zero() {
        let mut c = small_config(1);
        c.fixed_channel = true;
        assert_eq!(frame_channel(&c, 0).unwrap(), frame_channel(&c, 7).unwrap());
        c.fixed_channel = false;
        assert_ne!(frame_channel(&c, 0).unwrap(), frame_channel(&c, 7).unwrap());
    }

    #[test]
    fn noiseless_sweep_point() {
        let spec = SweepSpec::new(small_config(1), vec![f64::INFINITY]);
        let r = run_sweep(&spec, Some(2)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].ber, 0.0);
        assert_eq!(r[0].frames, 40);
        assert!(r[0].low_confidence);
    }

    #[test]
    fn stopping_rule_and_thread_independence() {
        let spec = SweepSpec::new(small_config(2), vec![0.0, 6.0]);
        let a = run_sweep(&spec, Some(1)).unwrap();
        let b = run_sweep(&spec, Some(3)).unwrap();
        assert_eq!(a, b);
        let low = &a[0];
        assert!(low.bit_errors >= 20 && !low.low_confidence);
        assert!(low.frames >= 4 && low.frames <= 40);
        assert_eq!(low.ber, low.bit_errors as f64 / low.total_bits as f64);
        assert_eq!(low.total_bits, low.frames * 128);
    }

    #[test]
    fn sweep_spec_validation() {
        let mut spec = SweepSpec::new(small_config(1), vec![4.0, 2.0]);
        assert!(spec.validate().is_err());
        spec.snr_db = vec![];
        assert!(spec.validate().is_err());
        spec.snr_db = vec![2.0, f64::INFINITY];
        assert!(spec.validate().is_ok());
        spec.waveform = Waveform::Ofdm;
        spec.knowledge = ChannelKnowledge::Estimated(PilotPower::MatchedFrameEnergy);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn noiseless_estimation_rows() {
        let rows = run_estimation_experiment(&small_config(2), &[f64::INFINITY, 10.0], 5, Some(2)).unwrap();
        assert_eq!(rows.len(), 10);
        for r in rows.iter().filter(|r| r.pilot_snr_db.is_infinite()) {
            assert!(r.frobenius_error < 1e-10);
            assert_eq!((r.false_pos, r.false_neg), (0, 0));
        }
        let means = mean_frobenius_by_snr(&rows);
        assert_eq!(means.len(), 2);
        assert!(means[0].1 < means[1].1);
    }

    #[test]
    fn csv_layout() {
        let spec = SweepSpec::new(small_config(1), vec![f64::INFINITY]);
        let recs = run_sweep(&spec, None).unwrap();
        let mut buf = Vec::new();
        write_ber_csv(&mut buf, &spec, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config_hash=") && lines[0].contains("seed=1"));
        assert!(lines[1].starts_with("snr_db,frames,bit_errors"));
        let fields: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(fields[..5], ["inf", "40", "0", "2560", "0.000000e0"]);
        assert_eq!(fields[6..], ["otfs-mp", "perfect", "true"]);
    }

    #[test]
    fn oracle_checks_pass_and_detect_corruption() {
        let ok = run_oracle_checks(OracleOptions::default()).unwrap();
        assert!(ok.all_passed(), "{ok}");
        let bad = run_oracle_checks(OracleOptions { corrupt_channel_entry: true }).unwrap();
        assert!(!bad.all_passed());
        let failed: Vec<_> = bad.checks.iter().filter(|c| !c.passed).map(|c| c.module).collect();
        assert_eq!(failed, vec!["channel"]);
    }
}
