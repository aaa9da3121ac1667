use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use otfs::config::{ChannelProfile, ConfigFile, SimConfig};
use otfs::sim::{
    mean_frobenius_by_snr, run_estimation_experiment, run_oracle_checks, run_sweep, write_ber_csv,
    write_estimation_csv, ChannelKnowledge, OracleOptions, PilotPower, SweepSpec, Waveform,
};
use otfs::Modulation;

#[derive(Parser)]
#[command(name = "otfs", version, about = "MIMO-OTFS link-level BER and channel estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BER sweep over an SNR list.
    Ber(BerArgs),
    /// Channel estimation error versus pilot SNR.
    Chest(ChestArgs),
    /// Run the built-in cross-module consistency checks.
    Oracle {
        /// Corrupt one channel-matrix entry (the equivalence check must fail).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Doppler bins.
    #[arg(long)]
    n: Option<usize>,
    /// Delay bins.
    #[arg(long)]
    m: Option<usize>,
    /// Antennas on each side.
    #[arg(long = "ant")]
    n_a: Option<usize>,
    #[arg(long = "mod")]
    modulation: Option<Modulation>,
    #[arg(long)]
    seed: Option<u64>,
    /// Channel profile table (delay_us, doppler_hz per line).
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output CSV file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BerArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated SNRs in dB, strictly increasing ("inf" allowed).
    #[arg(long, value_delimiter = ',', required = true)]
    snr_list: Vec<f64>,
    /// Minimum frames per SNR point.
    #[arg(long)]
    frames: Option<usize>,
    /// Bit errors to collect before a point stops.
    #[arg(long)]
    min_errors: Option<u64>,
    /// Frame cap per SNR point.
    #[arg(long)]
    max_frames: Option<usize>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Detect with a channel estimated from a pilot frame.
    #[arg(long)]
    estimated: bool,
    /// Pilot SNR A^2/sigma^2 in dB for --estimated, with A = 1. Default: a
    /// pilot frame with the same energy as a data frame at the data SNR.
    #[arg(long, requires = "estimated")]
    pilot_snr_db: Option<f64>,
    /// Reuse one channel draw for all frames.
    #[arg(long)]
    fixed_channel: bool,
    /// Row energy fraction kept in the OFDM detection graph.
    #[arg(long)]
    energy_keep: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Ofdm,
}

#[derive(Args)]
struct ChestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated pilot SNRs in dB.
    #[arg(long, value_delimiter = ',', required = true)]
    pilot_snr_list: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    trials: u64,
}

fn load_config(c: &CommonArgs) -> otfs::Result<SimConfig> {
    let mut file = match &c.config {
        Some(path) => ConfigFile::parse(&std::fs::read_to_string(path)?)?,
        None => ConfigFile::default(),
    };
    let base = c.config.as_deref().and_then(|p| p.parent()).map(|p| p.to_path_buf());
    if let Some(n) = c.n {
        file.n = n;
    }
    if let Some(m) = c.m {
        file.m = m;
    }
    if let Some(n_a) = c.n_a {
        file.n_a = n_a;
    }
    if let Some(s) = c.seed {
        file.master_seed = s;
    }
    if let Some(md) = c.modulation {
        file.modulation = md.to_string();
    }
    let mut config = file.into_config(base.as_deref())?;
    if let Some(p) = &c.profile {
        config.profile = ChannelProfile::load(p)?;
    }
    config.validate()?;
    Ok(config)
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn ber(args: BerArgs) -> otfs::Result<()> {
    let mut config = load_config(&args.common)?;
    if let Some(f) = args.frames {
        config.frames_per_point = f;
        config.max_frames_per_point = config.max_frames_per_point.max(f);
    }
    if let Some(e) = args.min_errors {
        config.min_bit_errors = e;
    }
    if let Some(mf) = args.max_frames {
        config.max_frames_per_point = mf;
    }
    if let Some(k) = args.energy_keep {
        config.ofdm_energy_keep = k;
    }
    config.fixed_channel |= args.fixed_channel;
    let mut spec = SweepSpec::new(config, args.snr_list);
    if args.baseline.is_some() {
        spec.waveform = Waveform::Ofdm;
    }
    if args.estimated {
        spec.knowledge = ChannelKnowledge::Estimated(match args.pilot_snr_db {
            Some(p) => PilotPower::SnrDb(p),
            None => PilotPower::MatchedFrameEnergy,
        });
    }
    spec.validate()?;
    let records = run_sweep(&spec, args.common.threads)?;
    let mut out = output(&args.common.out)?;
    write_ber_csv(&mut out, &spec, &records)?;
    out.flush()?;
    Ok(())
}

fn chest(args: ChestArgs) -> otfs::Result<()> {
    let config = load_config(&args.common)?;
    let rows = run_estimation_experiment(&config, &args.pilot_snr_list, args.trials, args.common.threads)?;
    let mut out = output(&args.common.out)?;
    write_estimation_csv(&mut out, &config, &rows)?;
    out.flush()?;
    for (snr, mean) in mean_frobenius_by_snr(&rows) {
        eprintln!("pilot_snr_db={snr} mean_frobenius_error={mean:.6e}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ber(a) => ber(a),
        Command::Chest(a) => chest(a),
        Command::Oracle { corrupt } => match run_oracle_checks(OracleOptions { corrupt_channel_entry: corrupt }) {
            Ok(report) => {
                print!("{report}");
                if report.all_passed() {
                    return ExitCode::SUCCESS;
                }
                eprintln!("oracle: invariant violation");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
