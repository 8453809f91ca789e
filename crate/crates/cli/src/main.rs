//! Command-line front end: DM design, BER simulation, union bounds, DCMC capacity
//! and detector benchmarks. Every run writes its main artifact to `--out` and a
//! JSON sidecar to `<out>.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use stsk_otfs::analysis::{dcmc_capacity, union_bound_ber, DcmcSettings};
use stsk_otfs::detectors::{parse_detectors, Detector};
use stsk_otfs::dispersion::{design_profile, design_search, DispersionMatrixSet};
use stsk_otfs::harness::{baseline_config, bench_detectors, run_ber_sweep, BaselineKind, ChannelMode, StopRule};
use stsk_otfs::linalg::substream;
use stsk_otfs::{Error, SystemConfig, ValidatedConfig};

/// Stream domain for the default DM set when `--dm` is not given.
const DEFAULT_DM_DOMAIN: u32 = 30;

#[derive(Parser, Debug)]
#[command(name = "stsk-otfs", version, about = "STSK-aided OTFS multiple-access simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// System configuration file (`key = value`); the built-in toy system if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output artifact path; the sidecar goes to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads. The only way to set parallelism; `RAYON_NUM_THREADS` is ignored.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=1024))]
    workers: u64,
}

#[derive(Args, Debug, Clone)]
struct DmArg {
    /// Dispersion-matrix file; a seeded random set if omitted.
    #[arg(long)]
    dm: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Baseline {
    Sm,
    Simo,
    Ofdm,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random-search DM design; writes the winning set.
    DesignDm {
        #[command(flatten)]
        common: Common,
        /// Number of candidate sets.
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
    /// Monte Carlo BER sweep with paired detectors.
    SimulateBer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dm: DmArg,
        #[arg(long, default_value = "mld", value_parser = parse_detector_list)]
        detectors: DetectorList,
        /// SNR grid `start:step:stop` in dB, or a single value.
        #[arg(long, value_parser = parse_snr_grid, allow_hyphen_values = true)]
        snr: SnrGrid,
        /// Trial limit per SNR point.
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 200)]
        target_errors: u64,
        /// Simulate a reference system derived from the configuration.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Union bound on the MLD BER over a fixed path profile drawn from the seed.
    Bound {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dm: DmArg,
        #[arg(long, value_parser = parse_snr_grid, allow_hyphen_values = true)]
        snr: SnrGrid,
    },
    /// Monte Carlo DCMC capacity.
    Capacity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dm: DmArg,
        #[arg(long, value_parser = parse_snr_grid, allow_hyphen_values = true)]
        snr: SnrGrid,
        /// Channel draws per SNR point.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        noise_draws: usize,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Paired detector comparison with complexity accounting.
    BenchDetectors {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dm: DmArg,
        #[arg(long, default_value = "mld,ircd:5/8,prcgd:1", value_parser = parse_detector_list)]
        detectors: DetectorList,
        #[arg(long, value_parser = parse_snr_grid, allow_hyphen_values = true)]
        snr: SnrGrid,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 200)]
        target_errors: u64,
    },
}

#[derive(Debug, Clone)]
struct SnrGrid(Vec<f64>);

fn parse_snr_grid(s: &str) -> Result<SnrGrid, String> {
    let nums: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    if nums.iter().any(|v| !v.is_finite()) {
        return Err("SNR values must be finite".into());
    }
    match nums[..] {
        [v] => Ok(SnrGrid(vec![v])),
        [start, step, stop] => {
            if step <= 0.0 || stop < start {
                return Err("expected start:step:stop with step > 0 and stop >= start".into());
            }
            // Index-based so that rounding never drops or duplicates the endpoint.
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if n > 10_000 {
                return Err("SNR grid has too many points".into());
            }
            Ok(SnrGrid((0..n).map(|i| start + i as f64 * step).collect()))
        }
        _ => Err("expected start:step:stop or a single value".into()),
    }
}

#[derive(Debug, Clone)]
struct DetectorList(Vec<Detector>);

fn parse_detector_list(s: &str) -> Result<DetectorList, String> {
    parse_detectors(s).map(DetectorList).map_err(|e| e.to_string())
}

fn load_config(common: &Common) -> Result<ValidatedConfig, Error> {
    match &common.config {
        Some(p) => SystemConfig::from_file(p)?.validate(),
        None => SystemConfig::toy().validate(),
    }
}

fn load_dm(cfg: &ValidatedConfig, dm: &DmArg, seed: u64) -> Result<DispersionMatrixSet, Error> {
    let set = match &dm.dm {
        Some(p) => DispersionMatrixSet::read_file(p)?,
        None => DispersionMatrixSet::random(cfg, &mut substream(seed, DEFAULT_DM_DOMAIN, 0, 0), seed),
    };
    set.check_shape(cfg)?;
    Ok(set)
}

fn baseline(
    kind: Option<Baseline>,
    cfg: ValidatedConfig,
    dm: DispersionMatrixSet,
) -> Result<(ValidatedConfig, DispersionMatrixSet), Error> {
    let kind = match kind {
        None => return Ok((cfg, dm)),
        Some(Baseline::Sm) => BaselineKind::SmOtfs,
        Some(Baseline::Simo) => BaselineKind::SimoOtfs,
        Some(Baseline::Ofdm) => BaselineKind::StskOfdmMa,
    };
    baseline_config(kind, &cfg, &dm)
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_outputs(common: &Common, body: &str, mut meta: Value, started: Instant) -> Result<(), Error> {
    fs::write(&common.out, body)?;
    meta["seed"] = json!(common.seed);
    meta["workers"] = json!(common.workers);
    meta["output"] = json!(common.out.display().to_string());
    meta["wall_clock_s"] = json!(started.elapsed().as_secs_f64());
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(sidecar_path(&common.out), text + "\n")?;
    Ok(())
}

fn config_meta(cfg: &ValidatedConfig) -> Value {
    json!({ "config": cfg.raw, "config_hash": cfg.hash(), "codeword_bits": cfg.l, "rate": cfg.rate })
}

fn run(command: Command) -> Result<(), Error> {
    let started = Instant::now();
    match command {
        Command::DesignDm { common, trials } => {
            let cfg = load_config(&common)?;
            let profile = design_profile(&cfg, common.seed)?;
            let report = design_search(&cfg, trials, &profile, common.seed)?;
            let (set, metrics) = report.winner();
            let mut meta = config_meta(&cfg);
            meta["command"] = json!("design-dm");
            meta["candidates"] = json!(trials);
            meta["winner"] = json!(report.best);
            meta["metrics"] = json!(metrics);
            meta["profile"] = json!(profile.dump());
            println!("{}", json!({ "winner": report.best, "metrics": metrics }));
            write_outputs(&common, &set.to_text(), meta, started)
        }
        Command::SimulateBer { common, dm, detectors, snr, trials, target_errors, baseline: base } => {
            let cfg = load_config(&common)?;
            let set = load_dm(&cfg, &dm, common.seed)?;
            let (cfg, set) = baseline(base, cfg, set)?;
            let stop = StopRule { target_errors, max_trials: trials, ..StopRule::default() };
            let report = run_ber_sweep(&cfg, &set, &detectors.0, &snr.0, stop, common.seed, &ChannelMode::FreshTaps)?;
            let mut meta = config_meta(&cfg);
            meta["command"] = json!("simulate-ber");
            meta["baseline"] = json!(base.map(|b| format!("{b:?}").to_lowercase()));
            meta["dm_seed"] = json!(set.seed);
            meta["stop_rule"] = json!(stop);
            meta["report"] = json!(report);
            write_outputs(&common, &report.to_csv(), meta, started)
        }
        Command::Bound { common, dm, snr } => {
            let cfg = load_config(&common)?;
            let set = load_dm(&cfg, &dm, common.seed)?;
            let profile = design_profile(&cfg, common.seed)?;
            let mut curve = union_bound_ber(&cfg, &set, &profile, &snr.0)?;
            curve.meta.profile_seed = Some(common.seed);
            curve.meta.seed = Some(common.seed);
            let mut meta = config_meta(&cfg);
            meta["command"] = json!("bound");
            meta["dm_seed"] = json!(set.seed);
            meta["profile"] = json!(profile.dump());
            write_outputs(&common, &curve.to_csv(), meta, started)
        }
        Command::Capacity { common, dm, snr, trials, noise_draws, baseline: base } => {
            let cfg = load_config(&common)?;
            let set = load_dm(&cfg, &dm, common.seed)?;
            let (cfg, set) = baseline(base, cfg, set)?;
            let settings = DcmcSettings { channel_draws: trials, noise_draws };
            let curve = dcmc_capacity(&cfg, &set, &snr.0, settings, common.seed)?;
            let mut meta = config_meta(&cfg);
            meta["command"] = json!("capacity");
            meta["baseline"] = json!(base.map(|b| format!("{b:?}").to_lowercase()));
            meta["dm_seed"] = json!(set.seed);
            meta["channel_draws"] = json!(trials);
            meta["noise_draws"] = json!(noise_draws);
            write_outputs(&common, &curve.to_csv(), meta, started)
        }
        Command::BenchDetectors { common, dm, detectors, snr, trials, target_errors } => {
            let cfg = load_config(&common)?;
            let set = load_dm(&cfg, &dm, common.seed)?;
            let stop = StopRule { target_errors, max_trials: trials, ..StopRule::default() };
            let bench = bench_detectors(&cfg, &set, &detectors.0, &snr.0, stop, common.seed)?;
            let mut meta = config_meta(&cfg);
            meta["command"] = json!("bench-detectors");
            meta["dm_seed"] = json!(set.seed);
            meta["stop_rule"] = json!(stop);
            meta["complexity"] = json!(bench.complexity);
            meta["report"] = json!(bench.run);
            for c in &bench.complexity {
                println!(
                    "{}: candidates {} dap_evaluations {} measured_order {} mld_order {}",
                    c.detector, c.candidates_tested, c.dap_evaluations, c.measured_order, c.mld_order
                );
            }
            write_outputs(&common, &bench.run.to_csv(), meta, started)
        }
    }
}

fn workers(command: &Command) -> u64 {
    match command {
        Command::DesignDm { common, .. }
        | Command::SimulateBer { common, .. }
        | Command::Bound { common, .. }
        | Command::Capacity { common, .. }
        | Command::BenchDetectors { common, .. } => common.workers,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if std::env::var_os("RAYON_NUM_THREADS").is_some() {
        eprintln!("warning: RAYON_NUM_THREADS is ignored; use --workers");
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers(&cli.command) as usize).build() {
        Ok(p) => p,
        Err(e) => return fail(&Error::Io(e.to_string())),
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_grid_includes_endpoint() {
        assert_eq!(parse_snr_grid("0:2:20").unwrap().0.len(), 11);
        let fine = parse_snr_grid("0:0.1:1").unwrap().0;
        assert_eq!(fine.len(), 11);
        assert!((fine[10] - 1.0).abs() < 1e-12);
        assert_eq!(parse_snr_grid("-5").unwrap().0, vec![-5.0]);
        assert!(parse_snr_grid("0:0:5").is_err());
        assert!(parse_snr_grid("5:1:0").is_err());
        assert!(parse_snr_grid("a:b").is_err());
    }

    #[test]
    fn detector_list() {
        assert_eq!(parse_detector_list("mld,ircd:24,prcgd:2").unwrap().0.len(), 3);
        assert!(parse_detector_list("zf").is_err());
    }

    #[test]
    fn sidecar_appends_extension() {
        assert_eq!(sidecar_path(Path::new("out/ber.csv")), PathBuf::from("out/ber.csv.json"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
