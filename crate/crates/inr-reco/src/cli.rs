//! Batch front-end: simulate, reconstruct, evaluate, and compare
//! regularizers.
//!
//! Every flag can also be supplied through a key=value config file
//! (`--config`); explicit flags win over file values. All randomness flows
//! from one `seed` flag, with per-component sub-seeds derived by fixed
//! splitting. Commands validate their inputs fully before writing anything.

use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::image;
use crate::io;
use crate::loss::{LossReport, LossWeights, RegKind};
use crate::metrics;
use crate::phantom::{self, PhantomSpec};
use crate::recon::{self, ReconResult};
use crate::rng::SeedStreams;
use crate::sampling::{LineAxis, SamplingMask};
use crate::train::{self, NetConfig, TrainConfig};

/// Tuned on the shipped phantoms (not values from any publication); see the
/// README for the tuning protocol.
pub const DEFAULT_LAMBDA1: f64 = 2e-4;
pub const DEFAULT_LAMBDA2: f64 = 2e-3;

#[derive(Parser)]
#[command(
    name = "inr-reco",
    version,
    about = "Scan-specific parallel MRI reconstruction with jointly fitted coordinate networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom acquisition (phantom, coils, mask, k-space).
    Simulate(SimulateArgs),
    /// Fit the networks to measured k-space and write the reconstruction.
    Recon(ReconArgs),
    /// Compare a reconstruction against a reference image.
    Eval(EvalArgs),
    /// Run the regularizer/no-regularizer grid over (ACS, R) pairs.
    Ablate(AblateArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Grid size as N or HxW.
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub coils: Option<usize>,
    /// Mask family: uniform (Cartesian lines) or gaussian (pointwise).
    #[arg(long)]
    pub mask: Option<String>,
    /// Acceleration factor for uniform masks.
    #[arg(long = "R")]
    pub r: Option<usize>,
    /// ACS line count for uniform masks.
    #[arg(long)]
    pub acs: Option<usize>,
    /// Sampling rate for gaussian masks.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Density width for gaussian masks, as a fraction of the grid.
    #[arg(long)]
    pub sigma_frac: Option<f64>,
    /// Complex noise deviation relative to the DC magnitude.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// key=value file supplying any of the above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReconArgs {
    /// Measured k-space (base name of an .hdr/.cfl pair).
    #[arg(long)]
    pub kspace: Option<PathBuf>,
    /// Sampling mask (base name of an .hdr/.cfl pair).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sensitivity regularizer: none, tv, l1f, or lr.
    #[arg(long)]
    pub reg: Option<String>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub w0: Option<f64>,
    #[arg(long)]
    pub embed_size: Option<usize>,
    /// Deviation of the random embedding matrix entries.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Reconstructed image (base name of an .hdr/.cfl pair).
    #[arg(long)]
    pub recon: Option<PathBuf>,
    /// Reference image (base name of an .hdr/.cfl pair).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Error-map amplification before clipping to [0, 1].
    #[arg(long)]
    pub gain: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub coils: Option<usize>,
    /// Comma-separated ACS values.
    #[arg(long)]
    pub acs: Option<String>,
    /// Comma-separated acceleration factors.
    #[arg(long = "R")]
    pub r: Option<String>,
    /// Comma-separated regularizers out of none,tv,l1f,lr.
    #[arg(long)]
    pub regs: Option<String>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub w0: Option<f64>,
    #[arg(long)]
    pub embed_size: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Flag resolution order: explicit CLI value, then config file, then default.
struct Resolver {
    cfg: BTreeMap<String, String>,
}

impl Resolver {
    fn load(config: &Option<PathBuf>, allowed: &[&str]) -> Result<Self> {
        let cfg = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::InvalidInput(format!("cannot read config {}: {e}", path.display()))
                })?;
                io::parse_job_config(&text, allowed)?
            }
            None => BTreeMap::new(),
        };
        Ok(Self { cfg })
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.cfg.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Format(format!("config key {key:?}: cannot parse {raw:?}"))),
            None => Ok(None),
        }
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(flag.or(self.parse(key)?).unwrap_or(default))
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        flag.or(self.parse(key)?)
            .ok_or_else(|| Error::Usage(format!("missing required flag --{key}")))
    }
}

fn parse_size(text: &str) -> Result<(usize, usize)> {
    let parse_one = |s: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| Error::Usage(format!("bad size component {s:?}")))
    };
    match text.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse_one(h)?, parse_one(w)?)),
        None => {
            let n = parse_one(text)?;
            Ok((n, n))
        }
    }
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    let items: Result<Vec<T>> = text
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| Error::Usage(format!("bad {what} entry {tok:?}")))
        })
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(Error::Usage(format!("empty {what} list")));
    }
    Ok(items)
}

fn write_f64_record<W: std::io::Write>(
    writer: &mut csv::Writer<W>,
    head: &[&str],
    values: &[f64],
) -> Result<()> {
    let mut record: Vec<String> = head.iter().map(|s| s.to_string()).collect();
    record.extend(values.iter().map(|v| format!("{v}")));
    writer
        .write_record(&record)
        .map_err(|e| Error::Format(format!("csv write: {e}")))
    }

fn write_loss_trace(path: &Path, trace: &[LossReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "dc", "image_tv", "sens_reg", "total"])
        .map_err(|e| Error::Format(format!("csv write: {e}")))?;
    for (i, r) in trace.iter().enumerate() {
        write_f64_record(&mut w, &[&i.to_string()], &[r.dc, r.image_tv, r.sens_reg, r.total])?;
    }
    w.flush()?;
    Ok(())
}

fn write_metrics_csv(path: &Path, report: &metrics::MetricReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["psnr", "ssim", "rlne"])
        .map_err(|e| Error::Format(format!("csv write: {e}")))?;
    write_f64_record(&mut w, &[], &[report.psnr, report.ssim, report.rlne])?;
    w.flush()?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Recon(args) => cmd_recon(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
    }
}

const SIMULATE_KEYS: &[&str] =
    &["out", "size", "coils", "mask", "R", "acs", "rate", "sigma_frac", "noise", "seed"];

pub fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let r = Resolver::load(&args.config, SIMULATE_KEYS)?;
    let out: PathBuf = r.require(args.out, "out")?;
    let size = r.get(args.size, "size", "64".to_string())?;
    let (h, w) = parse_size(&size)?;
    let coils = r.get(args.coils, "coils", 4)?;
    let mask_kind = r.get(args.mask, "mask", "uniform".to_string())?;
    let accel = r.get(args.r, "R", 5)?;
    let acs = r.get(args.acs, "acs", 8)?;
    let rate = r.get(args.rate, "rate", 0.25)?;
    let sigma_frac = r.get(args.sigma_frac, "sigma_frac", 0.15)?;
    let noise = r.get(args.noise, "noise", 0.0)?;
    let seed = r.get(args.seed, "seed", 0)?;

    let seeds = SeedStreams::from_master(seed);
    let spec = PhantomSpec::standard(h, w, coils, seeds.phantom);
    let phantom_img = phantom::make_phantom(&spec)?;
    let coil_maps = phantom::make_coils(&spec)?;
    let mask = match mask_kind.as_str() {
        "uniform" => SamplingMask::uniform_cartesian(h, w, accel, acs, LineAxis::Cols)?,
        "gaussian" => SamplingMask::gaussian_pointwise(h, w, rate, sigma_frac, seeds.mask)?,
        other => return Err(Error::Usage(format!("unknown mask kind {other:?}"))),
    };
    let (kspace, kspace_full) =
        phantom::simulate_acquisition(&phantom_img, &coil_maps, &mask, noise, seeds.noise)?;
    let reference = image::sos_combine(&kspace_full.zero_filled()?)?;

    std::fs::create_dir_all(&out)?;
    io::write_image(&out.join("phantom"), &phantom_img)?;
    io::write_sensitivities(&out.join("coils"), &coil_maps)?;
    io::write_mask(&out.join("mask"), &mask)?;
    io::write_volume(&out.join("kspace"), &kspace)?;
    io::write_volume(&out.join("kspace_full"), &kspace_full)?;
    io::write_real_image(&out.join("reference"), &reference)?;
    eprintln!(
        "simulated {h}x{w}, {coils} coils, {} of {} k-space locations sampled",
        mask.sampled_count(),
        h * w
    );
    Ok(())
}

const RECON_KEYS: &[&str] = &[
    "kspace", "mask", "out", "reg", "lambda1", "lambda2", "iters", "lr", "w0", "embed_size",
    "sigma", "seed", "log_every",
];

pub fn cmd_recon(args: ReconArgs) -> Result<()> {
    let r = Resolver::load(&args.config, RECON_KEYS)?;
    let kspace_path: PathBuf = r.require(args.kspace, "kspace")?;
    let mask_path: PathBuf = r.require(args.mask, "mask")?;
    let out: PathBuf = r.require(args.out, "out")?;
    let reg = RegKind::parse(&r.get(args.reg, "reg", "tv".to_string())?)?;
    let lambda1 = r.get(args.lambda1, "lambda1", DEFAULT_LAMBDA1)?;
    let lambda2 = r.get(args.lambda2, "lambda2", DEFAULT_LAMBDA2)?;
    let iters = r.get(args.iters, "iters", 1000)?;
    let lr = r.get(args.lr, "lr", 1e-4)?;
    let w0 = r.get(args.w0, "w0", 30.0)?;
    let embed_size = r.get(args.embed_size, "embed_size", 256)?;
    let sigma = r.get(args.sigma, "sigma", 10.0)?;
    let seed = r.get(args.seed, "seed", 0)?;
    let log_every = r.get(args.log_every, "log_every", 100)?;

    let y = io::read_volume(&kspace_path)?;
    let mask = io::read_mask(&mask_path)?;
    if mask.h() != y.h() || mask.w() != y.w() {
        return Err(Error::InvalidInput(format!(
            "mask {}x{} does not match k-space {}x{}",
            mask.h(),
            mask.w(),
            y.h(),
            y.w()
        )));
    }

    let normalized = image::normalize_kspace(&y)?;
    let mut cfg = TrainConfig::new(LossWeights::new(lambda1, lambda2, reg)?, seed);
    cfg.iters = iters;
    cfg.lr = lr;
    cfg.log_every = log_every;
    cfg.net = NetConfig {
        embed_size,
        embed_sigma: sigma,
        w0_image: w0,
        w0_sens: w0,
        ..NetConfig::default()
    };

    let result = train::fit_with_observer(&normalized, &mask, &cfg, |it, report| {
        eprintln!(
            "iter {it:5}  dc {:.6e}  tv {:.6e}  reg {:.6e}  total {:.6e}",
            report.dc, report.image_tv, report.sens_reg, report.total
        );
    })?;
    let rec: ReconResult = recon::reconstruct(&result.model, &normalized, &mask)?;

    std::fs::create_dir_all(&out)?;
    io::write_real_image(&out.join("image"), &rec.combined)?;
    let peak = rec.combined.iter().cloned().fold(f64::MIN, f64::max).max(f64::MIN_POSITIVE);
    io::write_pgm(&out.join("image.pgm"), &rec.combined.mapv(|v| v / peak))?;
    io::write_sensitivities(&out.join("sens"), &rec.sensitivities)?;
    io::write_volume(&out.join("kspace_final"), &rec.kspace_final)?;
    write_loss_trace(&out.join("loss.csv"), &result.trace)?;
    io::write_checkpoint(&out.join("checkpoint.bin"), &result.model)?;
    Ok(())
}

const EVAL_KEYS: &[&str] = &["recon", "reference", "out", "gain"];

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let r = Resolver::load(&args.config, EVAL_KEYS)?;
    let recon_path: PathBuf = r.require(args.recon, "recon")?;
    let reference_path: PathBuf = r.require(args.reference, "reference")?;
    let out: PathBuf = r.require(args.out, "out")?;
    let gain = r.get(args.gain, "gain", 5.0)?;

    let recon_img = io::read_real_image(&recon_path)?;
    let reference = io::read_real_image(&reference_path)?;
    let report = metrics::evaluate(&recon_img, &reference)?;

    let peak = reference.iter().cloned().fold(f64::MIN, f64::max);
    if peak <= 0.0 {
        return Err(Error::InvalidInput("reference peak must be positive".into()));
    }
    let error_map = recon::export_error_map(
        &recon_img.mapv(|v| v / peak),
        &reference.mapv(|v| v / peak),
        gain,
    )?;

    std::fs::create_dir_all(&out)?;
    write_metrics_csv(&out.join("metrics.csv"), &report)?;
    io::write_pgm(&out.join("error_map.pgm"), &error_map)?;
    println!("psnr {:.4} dB  ssim {:.6}  rlne {:.6}", report.psnr, report.ssim, report.rlne);
    Ok(())
}

const ABLATE_KEYS: &[&str] = &[
    "out", "size", "coils", "acs", "R", "regs", "noise", "iters", "lr", "lambda1", "lambda2",
    "w0", "embed_size", "sigma", "seed",
];

pub fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let r = Resolver::load(&args.config, ABLATE_KEYS)?;
    let out: PathBuf = r.require(args.out, "out")?;
    let size = r.get(args.size, "size", "64".to_string())?;
    let (h, w) = parse_size(&size)?;
    let coils = r.get(args.coils, "coils", 4)?;
    let acs_list: Vec<usize> = parse_list(&r.get(args.acs, "acs", "8,24".to_string())?, "acs")?;
    let r_list: Vec<usize> = parse_list(&r.get(args.r, "R", "5".to_string())?, "R")?;
    let reg_names: Vec<String> = parse_list(&r.get(args.regs, "regs", "none,tv".to_string())?, "regs")?;
    let regs: Vec<RegKind> = reg_names
        .iter()
        .map(|n| RegKind::parse(n))
        .collect::<Result<_>>()?;
    let noise = r.get(args.noise, "noise", 0.005)?;
    let iters = r.get(args.iters, "iters", 1000)?;
    let lr = r.get(args.lr, "lr", 1e-4)?;
    let lambda1 = r.get(args.lambda1, "lambda1", DEFAULT_LAMBDA1)?;
    let lambda2 = r.get(args.lambda2, "lambda2", DEFAULT_LAMBDA2)?;
    let w0 = r.get(args.w0, "w0", 30.0)?;
    let embed_size = r.get(args.embed_size, "embed_size", 256)?;
    let sigma = r.get(args.sigma, "sigma", 10.0)?;
    let seed = r.get(args.seed, "seed", 0)?;

    let seeds = SeedStreams::from_master(seed);
    let spec = PhantomSpec::standard(h, w, coils, seeds.phantom);
    let phantom_img = phantom::make_phantom(&spec)?;
    let coil_maps = phantom::make_coils(&spec)?;

    std::fs::create_dir_all(&out)?;
    let mut writer = csv::Writer::from_path(out.join("ablation.csv"))?;
    writer
        .write_record(["acs", "r", "reg", "psnr", "ssim", "rlne"])
        .map_err(|e| Error::Format(format!("csv write: {e}")))?;

    for &acs in &acs_list {
        for &accel in &r_list {
            let mask = SamplingMask::uniform_cartesian(h, w, accel, acs, LineAxis::Cols)?;
            let (kspace, kspace_full) =
                phantom::simulate_acquisition(&phantom_img, &coil_maps, &mask, noise, seeds.noise)?;
            let reference = image::sos_combine(&kspace_full.zero_filled()?)?;
            let normalized = image::normalize_kspace(&kspace)?;

            for reg in &regs {
                let started = Instant::now();
                let mut cfg = TrainConfig::new(LossWeights::new(lambda1, lambda2, *reg)?, seed);
                cfg.iters = iters;
                cfg.lr = lr;
                cfg.log_every = 0;
                cfg.net = NetConfig {
                    embed_size,
                    embed_sigma: sigma,
                    w0_image: w0,
                    w0_sens: w0,
                    ..NetConfig::default()
                };
                let fitted = train::fit(&normalized, &mask, &cfg)?;
                let rec = recon::reconstruct(&fitted.model, &normalized, &mask)?;
                let report = metrics::evaluate(&rec.combined, &reference)?;
                write_f64_record(
                    &mut writer,
                    &[&acs.to_string(), &accel.to_string(), reg.name()],
                    &[report.psnr, report.ssim, report.rlne],
                )?;
                eprintln!(
                    "acs {acs:3}  R {accel}  reg {:4}  psnr {:7.3}  ssim {:.4}  rlne {:.4}  ({:.1}s)",
                    reg.name(),
                    report.psnr,
                    report.ssim,
                    report.rlne,
                    started.elapsed().as_secs_f64()
                );
            }
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_parsing() {
        assert_eq!(parse_size("64").unwrap(), (64, 64));
        assert_eq!(parse_size("64x48").unwrap(), (64, 48));
        assert_eq!(parse_size("8X4").unwrap(), (8, 4));
        assert!(parse_size("0").is_err());
        assert!(parse_size("axb").is_err());
        assert!(parse_size("64x").is_err());
    }

    #[test]
    fn list_parsing() {
        let v: Vec<usize> = parse_list("4, 8,16", "acs").unwrap();
        assert_eq!(v, vec![4, 8, 16]);
        assert!(parse_list::<usize>("4,,8", "acs").is_err());
    }

    #[test]
    fn resolver_precedence() {
        let mut cfg = BTreeMap::new();
        cfg.insert("iters".to_string(), "50".to_string());
        let r = Resolver { cfg };
        assert_eq!(r.get(Some(10usize), "iters", 1000).unwrap(), 10);
        assert_eq!(r.get(None::<usize>, "iters", 1000).unwrap(), 50);
        assert_eq!(r.get(None::<usize>, "lr_missing", 1000).unwrap(), 1000);
        assert!(matches!(
            r.require(None::<usize>, "absent"),
            Err(Error::Usage(_))
        ));
    }
}
