//! Scratch harness for tuning defaults on the shipped phantoms.
//! Run: cargo run --release --example tune -- <scenario> [args...]

use inr_reco::image::{self, KspaceVolume};
use inr_reco::loss::{LossWeights, RegKind};
use inr_reco::metrics;
use inr_reco::phantom::{self, PhantomSpec};
use inr_reco::recon;
use inr_reco::sampling::{LineAxis, SamplingMask};
use inr_reco::train::{self, NetConfig, TrainConfig};
use std::time::Instant;

fn desk_net(embed: usize, hidden: usize, layers: usize) -> NetConfig {
    NetConfig {
        embed_size: embed,
        embed_sigma: 10.0,
        hidden,
        hidden_layers: layers,
        w0_image: 30.0,
        w0_sens: 30.0,
        shared_features: true,
    }
}

struct RunOutcome {
    psnr: f64,
    ssim: f64,
    rlne: f64,
    rlne_model: f64,
    first_loss: f64,
    last_loss: f64,
    secs: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    h: usize,
    w: usize,
    coils: usize,
    acs: usize,
    accel: usize,
    noise: f64,
    reg: RegKind,
    l1: f64,
    l2: f64,
    iters: usize,
    lr: f64,
    net: NetConfig,
    seed: u64,
) -> RunOutcome {
    run_cell_opt(h, w, coils, acs, accel, noise, reg, l1, l2, iters, lr, net, seed, false)
}

#[allow(clippy::too_many_arguments)]
fn run_cell_opt(
    h: usize,
    w: usize,
    coils: usize,
    acs: usize,
    accel: usize,
    noise: f64,
    reg: RegKind,
    l1: f64,
    l2: f64,
    iters: usize,
    lr: f64,
    net: NetConfig,
    seed: u64,
    cosine: bool,
) -> RunOutcome {
    let seeds = inr_reco::rng::SeedStreams::from_master(seed);
    let spec = PhantomSpec::standard(h, w, coils, seeds.phantom);
    let ph = phantom::make_phantom(&spec).unwrap();
    let cm = phantom::make_coils(&spec).unwrap();
    let mask = if accel == 0 {
        SamplingMask::full(h, w)
    } else {
        SamplingMask::uniform_cartesian(h, w, accel, acs, LineAxis::Cols).unwrap()
    };
    let (y, full) = phantom::simulate_acquisition(&ph, &cm, &mask, noise, seeds.noise).unwrap();
    let reference = image::sos_combine(&full.zero_filled().unwrap()).unwrap();
    let normalized = image::normalize_kspace(&y).unwrap();

    let mut cfg = TrainConfig::new(LossWeights::new(l1, l2, reg).unwrap(), seed);
    cfg.iters = iters;
    cfg.lr = lr;
    cfg.log_every = 0;
    cfg.cosine_decay = cosine;
    cfg.net = net;

    let t0 = Instant::now();
    let fitted = train::fit(&normalized, &mask, &cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let rec = recon::reconstruct(&fitted.model, &normalized, &mask).unwrap();
    let m = metrics::evaluate(&rec.combined, &reference).unwrap();

    // model output before DC: SOS of s_j * x, de-normalized
    let (x, s) = fitted.model.evaluate().unwrap();
    let mut stack = ndarray::Array3::zeros((coils, h, w));
    for j in 0..coils {
        let mut sl = stack.index_axis_mut(ndarray::Axis(0), j);
        sl.assign(&s.map(j));
        sl.zip_mut_with(x.data(), |v, xv| *v *= xv);
    }
    let model_sos = image::sos_combine(&stack).unwrap();
    let scale = normalized.scale();
    let model_sos = model_sos.mapv(|v| v * scale);
    let rlne_model = metrics::rlne(&model_sos, &reference).unwrap();

    RunOutcome {
        psnr: m.psnr,
        ssim: m.ssim,
        rlne: m.rlne,
        rlne_model,
        first_loss: fitted.trace.first().unwrap().total,
        last_loss: fitted.trace.last().unwrap().total,
        secs,
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scenario = args.first().map(String::as_str).unwrap_or("help");
    let getf = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let getu = |i: usize, d: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);

    match scenario {
        // fitcap <embed> <hidden> <layers> <lr> <iters>
        "fitcap" => {
            let net = desk_net(getu(1, 64), getu(2, 64), getu(3, 3));
            let o = run_cell(
                32, 32, 1, 0, 0, 0.0,
                RegKind::None, 0.0, 0.0,
                getu(5, 1000), getf(4, 1e-4), net, 7,
            );
            println!(
                "fitcap: rlne_model {:.5}  rlne_dc {:.2e}  loss {:.3}->{:.4} ({:.2}%)  {:.1}s",
                o.rlne_model,
                o.rlne,
                o.first_loss,
                o.last_loss,
                100.0 * o.last_loss / o.first_loss,
                o.secs
            );
        }
        // ablate <embed> <hidden> <layers> <lr> <l1> <l2> <iters> <seed>
        "ablate" => {
            let net = desk_net(getu(1, 64), getu(2, 64), getu(3, 3));
            let (lr, l1, l2) = (getf(4, 1e-4), getf(5, 2e-4), getf(6, 2e-3));
            let iters = getu(7, 1000);
            let seed = getu(8, 0) as u64;
            let mut gaps = Vec::new();
            for acs in [8usize, 24] {
                let none = run_cell(64, 64, 4, acs, 5, 0.005, RegKind::None, l1, 0.0, iters, lr, net, seed);
                let tv = run_cell(64, 64, 4, acs, 5, 0.005, RegKind::Tv, l1, l2, iters, lr, net, seed);
                let gap = tv.psnr - none.psnr;
                println!(
                    "acs {acs:2}: none {:.3} dB (rlne {:.4}) | tv {:.3} dB (rlne {:.4}) | gap {:+.3} dB | {:.0}s+{:.0}s",
                    none.psnr, none.rlne, tv.psnr, tv.rlne, gap, none.secs, tv.secs
                );
                gaps.push(gap);
            }
            println!("gap(acs8) - gap(acs24) = {:+.3} dB", gaps[0] - gaps[1]);
        }
        // sweep <embed> <hidden> <layers> <lr> <l1> <l2> <iters> <seed>
        "sweep" => {
            let net = desk_net(getu(1, 64), getu(2, 64), getu(3, 3));
            let (lr, l1, l2) = (getf(4, 1e-4), getf(5, 2e-4), getf(6, 2e-3));
            let iters = getu(7, 1000);
            let seed = getu(8, 0) as u64;
            let mut prev = f64::INFINITY;
            for acs in [4usize, 8, 16, 24] {
                let o = run_cell(64, 64, 4, acs, 5, 0.005, RegKind::Tv, l1, l2, iters, lr, net, seed);
                let ok = o.rlne <= prev * 1.02;
                println!("acs {acs:2}: rlne {:.5} psnr {:.3} ({}, {:.0}s)", o.rlne, o.psnr, if ok { "ok" } else { "VIOLATION" }, o.secs);
                prev = o.rlne;
            }
        }
        // cell <embed> <hidden> <layers> <lr> <l1> <l2> <iters> <acs> <reg(0=none,1=tv)> <seed> <cosine>
        "cell" => {
            let net = desk_net(getu(1, 64), getu(2, 64), getu(3, 3));
            let reg = if getu(9, 1) == 1 { RegKind::Tv } else { RegKind::None };
            let o = run_cell_opt(
                64, 64, 4,
                getu(8, 8), 5, 0.005,
                reg, getf(5, 2e-4), getf(6, 2e-3),
                getu(7, 1000), getf(4, 1e-4), net, getu(10, 0) as u64,
                getu(11, 0) == 1,
            );
            println!(
                "cell: psnr {:.3} ssim {:.4} rlne {:.4} loss {:.2}->{:.3} {:.0}s",
                o.psnr, o.ssim, o.rlne, o.first_loss, o.last_loss, o.secs
            );
        }
        // zf <acs>: zero-filled baseline quality
        "zf" => {
            let seeds = inr_reco::rng::SeedStreams::from_master(0);
            let spec = PhantomSpec::standard(64, 64, 4, seeds.phantom);
            let ph = phantom::make_phantom(&spec).unwrap();
            let cm = phantom::make_coils(&spec).unwrap();
            let mask = SamplingMask::uniform_cartesian(64, 64, 5, getu(1, 8), LineAxis::Cols).unwrap();
            let (y, full) = phantom::simulate_acquisition(&ph, &cm, &mask, 0.005, seeds.noise).unwrap();
            let reference = image::sos_combine(&full.zero_filled().unwrap()).unwrap();
            let zf = image::sos_combine(&y.zero_filled().unwrap()).unwrap();
            let m = metrics::evaluate(&zf, &reference).unwrap();
            println!("zero-filled acs {}: psnr {:.3} ssim {:.4} rlne {:.4}", getu(1, 8), m.psnr, m.ssim, m.rlne);
        }
        // regs <iters>: wall-clock comparison of all four regularizers
        "regs" => {
            let net = desk_net(getu(2, 64), getu(3, 64), getu(4, 3));
            let iters = getu(1, 200);
            for reg in [RegKind::None, RegKind::L1Fourier, RegKind::LowRank, RegKind::Tv] {
                let o = run_cell(64, 64, 4, 8, 5, 0.005, reg, 2e-4, 2e-3, iters, 1e-4, net, 0);
                println!("reg {:5}: psnr {:.3} rlne {:.4} in {:.1}s", format!("{reg:?}"), o.psnr, o.rlne, o.secs);
            }
        }
        _ => {
            eprintln!("scenarios: fitcap | ablate | sweep | regs");
        }
    }
}
