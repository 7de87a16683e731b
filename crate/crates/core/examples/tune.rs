//! Quick parameter experimentation: downsample a ground-truth crop, then
//! compare bicubic and the nonlocal solver per iteration.
//!
//! Usage: cargo run --release --example tune -- <image.pgm> [crop] [factor] [iters]

use std::env;
use std::path::PathBuf;

use wenlr_core::bicubic::bicubic_upscale;
use wenlr_core::image::DownsampleOp;
use wenlr_core::io::read_image;
use wenlr_core::metrics::{psnr, ssim};
use wenlr_core::solver::{interpolate_with_progress, SolverConfig};

fn main() {
    let args: Vec<String> = env::args().collect();
    let path = PathBuf::from(args.get(1).expect("image path"));
    let crop: usize = args.get(2).map_or(256, |s| s.parse().unwrap());
    let factor: usize = args.get(3).map_or(2, |s| s.parse().unwrap());
    let iters: usize = args.get(4).map_or(10, |s| s.parse().unwrap());

    let gt_full = read_image(&path).unwrap();
    let side = crop - crop % factor;
    let gt = gt_full.center_crop(side.min(gt_full.height()), side.min(gt_full.width())).unwrap();
    let dop = DownsampleOp::new(factor, gt.dims()).unwrap();
    let y = dop.downsample(&gt).unwrap();

    let bic = bicubic_upscale(&y, factor).unwrap();
    println!(
        "bicubic: psnr={:.4} ssim={:.5}",
        psnr(&gt, &bic, 1.0).unwrap(),
        ssim(&gt, &bic).unwrap()
    );

    let cfg = SolverConfig {
        iterations: iters,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let gt_ref = &gt;
    let (out, report) = interpolate_with_progress(&y, factor, &cfg, |r| {
        eprintln!(
            "  iter {}: linf={:.3e} l2={:.3e} obj={:.4e} cg={} kurt {:.2}->{:.2} {:.0}ms",
            r.iteration,
            r.linf,
            r.l2,
            r.objective,
            r.cg_iterations,
            r.kurtosis_residual,
            r.kurtosis_weighted,
            r.wall_ms
        );
        let _ = gt_ref;
    })
    .unwrap();
    println!(
        "nlr:     psnr={:.4} ssim={:.5}  ({:.1}s, k2={:.3e})",
        psnr(&gt, &out, 1.0).unwrap(),
        ssim(&gt, &out).unwrap(),
        t0.elapsed().as_secs_f64(),
        report.k2
    );
}
