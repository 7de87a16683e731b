//! Phase timing for the per-iteration model build.
//! Usage: cargo run --release --example profile_phases -- <image.pgm> [crop]

use std::time::Instant;

use rayon::prelude::*;
use wenlr_core::dictionary::train_subdictionary;
use wenlr_core::io::read_image;
use wenlr_core::nlr::{build_from_neighbors, kernel_weights};
use wenlr_core::patch::PatchSystem;
use wenlr_core::search::{find_similar, SearchConfig};
use wenlr_core::solver::SolverConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gt = read_image(std::path::Path::new(&args[1])).unwrap();
    let crop: usize = args.get(2).map_or(128, |s| s.parse().unwrap());
    let img = gt.center_crop(crop, crop).unwrap();
    let cfg = SolverConfig::default();
    let sys = PatchSystem::dense(img.dims(), cfg.patch_size).unwrap();
    let k = sys.len();
    let p2 = sys.patch_len();
    println!("K = {k}");

    let scfg = SearchConfig {
        window: cfg.window,
        max_candidates: usize::MAX,
        exclude_self: false,
        distance_threshold: None,
    };
    let count = cfg.train_size.max(cfg.prior_neighbors).max(cfg.nlr_neighbors + 1);

    let t = Instant::now();
    let searches: Vec<_> = (0..k)
        .into_par_iter()
        .map(|i| find_similar(&img, &sys, i, &scfg, count).unwrap())
        .collect();
    println!("search: {:.0}ms", t.elapsed().as_secs_f64() * 1e3);

    let t = Instant::now();
    let patches: Vec<f64> = {
        let mut v = vec![0.0; k * p2];
        for i in 0..k {
            sys.extract_into(img.as_slice(), i, &mut v[i * p2..(i + 1) * p2]).unwrap();
        }
        v
    };
    println!("extract: {:.0}ms", t.elapsed().as_secs_f64() * 1e3);

    let t = Instant::now();
    let _dicts: Vec<_> = (0..k)
        .into_par_iter()
        .map(|i| {
            let found = &searches[i];
            let n = cfg.train_size.min(found.len());
            let samples: Vec<&[f64]> = found.neighbor_indices[..n]
                .iter()
                .map(|&j| &patches[j * p2..(j + 1) * p2])
                .collect();
            train_subdictionary(&samples).unwrap()
        })
        .collect();
    println!("dict train: {:.0}ms", t.elapsed().as_secs_f64() * 1e3);

    let t = Instant::now();
    let lists: Vec<Vec<usize>> = (0..k)
        .map(|i| {
            searches[i]
                .neighbor_indices
                .iter()
                .copied()
                .filter(|&j| j != i)
                .take(cfg.nlr_neighbors)
                .collect()
        })
        .collect();
    let kernel = kernel_weights(cfg.patch_size, cfg.kernel_sigma).unwrap();
    let _op = build_from_neighbors(&img, &sys, &lists, &kernel, cfg.chi).unwrap();
    println!("fits: {:.0}ms", t.elapsed().as_secs_f64() * 1e3);
}
