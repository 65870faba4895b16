//! Histogram features and the normalized affinity graph for one map, across
//! the sigma grid.

use cdseg::config::PipelineConfig;
use cdseg::features::{all_superpixel_features, build_affinity, convert_color_space, ColorSpace};
use cdseg::superpixels::{adjacency, fh_segment, FhParams};
use cdseg::synthetic::three_regions;

fn main() {
    let fixture = three_regions(42);
    let channels = convert_color_space(&fixture.image, ColorSpace::Lab);
    let sp = fh_segment(&channels, &FhParams { k: 250.0, sigma_fh: 0.8, min_size: 20 }).unwrap();
    let adj = adjacency(&sp);
    let features = all_superpixel_features(&channels, &sp, ColorSpace::Lab.gradient_channel()).unwrap();
    println!(
        "{} superpixels, {} adjacent pairs, {} colour bins, {} texture bins",
        sp.count(),
        adj.len(),
        features[0].color.len(),
        features[0].texture.len()
    );

    for (sc, st) in PipelineConfig::default().sigma_candidates().candidates() {
        let g = build_affinity(&features, &adj, sc, st).unwrap();
        let weights: Vec<String> = adj.iter().map(|&(i, j)| format!("{:.2}", g.weight(i, j))).collect();
        println!("sigma_c={sc:<4} sigma_t={st:<4} {}", weights.join(" "));
    }
}
