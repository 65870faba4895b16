//! Full grid on the three-region fixture, scored against its ground truth.

use std::time::Instant;

use cdseg::config::PipelineConfig;
use cdseg::metrics::ConfusionMatrix;
use cdseg::propagation::full_pipeline;
use cdseg::synthetic::three_regions;

fn main() {
    let fixture = three_regions(42);
    let cfg = PipelineConfig::default();
    let scribbles = fixture.scribbles(cfg.n_cl);

    let start = Instant::now();
    let out = full_pipeline(&fixture.image, &scribbles, &cfg).expect("pipeline");
    println!("{} maps in {:.2?}", out.jobs.len(), start.elapsed());

    for job in &out.jobs {
        let mut cm = ConfusionMatrix::new(cfg.n_cl);
        cm.accumulate(&job.mask, &fixture.ground_truth, cfg.ignore_label).unwrap();
        println!(
            "{:>9} k={:<3} sigma=({}, {}) superpixels={:<4} acc={:.4}",
            job.space.to_string(),
            job.k,
            job.sigma_c,
            job.sigma_t,
            job.assignment.labels.len(),
            cm.pixel_accuracy().unwrap()
        );
    }
    let mut cm = ConfusionMatrix::new(cfg.n_cl);
    cm.accumulate(&out.mask, &fixture.ground_truth, cfg.ignore_label).unwrap();
    print!("{}", cm.report().unwrap());
}
