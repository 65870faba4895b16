//! One colour space and one FH setting: per-class regions, conflicts and the
//! resulting mask.

use cdseg::config::PipelineConfig;
use cdseg::features::ColorSpace;
use cdseg::metrics::ConfusionMatrix;
use cdseg::propagation::segment_single;
use cdseg::synthetic::three_regions;

fn main() {
    let fixture = three_regions(7);
    let cfg = PipelineConfig::default();
    let scr = fixture.scribbles(cfg.n_cl);
    let job = segment_single(&fixture.image, &scr, ColorSpace::RgI, 300.0, 0.8, &cfg).unwrap();

    println!("sigma chosen: ({}, {})", job.sigma_c, job.sigma_t);
    for seg in &job.segments {
        println!(
            "class {}: {} superpixels in {} round(s), peak confidence {:.3}",
            seg.class_id,
            seg.uds.len(),
            seg.rounds,
            seg.confidence.iter().copied().fold(0.0, f64::max)
        );
    }
    let a = &job.assignment;
    println!(
        "contested {}, flood-filled {}, unreachable {}",
        a.contested, a.flood_filled, a.unreachable
    );
    let mut cm = ConfusionMatrix::new(cfg.n_cl);
    cm.accumulate(&job.mask, &fixture.ground_truth, cfg.ignore_label).unwrap();
    println!("pixel accuracy {:.4}", cm.pixel_accuracy().unwrap());
}
