//! Dataset-level scores: confusion matrices from several images merged
//! before the ratios are taken.

use cdseg::mask::LabelMask;
use cdseg::metrics::ConfusionMatrix;
use cdseg::synthetic::three_regions;

fn main() {
    let mut total = ConfusionMatrix::new(21);
    for seed in 0..3u64 {
        let gt = three_regions(seed).ground_truth;
        // Shift the prediction right by a few pixels and void a border row.
        let shift = 2 + seed as usize;
        let mut labels = Vec::with_capacity(gt.labels().len());
        for y in 0..gt.height() {
            for x in 0..gt.width() {
                labels.push(gt.get(x.saturating_sub(shift), y));
            }
        }
        let mut truth = gt.labels().to_vec();
        truth[..gt.width()].fill(255);
        let pred = LabelMask::new(gt.width(), gt.height(), labels).unwrap();
        let truth = LabelMask::new(gt.width(), gt.height(), truth).unwrap();

        let mut cm = ConfusionMatrix::new(21);
        cm.accumulate(&pred, &truth, 255).unwrap();
        println!("image {seed}: mIoU {:.4}", cm.mean_iou().unwrap());
        total.merge(&cm).unwrap();
    }
    print!("{}", total.report().unwrap());
}
