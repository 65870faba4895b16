//! FH superpixels of the three-region fixture in every colour space.

use cdseg::features::{convert_color_space, ColorSpace};
use cdseg::superpixels::{adjacency, fh_segment, FhParams};
use cdseg::synthetic::three_regions;

fn main() {
    let fixture = three_regions(42);
    for space in ColorSpace::ALL {
        let channels = convert_color_space(&fixture.image, space);
        for k in [225.0, 400.0] {
            let sp = fh_segment(&channels, &FhParams { k, sigma_fh: 0.8, min_size: 20 }).unwrap();
            let sizes = sp.sizes();
            println!(
                "{:>9} k={k:<3} segments={:<3} edges={:<3} smallest={}",
                space.to_string(),
                sp.count(),
                adjacency(&sp).len(),
                sizes.iter().min().unwrap()
            );
        }
    }
}
