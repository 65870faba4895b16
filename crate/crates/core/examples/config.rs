//! Batch and interactive configurations, TOML round trip and validation.

use cdseg::config::PipelineConfig;

fn main() {
    let batch = PipelineConfig::default();
    println!("# batch grid: {} maps per sigma_fh\n{}", batch.color_spaces.len() * batch.k_values.len(), batch.to_toml_string());

    let interactive = PipelineConfig::interactive();
    let text = interactive.to_toml_string();
    assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), interactive);
    println!("interactive grid: {:?} x {:?}", interactive.color_spaces, interactive.k_values);

    let custom = PipelineConfig::from_toml_str("k_values = [300.0]\nsigma_c = 0.2\nsigma_t = \"best\"\n").unwrap();
    println!("custom sigma candidates: {:?}", custom.sigma_candidates().candidates());

    for bad in ["k_values = []", "tolerance = -1.0", "colour_spaces = [\"lab\"]"] {
        println!("{bad:?} -> {}", PipelineConfig::from_toml_str(bad).unwrap_err());
    }
}
