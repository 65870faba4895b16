use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cdseg::config::{Param, PipelineConfig};
use cdseg::features::{convert_color_space, ColorSpace};
use cdseg::io::{
    load_image, load_mask, load_scribbles, save_image, save_mask, save_superpixels,
};
use cdseg::mask::LabelMask;
use cdseg::metrics::ConfusionMatrix;
use cdseg::propagation::{full_pipeline, majority_vote, render_mask, PipelineOutput};
use cdseg::superpixels::{fh_segment, FhParams};
use cdseg::synthetic;

/// Scribble-to-mask propagation with constrained dominant sets.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment an image into FH superpixels (16-bit PNG of ids).
    Superpixels {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "lab")]
        space: ColorSpace,
        #[arg(long, default_value_t = 300.0)]
        k: f64,
        #[arg(long, default_value_t = 0.8)]
        sigma_fh: f64,
        #[arg(long, default_value_t = 20)]
        min_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propagate scribbles to a full mask.
    Propagate {
        #[arg(long)]
        image: PathBuf,
        /// Gray PNG (255 = unlabeled) or JSON stroke file.
        #[arg(long)]
        scribbles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-pixel vote agreement, 0..=255.
        #[arg(long)]
        confidence: Option<PathBuf>,
        /// Directory for per-job masks, superpixels and class confidences.
        #[arg(long)]
        diag: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// Majority vote over masks (ties go to the smaller class id).
    Vote {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        masks: Vec<PathBuf>,
    },
    /// Compare predicted masks with ground truth (files or directories
    /// matched by file name).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 21)]
        classes: usize,
        #[arg(long, default_value_t = 255)]
        ignore: u8,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Use the full grid instead of the reduced interactive one.
        #[arg(long)]
        full_grid: bool,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// Write the synthetic fixtures.
    Demo {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    spaces: Option<Vec<ColorSpace>>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<f64>>,
    /// A number or `best`.
    #[arg(long)]
    sigma_fh: Option<Param>,
    #[arg(long)]
    sigma_c: Option<Param>,
    #[arg(long)]
    sigma_t: Option<Param>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self, base: PipelineConfig) -> Result<PipelineConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?,
            None => base,
        };
        if let Some(v) = &self.spaces {
            cfg.color_spaces = v.clone();
        }
        if let Some(v) = &self.k {
            cfg.k_values = v.clone();
        }
        if let Some(v) = self.sigma_fh {
            cfg.sigma_fh = v;
        }
        if let Some(v) = self.sigma_c {
            cfg.sigma_c = v;
        }
        if let Some(v) = self.sigma_t {
            cfg.sigma_t = v;
        }
        if let Some(v) = self.classes {
            cfg.n_cl = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

type Failure = Box<dyn std::error::Error>;

/// A run that produced its output but must exit with status 2.
#[derive(Debug)]
struct Unconverged(String);

impl std::fmt::Display for Unconverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Unconverged {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is::<Unconverged>() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Superpixels {
            image,
            space,
            k,
            sigma_fh,
            min_size,
            out,
        } => {
            let rgb = load_image(&image)?;
            let params = FhParams { k, sigma_fh, min_size };
            let sp = fh_segment(&convert_color_space(&rgb, space), &params)?;
            save_superpixels(&sp, &out)?;
            println!("{} superpixels", sp.count());
        }
        Command::Propagate {
            image,
            scribbles,
            out,
            confidence,
            diag,
            overrides,
        } => {
            let cfg = overrides.resolve(PipelineConfig::default())?;
            let rgb = load_image(&image)?;
            let scr = load_scribbles(&scribbles, cfg.n_cl)?;
            let result = full_pipeline(&rgb, &scr, &cfg)?;
            save_mask(&result.mask, &out)?;
            if let Some(path) = confidence {
                let conf = LabelMask::new(result.mask.width(), result.mask.height(), result.confidence.clone())
                    .expect("sized by pipeline");
                save_mask(&conf, path)?;
            }
            if let Some(dir) = diag {
                write_diagnostics(&dir, &result)?;
            }
            for f in &result.failed {
                eprintln!("warning: dropped job {f}");
            }
            if result.unconverged() > 0 {
                return Err(Box::new(Unconverged(format!(
                    "{} constrained solve(s) hit the iteration cap; mask written to {}",
                    result.unconverged(),
                    out.display()
                ))));
            }
        }
        Command::Vote { out, masks } => {
            let loaded = masks.iter().map(load_mask).collect::<Result<Vec<_>, _>>()?;
            save_mask(&majority_vote(&loaded)?, out)?;
        }
        Command::Eval {
            pred,
            gt,
            classes,
            ignore,
        } => {
            let mut cm = ConfusionMatrix::new(classes);
            for (p, g) in mask_pairs(&pred, &gt)? {
                cm.accumulate(&load_mask(&p)?, &load_mask(&g)?, ignore)
                    .map_err(|e| format!("{}: {e}", p.display()))?;
            }
            print!("{}", cm.report()?);
        }
        Command::Serve {
            addr,
            full_grid,
            overrides,
        } => {
            let base = if full_grid {
                PipelineConfig::default()
            } else {
                PipelineConfig::interactive()
            };
            let cfg = overrides.resolve(base)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(cdseg::serve::serve(addr, cfg))?;
        }
        Command::Demo { out, seed } => {
            std::fs::create_dir_all(&out)?;
            let fixture = synthetic::three_regions(seed);
            save_image(&fixture.image, out.join("three_regions.png"))?;
            save_mask(&fixture.ground_truth, out.join("three_regions_gt.png"))?;
            let scr = fixture.scribbles(PipelineConfig::default().n_cl);
            save_mask(
                &LabelMask::new(scr.width(), scr.height(), scr.labels().to_vec()).expect("sized"),
                out.join("three_regions_scribbles.png"),
            )?;
            std::fs::write(
                out.join("three_regions_strokes.json"),
                serde_json::to_string_pretty(&fixture.strokes)?,
            )?;
            save_image(&synthetic::two_halves(64, 64, 40, 200), out.join("two_halves.png"))?;
            save_image(&synthetic::constant(32, 32, [120, 90, 60]), out.join("constant.png"))?;
            println!("fixtures written to {}", out.display());
        }
    }
    Ok(())
}

/// `(pred, gt)` pairs: two files, or files of `pred` matched by name in `gt`.
fn mask_pairs(pred: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>, Failure> {
    if pred.is_file() {
        return Ok(vec![(pred.to_path_buf(), gt.to_path_buf())]);
    }
    let mut names: Vec<_> = std::fs::read_dir(pred)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(format!("no PNG masks in {}", pred.display()).into());
    }
    names
        .into_iter()
        .map(|p| {
            let g = gt.join(p.file_name().expect("listed file"));
            if g.is_file() {
                Ok((p, g))
            } else {
                Err(format!("missing ground truth {}", g.display()).into())
            }
        })
        .collect()
}

fn write_diagnostics(dir: &Path, result: &PipelineOutput) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    let mut summary = Vec::new();
    for job in &result.jobs {
        let stem = format!("{}_k{}_s{}", job.space, job.k, job.sigma_fh);
        save_mask(&job.mask, dir.join(format!("mask_{stem}.png")))?;
        for seg in &job.segments {
            let top = seg.confidence.iter().copied().fold(0.0, f64::max);
            let per_superpixel: Vec<u8> = seg
                .confidence
                .iter()
                .map(|c| if top > 0.0 { (c / top * 255.0).round() as u8 } else { 0 })
                .collect();
            let pixels = render_mask(&job.superpixels, &per_superpixel)?;
            save_mask(&pixels, dir.join(format!("confidence_{stem}_class{}.png", seg.class_id)))?;
        }
        summary.push(json!({
            "space": job.space,
            "k": job.k,
            "sigma_fh": job.sigma_fh,
            "sigma_c": job.sigma_c,
            "sigma_t": job.sigma_t,
            "superpixels": job.assignment.labels.len(),
            "contested": job.assignment.contested,
            "flood_filled": job.assignment.flood_filled,
            "unreachable": job.assignment.unreachable,
            "unconverged": job.unconverged(),
            "skipped_classes": job.skipped_classes,
            "rounds": job.segments.iter().map(|s| (s.class_id, s.rounds)).collect::<Vec<_>>(),
        }));
    }
    let report = json!({ "sigma_fh": result.sigma_fh, "jobs": summary, "failed": result.failed });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
