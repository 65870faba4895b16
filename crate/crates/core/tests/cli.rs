use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cdseg::io::{load_mask, load_superpixels};

fn cdseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cdseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn demo() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures");
    ok(&["demo", "--out", s(&fixtures)]);
    (dir, fixtures)
}

fn metric(report: &str, name: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(name)?.trim().parse().ok())
        .unwrap_or_else(|| panic!("{name} missing from {report}"))
}

#[test]
fn demo_writes_fixtures() {
    let (_dir, fx) = demo();
    for name in [
        "three_regions.png",
        "three_regions_gt.png",
        "three_regions_scribbles.png",
        "three_regions_strokes.json",
        "two_halves.png",
        "constant.png",
    ] {
        assert!(fx.join(name).is_file(), "{name}");
    }
}

#[test]
fn propagate_is_reproducible_and_evaluates_well() {
    let (dir, fx) = demo();
    let image = fx.join("three_regions.png");
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    let conf = dir.path().join("conf.png");
    let diag = dir.path().join("diag");
    ok(&[
        "propagate", "--image", s(&image),
        "--scribbles", s(&fx.join("three_regions_scribbles.png")),
        "--out", s(&a), "--confidence", s(&conf), "--diag", s(&diag),
    ]);
    ok(&[
        "propagate", "--image", s(&image),
        "--scribbles", s(&fx.join("three_regions_strokes.json")),
        "--out", s(&b),
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(load_mask(&conf).unwrap().dims(), (96, 96));

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(diag.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["jobs"].as_array().unwrap().len(), 20);
    assert!(diag.join("mask_lab_k250_s0.8.png").is_file());

    let report = ok(&["eval", "--pred", s(&a), "--gt", s(&fx.join("three_regions_gt.png"))]);
    assert!(metric(&report, "pixel_accuracy") >= 0.99);
    assert!(metric(&report, "mean_iou") >= 0.97);
}

#[test]
fn eval_matches_directories_by_name() {
    let (dir, fx) = demo();
    let pred = dir.path().join("pred");
    let gt = dir.path().join("gt");
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    for name in ["x.png", "y.png"] {
        std::fs::copy(fx.join("three_regions_gt.png"), pred.join(name)).unwrap();
        std::fs::copy(fx.join("three_regions_gt.png"), gt.join(name)).unwrap();
    }
    let report = ok(&["eval", "--pred", s(&pred), "--gt", s(&gt), "--classes", "3"]);
    assert_eq!(metric(&report, "pixel_accuracy"), 1.0);
    assert_eq!(metric(&report, "mean_iou"), 1.0);

    std::fs::copy(fx.join("three_regions_gt.png"), pred.join("z.png")).unwrap();
    let out = cdseg(&["eval", "--pred", s(&pred), "--gt", s(&gt)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("z.png"));
}

#[test]
fn vote_takes_the_majority() {
    let dir = tempfile::tempdir().unwrap();
    let masks: Vec<PathBuf> = [[1u8, 2, 3, 3], [1, 5, 4, 3], [2, 5, 4, 4]]
        .iter()
        .enumerate()
        .map(|(i, labels)| {
            let path = dir.path().join(format!("m{i}.png"));
            let mask = cdseg::mask::LabelMask::new(2, 2, labels.to_vec()).unwrap();
            cdseg::io::save_mask(&mask, &path).unwrap();
            path
        })
        .collect();
    let out = dir.path().join("vote.png");
    ok(&["vote", "--out", s(&out), s(&masks[0]), s(&masks[1]), s(&masks[2])]);
    assert_eq!(load_mask(&out).unwrap().labels(), &[1, 5, 4, 3]);
}

#[test]
fn superpixels_subcommand_writes_ids() {
    let (dir, fx) = demo();
    let out = dir.path().join("sp.png");
    let stdout = ok(&[
        "superpixels", "--image", s(&fx.join("two_halves.png")),
        "--space", "intensity", "--sigma-fh", "0", "--out", s(&out),
    ]);
    assert_eq!(stdout.trim(), "2 superpixels");
    let sp = load_superpixels(&out).unwrap();
    assert_eq!(sp.count(), 2);
    assert_ne!(sp.label(31, 10), sp.label(32, 10));
}

#[test]
fn unconverged_solves_exit_with_two() {
    let (dir, fx) = demo();
    let config = dir.path().join("cfg.toml");
    std::fs::write(&config, "max_iterations = 1\ncolor_spaces = [\"lab\"]\nk_values = [250.0]\n").unwrap();
    let out_mask = dir.path().join("mask.png");
    let out = cdseg(&[
        "propagate", "--image", s(&fx.join("three_regions.png")),
        "--scribbles", s(&fx.join("three_regions_strokes.json")),
        "--out", s(&out_mask), "--config", s(&config),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_mask.is_file(), "the mask is still written");
}

#[test]
fn bad_inputs_exit_with_one() {
    let (dir, fx) = demo();
    let image = fx.join("three_regions.png");
    let out = dir.path().join("o.png");
    let missing = cdseg(&["propagate", "--image", "/no/such.png", "--scribbles", s(&image), "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(1));

    let rgb_scribbles = cdseg(&["propagate", "--image", s(&image), "--scribbles", s(&image), "--out", s(&out)]);
    assert_eq!(rgb_scribbles.status.code(), Some(1));

    let bad_config = dir.path().join("bad.toml");
    std::fs::write(&bad_config, "no_such_key = 3\n").unwrap();
    let strokes = fx.join("three_regions_strokes.json");
    let rejected = cdseg(&[
        "propagate", "--image", s(&image), "--scribbles", s(&strokes),
        "--out", s(&out), "--config", s(&bad_config),
    ]);
    assert_eq!(rejected.status.code(), Some(1));
    assert!(!out.exists());

    let few_classes = cdseg(&[
        "propagate", "--image", s(&image), "--scribbles", s(&strokes),
        "--out", s(&out), "--classes", "2",
    ]);
    assert_eq!(few_classes.status.code(), Some(1));
}

#[test]
fn flags_override_the_config_file() {
    let (dir, fx) = demo();
    let config = dir.path().join("cfg.toml");
    std::fs::write(&config, "color_spaces = [\"intensity\"]\nk_values = [250.0]\n").unwrap();
    let diag = dir.path().join("diag");
    ok(&[
        "propagate", "--image", s(&fx.join("three_regions.png")),
        "--scribbles", s(&fx.join("three_regions_strokes.json")),
        "--out", s(&dir.path().join("m.png")), "--config", s(&config),
        "--spaces", "lab,rgi", "--sigma-fh", "0.8", "--diag", s(&diag),
    ]);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(diag.join("summary.json")).unwrap()).unwrap();
    let spaces: Vec<&str> = summary["jobs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|j| j["space"].as_str().unwrap())
        .collect();
    assert_eq!(spaces, ["lab", "rgi"]);
}
