use std::path::Path;
use std::process::Command;

use segedit_core::fixtures;
use segedit_core::pipeline::{PipelineConfig, StepStatus};
use segedit_core::ImageBuffer;
use segedit_service::cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_SKIPPED};
use segedit_service::store::read_session_dir;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn segedit(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("segedit").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn write_png(dir: &Path, name: &str, img: &ImageBuffer) -> String {
    let p = dir.join(name);
    std::fs::write(&p, img.to_png().unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn write_config(dir: &Path, cfg: &PipelineConfig) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string(cfg).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn exact() -> PipelineConfig {
    PipelineConfig {
        dilation_radius: 0,
        feather_radius: 0,
        ..PipelineConfig::default()
    }
}

#[test]
fn edit_paints_the_disk_blue() {
    let dir = tempfile::tempdir().unwrap();
    let (img, disk) = fixtures::red_disk();
    let input = write_png(dir.path(), "in.png", &img);
    let cfg = write_config(dir.path(), &exact());
    let out = dir.path().join("out.png");
    let o = segedit(&[
        "edit",
        "--image",
        &input,
        "--script",
        "replace red circle with blue",
        "--stack",
        "reference",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("step 1: applied"));
    let result = ImageBuffer::from_png(&std::fs::read(&out).unwrap()).unwrap();
    for y in 0..64 {
        for x in 0..64 {
            let want = if disk.contains(x, y) { [0, 0, 255] } else { img.pixel(x, y) };
            assert_eq!(result.pixel(x, y), want);
        }
    }
    let report = read_session_dir(&dir.path().join("out.steps")).unwrap();
    assert_eq!(report.session.steps.len(), 1);
    assert_eq!(report.session.current_image(), &result);
    assert!(dir.path().join("out.steps/step-0001.png").exists());
}

#[test]
fn default_config_still_covers_the_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (img, disk) = fixtures::red_disk();
    let input = write_png(dir.path(), "in.png", &img);
    let out = dir.path().join("out.png");
    let o = segedit(&["edit", "--image", &input, "--script", "replace red with blue", "--out", out.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let result = ImageBuffer::from_png(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(result.pixel(disk.cx as u32, disk.cy as u32), [0, 0, 255]);
    assert_eq!(result.pixel(0, 0), img.pixel(0, 0));
}

#[test]
fn syntax_error_reports_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = fixtures::red_disk();
    let input = write_png(dir.path(), "in.png", &img);
    let out = dir.path().join("out.png");
    let o = segedit(&["edit", "--image", &input, "--script", "replace X with", "--out", out.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_FAILURE);
    assert!(o.stderr.contains("syntax error"), "{}", o.stderr);
    assert!(o.stderr.contains("column 15"), "{}", o.stderr);
    assert!(!out.exists());
}

#[test]
fn skipped_step_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = fixtures::two_disks();
    let input = write_png(dir.path(), "in.png", &img);
    let cfg = write_config(
        dir.path(),
        &PipelineConfig {
            threshold: 0.5,
            temperature: 0.1,
            ..exact()
        },
    );
    let script = dir.path().join("script.txt");
    std::fs::write(&script, "replace red circle with blue;\nreplace orange thing with cyan;\n").unwrap();
    let steps = dir.path().join("steps");
    let out = dir.path().join("out.png");
    let o = segedit(&[
        "edit",
        "--image",
        &input,
        "--script-file",
        script.to_str().unwrap(),
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--steps-dir",
        steps.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert_eq!(o.code, EXIT_SKIPPED, "{}", o.stderr);
    let report = read_session_dir(&steps).unwrap();
    assert_eq!(report.session.steps[1].status, StepStatus::SkippedNoMatch);
    assert_eq!(report.session.steps[0].seed, 11);
    let json = std::fs::read_to_string(steps.join("session.json")).unwrap();
    assert!(json.contains("\"kind\": \"skipped_no_match\""));
    assert!(json.contains("\"schema\": 1"));
}

#[test]
fn failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = fixtures::two_disks();
    let input = write_png(dir.path(), "in.png", &img);
    let cfg = write_config(
        dir.path(),
        &PipelineConfig {
            threshold: 0.5,
            temperature: 0.1,
            on_no_match: segedit_core::pipeline::NoMatchPolicy::Error,
            ..exact()
        },
    );
    let out = dir.path().join("out.png");
    let o = segedit(&[
        "edit",
        "--image",
        &input,
        "--script",
        "replace orange with blue",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_FAILURE);
    assert!(o.stderr.contains("stage rank"), "{}", o.stderr);

    let o = segedit(&["edit", "--image", &input, "--script", "replace a with b", "--stack", "nope", "--out", out.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_FAILURE);
    assert!(o.stderr.contains("unknown stack"));

    let o = segedit(&["edit", "--image", "/no/such.png", "--script", "replace a with b", "--out", out.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_FAILURE);

    let o = segedit(&["edit", "--image", &input, "--out", out.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_FAILURE);
    let o = segedit(&["edit", "--image", &input, "--script", "x", "--script-file", "y", "--out", "z"]);
    assert_eq!(o.code, EXIT_FAILURE);
    assert_eq!(segedit(&["--help"]).code, EXIT_OK);
}

#[test]
fn registry_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = fixtures::red_disk();
    let input = write_png(dir.path(), "in.png", &img);
    let registry = dir.path().join("registry.json");
    std::fs::write(
        &registry,
        r#"[{"stack_id": "coarse", "segmenter": {"kind": "reference", "quant_levels": 2}, "scorer": {"kind": "reference"}, "inpainter": {"kind": "reference"}}]"#,
    )
    .unwrap();
    let out = dir.path().join("out.png");
    let status = Command::new(env!("CARGO_BIN_EXE_segedit"))
        .args(["edit", "--image", &input, "--script", "replace red with green", "--stack", "coarse"])
        .arg("--out")
        .arg(&out)
        .env("SEGEDIT_REGISTRY", &registry)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let result = ImageBuffer::from_png(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(result.pixel(32, 32), [0, 255, 0]);

    let status = Command::new(env!("CARGO_BIN_EXE_segedit"))
        .args(["edit", "--image", &input, "--script", "replace red with"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
}
