use std::path::Path;
use std::process::{Command, Output};

fn cgc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgc"))
        .current_dir(dir)
        .env_remove("COLORGUIDE_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn model_path() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/demo-mixture.toml").to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

fn calibrate(dir: &Path) -> String {
    let o = cgc(dir, &["calibrate", "--model", &model_path(), "--seed", "1", "-n", "300", "--out", "profile.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    "profile.csv".into()
}

#[test]
fn sample_writes_images_csv_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let o = cgc(dir.path(), &["sample", "--mode", "none", "-n", "4", "--seed", "3", "--out", "s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("s");
    let pngs: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .collect();
    assert_eq!(pngs.len(), 4);
    for p in &pngs {
        let mut m = p.path().into_os_string();
        m.push(".manifest.json");
        let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(m).unwrap()).unwrap();
        assert_eq!(manifest["command"], "sample");
    }
    assert_eq!(csv_column(&out.join("sample_none_3.csv"), "seed"), vec![3.0, 4.0, 5.0, 6.0]);
}

#[test]
fn fine_guidance_beats_unguided_on_the_same_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let profile = calibrate(dir.path());
    let color = dir.path().join("target.png");
    // any image of the right size works as a color target
    let o = cgc(dir.path(), &["encode", "--seed", "9", "--out", "ref.cgc"]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::rename(dir.path().join("ref.png"), &color).unwrap();
    let mut mse = Vec::new();
    for mode in ["none", "fine_pixel"] {
        let o = cgc(
            dir.path(),
            &["sample", "--mode", mode, "--color", "target.png", "--profile", &profile, "-n", "6", "--seed", "20", "--out", "s"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let col = csv_column(&dir.path().join(format!("s/sample_{mode}_20.csv")), "color_mse");
        mse.push(col.iter().sum::<f64>() / col.len() as f64);
    }
    assert!(mse[1] < mse[0], "{mse:?}");
}

#[test]
fn missing_profile_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = cgc(dir.path(), &["sample", "--mode", "fine_pixel", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--profile"));
}

#[test]
fn calibration_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    calibrate(dir.path());
    let first = std::fs::read(dir.path().join("profile.csv")).unwrap();
    calibrate(dir.path());
    assert_eq!(std::fs::read(dir.path().join("profile.csv")).unwrap(), first);
    let text = String::from_utf8(first).unwrap();
    let p = colorguide::calibration::CalibrationProfile::from_csv(&text).unwrap();
    assert!(p.a_bar.abs() <= 0.02 && (p.b_bar - 1.0).abs() <= 0.02);
    assert!(dir.path().join("profile.csv.manifest.json").exists());
}

#[test]
fn compare_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let profile = calibrate(dir.path());
    let o = cgc(dir.path(), &["compare", "--profile", &profile, "-n", "1", "--seed", "4", "--out", "c"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = dir.path().join("c/compare_summary_4.csv");
    assert_eq!(csv_column(&summary, "color_mse_std"), vec![0.0; 4]);
    assert!(dir.path().join("c/compare_fine_pixel_4.csv").exists());

    let o = cgc(dir.path(), &["compare", "--mode", "fine_pixel,sharpen", "-n", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn schedule_plot_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let profile = calibrate(dir.path());
    let o = cgc(dir.path(), &["schedule-plot", "--profile", &profile, "--out", "curve.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("curve.csv");
    assert_eq!(csv_column(&path, "t").len(), 50);
    let fine = csv_column(&path, "fine_pixel");
    let max = fine.iter().cloned().fold(0.0, f64::max);
    assert!(fine.iter().all(|v| *v >= 0.1 * max));
    let uni = csv_column(&path, "universal");
    assert!(uni[0] < 0.05 && uni[0] > 0.0);
}

#[test]
fn encode_decode_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let profile = calibrate(dir.path());
    let o = cgc(dir.path(), &["encode", "--m", "16", "--bc", "5", "--bs", "1", "--seed", "2", "--out", "img.cgc"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("rate_bits=2688"));
    assert_eq!(std::fs::metadata(dir.path().join("img.cgc")).unwrap().len(), 356);

    let o = cgc(dir.path(), &["decode", "img.cgc", "--profile", &profile, "--seed", "1", "--out", "dec"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_column(&dir.path().join("dec/img_metrics.csv"), "rate_bits"), vec![2688.0]);
    assert!(dir.path().join("dec/img_decoded.png").exists());

    let bytes = std::fs::read(dir.path().join("img.cgc")).unwrap();
    std::fs::write(dir.path().join("cut.cgc"), &bytes[..100]).unwrap();
    let o = cgc(dir.path(), &["decode", "cut.cgc", "--profile", &profile]);
    assert_eq!(o.status.code(), Some(4));
    let o = cgc(dir.path(), &["decode", "absent.cgc", "--profile", &profile]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn entropy_seed_is_recorded_and_env_sets_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cgc"))
        .current_dir(dir.path())
        .env("COLORGUIDE_OUT", dir.path().join("envout"))
        .args(["sample", "-n", "1"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_dir(dir.path().join("envout"))
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().ends_with(".csv.manifest.json"))
        .unwrap();
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(manifest.path()).unwrap()).unwrap();
    assert_eq!(m["seeds"].as_array().unwrap().len(), 1);
    assert!(m["seeds"][0].is_u64());
}
