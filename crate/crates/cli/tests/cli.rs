use std::path::Path;
use std::process::{Command, Output};

fn slowlight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowlight")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn delay_writes_csv_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("delay.csv");
    let o = slowlight(&["delay", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# delay_s: "));
    assert!(text.contains("modulation_hz,phase_with_rad,phase_without_rad,phase_shift_rad\r\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn invalid_value_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"medium": {"length_mm": -1}}"#);
    let o = slowlight(&["--config", &cfg, "calibrate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("medium.length_mm"), "{}", stderr(&o));
}

#[test]
fn syntax_error_and_unknown_field_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let broken = write(dir.path(), "broken.json", "{\"fields\": ");
    assert_eq!(slowlight(&["--config", &broken, "delay"]).status.code(), Some(2));
    let unknown = write(dir.path(), "unknown.json", r#"{"fields": {"coupling_power": 3}}"#);
    let o = slowlight(&["--config", &unknown, "delay"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coupling_power"), "{}", stderr(&o));
}

#[test]
fn zero_threads_is_a_usage_error() {
    assert_eq!(slowlight(&["--threads", "0", "delay"]).status.code(), Some(2));
}

#[test]
fn unreachable_calibration_target_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "wide.json", r#"{"calibration": {"eit_fwhm_at_ref": 1e9}}"#);
    let o = slowlight(&["--config", &cfg, "calibrate"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("bracket"), "{}", stderr(&o));
}

#[test]
fn io_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    assert_eq!(slowlight(&["--config", missing.to_str().unwrap(), "delay"]).status.code(), Some(4));
    let unwritable = dir.path().join("no-such-dir").join("out.csv");
    assert_eq!(slowlight(&["--out", unwritable.to_str().unwrap(), "delay"]).status.code(), Some(4));
}

#[test]
fn empty_config_equals_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.json", "{}");
    let with = slowlight(&["--config", &cfg, "calibrate"]);
    let without = slowlight(&["calibrate"]);
    assert_eq!(with.status.code(), Some(0));
    assert_eq!(with.stdout, without.stdout);
}

#[test]
fn scan_is_byte_identical_across_runs_and_threads() {
    let one = slowlight(&["--threads", "1", "intensity-scan"]);
    let again = slowlight(&["--threads", "1", "intensity-scan"]);
    let four = slowlight(&["--threads", "4", "intensity-scan"]);
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    assert_eq!(one.stdout, again.stdout);
    assert_eq!(one.stdout, four.stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    assert!(text.contains("intensity_w_cm2,eit_amplitude,eit_fwhm_hz,group_delay_s,group_velocity_m_s\r\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 14);
}

#[test]
fn phase_resolved_spectrum_accepts_a_negative_reference() {
    let o = slowlight(&["spectrum", "--phase-resolved", "--phase-ref", "-0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("# phase_ref_rad: -5e-1\r\n"));
    assert!(text.contains("# separation_rad: "));
}

#[test]
fn plain_spectrum_lists_both_couplings() {
    let o = slowlight(&["spectrum"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("detuning_hz,absorption,absorption_coupling_off,transmission\r\n"));
    assert!(text.contains("# coupling_intensity_w_cm2: 1.05e2\r\n"));
}
