use std::fs;
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steer_cli::pipeline::{self, parse_key_values};
use steer_cli::sweep::{read_sweep, SWEEP};
use steer_core::assemblage::ideal_assemblage;
use steer_core::certification::{guessing_probability, min_entropy};
use steer_core::extractor::{block_extract, output_length};
use steer_core::simulator::werner_state;
use steer_core::{BitString, Execution, MeasurementSet};
use tempfile::TempDir;

const BASE: &str = "version = 1
[experiment]
visibility = 1.0
eta_alice = 0.6
pair_rate = 100000.0
trials_certification = 200000
duration_rng = 1.0
rng_seed = 11
[certification]
bootstrap_resamples = 0
";

fn steer(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_steer")).args(args).output().expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(config: &str, out: &Path) -> i32 {
    let (code, _, err) = steer(&["run", "-c", config, "-o", out.to_str().unwrap()]);
    assert!(code == 0 || !err.is_empty(), "failure without a message");
    code
}

fn kv(path: &Path) -> std::collections::BTreeMap<String, String> {
    parse_key_values(&fs::read_to_string(path).unwrap())
}

#[test]
fn passing_run_writes_consistent_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let out = tmp.path().join("run");
    assert_eq!(run(&cfg, &out), 0);
    let cert = kv(&out.join(pipeline::CERTIFICATION));
    let params = kv(&out.join(pipeline::EXTRACTION_PARAMS));
    let h: f64 = cert["h_min"].parse().unwrap();
    let m: usize = params["m"].parse().unwrap();
    assert_eq!(m, output_length(20000, h, 1e-6, 1.0).unwrap());
    let raw = BitString::from_file_bytes(&fs::read(out.join(pipeline::RAW_BITS)).unwrap()).unwrap();
    let bits = BitString::from_file_bytes(&fs::read(out.join(pipeline::EXTRACTED_BITS)).unwrap()).unwrap();
    assert_eq!(bits.len(), m * (raw.len() / 20000));

    // The extracted bits are a plain block extraction with the recorded seed.
    let seed = BitString::from_file_bytes(&fs::read(out.join(pipeline::EXTRACTION_SEED)).unwrap()).unwrap();
    let again = block_extract(&raw, &seed, 20000, h, 1e-6, Execution::Sequential).unwrap();
    assert_eq!(again.bits, bits);

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["pass"], true);
    assert_eq!(json["status"], "pass");
    assert_eq!(json["extraction"]["total_bits"], bits.len());
    assert_eq!(json["extraction"]["m_per_block"], m);
    assert!(out.join(pipeline::TIMINGS).exists());
    assert!(!fs::read_to_string(out.join("report.txt")).unwrap().contains("simulate ="));
}

#[test]
fn below_threshold_fails_certification() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &BASE.replace("eta_alice = 0.6", "eta_alice = 0.45"));
    let out = tmp.path().join("run");
    assert_eq!(run(&cfg, &out), 2);
    assert!(!out.join(pipeline::EXTRACTED_BITS).exists());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["pass"], false);
    assert_eq!(json["status"], "certification_fail");
    assert!(json["extraction"].is_null());
}

#[test]
fn stale_extraction_does_not_survive_a_failed_rerun() {
    let tmp = TempDir::new().unwrap();
    let good = write_config(tmp.path(), "good.toml", BASE);
    let bad = write_config(tmp.path(), "bad.toml", &BASE.replace("eta_alice = 0.6", "eta_alice = 0.45"));
    let out = tmp.path().join("run");
    assert_eq!(run(&good, &out), 0);
    assert!(out.join(pipeline::EXTRACTED_BITS).exists());
    assert_eq!(run(&bad, &out), 2);
    assert!(!out.join(pipeline::EXTRACTED_BITS).exists());
}

#[test]
fn too_short_blocks_fail_parameters() {
    let tmp = TempDir::new().unwrap();
    // h ≈ 0.15 over 400 bits is far below the 4·log₂(10⁶) + 6 bit loss.
    let cfg = write_config(tmp.path(), "c.toml", &format!("{BASE}[extraction]\nblock_bits = 400\n"));
    let out = tmp.path().join("run");
    assert_eq!(run(&cfg, &out), 3);
    assert!(!out.join(pipeline::EXTRACTED_BITS).exists());
    assert_eq!(kv(&out.join(pipeline::EXTRACTION_PARAMS))["m"], "0");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["status"], "parameter_fail");

    // Too little raw data for one block is a parameter failure as well.
    let cfg = write_config(tmp.path(), "d.toml", &BASE.replace("duration_rng = 1.0", "duration_rng = 0.1"));
    assert_eq!(run(&cfg, &tmp.path().join("short")), 3);
}

#[test]
fn stages_rerun_bit_exactly() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let out = tmp.path().join("run");
    let o = out.to_str().unwrap();
    assert_eq!(run(&cfg, &out), 0);
    let later = [pipeline::ASSEMBLAGE, pipeline::CERTIFICATION, pipeline::EXTRACTION_PARAMS, pipeline::EXTRACTED_BITS, "report.json"];
    let before: Vec<Vec<u8>> = later.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    for f in later {
        fs::remove_file(out.join(f)).unwrap();
    }
    for stage in ["tomo", "certify", "extract"] {
        assert_eq!(steer(&[stage, "-c", &cfg, "-o", o]).0, 0, "{stage}");
    }
    assert_eq!(steer(&["report", o]).0, 0);
    for (f, b) in later.iter().zip(&before) {
        assert_eq!(&fs::read(out.join(f)).unwrap(), b, "{f}");
    }
}

#[test]
fn partial_run_reports_absent_extraction() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let o = tmp.path().join("run");
    let o = o.to_str().unwrap();
    for stage in ["simulate", "tomo", "certify"] {
        assert_eq!(steer(&[stage, "-c", &cfg, "-o", o]).0, 0, "{stage}");
    }
    let (code, stdout, _) = steer(&["report", o]);
    assert_eq!(code, 0);
    assert!(stdout.contains("extraction = absent"), "{stdout}");
    assert!(stdout.contains("status = incomplete"));
    assert!(steer(&["report", tmp.path().join("missing").to_str().unwrap()]).0 == 4);
    // An empty directory has no certification report to read.
    fs::create_dir(tmp.path().join("empty")).unwrap();
    assert_eq!(steer(&["report", tmp.path().join("empty").to_str().unwrap()]).0, 4);
}

#[test]
fn seed_file_is_used_and_checked() {
    let tmp = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let long = BitString::from_bools(&(0..300_000).map(|_| rng.random::<bool>()).collect::<Vec<_>>());
    fs::write(tmp.path().join("seed.bin"), long.to_file_bytes()).unwrap();
    fs::write(tmp.path().join("short.bin"), long.slice(0, 1000).to_file_bytes()).unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &format!("{BASE}[extraction]\nseed_file = \"seed.bin\"\n"));
    let out = tmp.path().join("run");
    assert_eq!(run(&cfg, &out), 0);
    let used = BitString::from_file_bytes(&fs::read(out.join(pipeline::EXTRACTION_SEED)).unwrap()).unwrap();
    assert_eq!(used, long.slice(0, used.len()));

    let cfg = write_config(tmp.path(), "s.toml", &format!("{BASE}[extraction]\nseed_file = \"short.bin\"\n"));
    assert_eq!(run(&cfg, &tmp.path().join("short")), 3);
}

#[test]
fn seed_overrides_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run(&cfg, &a), 0);
    assert_eq!(steer(&["run", "-c", &cfg, "-o", b.to_str().unwrap(), "--extraction-seed", "99", "--sequential"]).0, 0);
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, pipeline::RAW_BITS), read(&b, pipeline::RAW_BITS));
    assert_ne!(read(&a, pipeline::EXTRACTED_BITS), read(&b, pipeline::EXTRACTED_BITS));
    let c = tmp.path().join("c");
    assert_eq!(steer(&["run", "-c", &cfg, "-o", c.to_str().unwrap(), "--rng-seed", "12"]).0, 0);
    assert_ne!(read(&a, pipeline::RAW_BITS), read(&c, pipeline::RAW_BITS));
}

#[test]
fn usage_and_io_errors() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(steer(&["frobnicate"]).0, 1);
    assert_eq!(steer(&["run"]).0, 1);
    assert_eq!(steer(&["run", "-c", "/nonexistent.toml"]).0, 1);
    assert_eq!(steer(&["--help"]).0, 0);
    let bad = write_config(tmp.path(), "bad.toml", "version = 1\n[experiment]\neta_alice = 2.0\n");
    let (code, _, err) = steer(&["run", "-c", &bad, "-o", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("eta_alice"), "{err}");

    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let out = tmp.path().join("run");
    let o = out.to_str().unwrap();
    assert_eq!(steer(&["tomo", "-c", &cfg, "-o", o]).0, 4);
    assert_eq!(steer(&["simulate", "-c", &cfg, "-o", o, "--truth-log"]).0, 0);
    assert!(out.join(pipeline::TRUTH_LOG).exists());
    fs::write(out.join(pipeline::COUNTS), "x\ta\tb\tbeta\tcount\nX\t0\tQ\t0\t1\n").unwrap();
    assert_eq!(steer(&["tomo", "-c", &cfg, "-o", o]).0, 4);
    assert_eq!(steer(&["sweep", "-o", o, "--eta", "0.5:0.4:0.1"]).0, 1);
}

#[test]
fn eta_sweep_shows_threshold() {
    let tmp = TempDir::new().unwrap();
    let o = tmp.path().join("sweep");
    let (code, _, err) = steer(&["sweep", "-o", o.to_str().unwrap(), "--eta", "0.48:0.60:0.02", "--visibility", "1"]);
    assert_eq!(code, 0, "{err}");
    let rows = read_sweep(&fs::read_to_string(o.join(SWEEP)).unwrap()).unwrap();
    assert_eq!(rows.len(), 7);
    for r in &rows {
        if r.eta <= 0.5 {
            assert!(r.h_min < 1e-6, "{r:?}");
        } else {
            assert!(r.h_min > 0.0, "{r:?}");
        }
    }
    assert!(rows.windows(2).filter(|w| w[0].eta >= 0.5).all(|w| w[1].h_min > w[0].h_min));
    for table in ["hmin_vs_eta.tsv", "beta_vs_eta.tsv"] {
        assert_eq!(fs::read_to_string(o.join(table)).unwrap().lines().count(), 8, "{table}");
    }
    // The report regenerates the tables of a sweep-only directory.
    fs::remove_file(o.join("hmin_vs_eta.tsv")).unwrap();
    assert_eq!(steer(&["report", o.to_str().unwrap()]).0, 0);
    assert!(o.join("hmin_vs_eta.tsv").exists());
}

#[test]
fn end_to_end_singlet_matches_asymptotic_value() {
    let tmp = TempDir::new().unwrap();
    let text = BASE
        .replace("eta_alice = 0.6", "eta_alice = 0.543")
        .replace("trials_certification = 200000", "trials_certification = 1000000")
        .replace("bootstrap_resamples = 0", "bootstrap_resamples = 100");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("run");
    assert_eq!(run(&cfg, &out), 0);
    let cert = kv(&out.join(pipeline::CERTIFICATION));
    let h: f64 = cert["h_min"].parse().unwrap();
    let sd: f64 = cert["h_min_bootstrap_std"].parse().unwrap();
    let m = MeasurementSet::standard(0.543).unwrap();
    let ideal = ideal_assemblage(&werner_state(1.0).unwrap(), &m).unwrap();
    let h0 = min_entropy(guessing_probability(&ideal, 0).unwrap().p_guess).unwrap();
    assert!((h - h0).abs() <= 3.0 * sd, "h {h} asymptotic {h0} std {sd}");
}
