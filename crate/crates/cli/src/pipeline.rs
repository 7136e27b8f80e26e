//! The protocol stages and their artifact files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steer_core::assemblage::{ml_reconstruct_with, MlOptions};
use steer_core::certification::{self, choose_x_star, uncertainty};
use steer_core::extractor::{block_extract, ExtractorParams};
use steer_core::simulator::{coincidences, raw_bits, simulate_streams, simulate_tomography, write_time_tags};
use steer_core::{Assemblage, BitString, Execution, MeasurementSet, TomographyCounts};

use crate::config::{PipelineConfig, XStar};
use crate::report::{self, RunReport};
use crate::{io_err, num_err, Failure, FailureKind};

pub const CONFIG_ECHO: &str = "config.toml";
pub const COUNTS: &str = "tomography_counts.tsv";
pub const ALICE_TAGS: &str = "alice_tags.bin";
pub const BOB_TAGS: &str = "bob_tags.bin";
pub const TRUTH_LOG: &str = "ground_truth.tsv";
pub const RAW_BITS: &str = "raw_bits.bin";
pub const ASSEMBLAGE: &str = "assemblage.txt";
pub const CERTIFICATION: &str = "certification.txt";
pub const EXTRACTION_SEED: &str = "extraction_seed.bin";
pub const EXTRACTION_PARAMS: &str = "extraction_params.txt";
pub const EXTRACTED_BITS: &str = "extracted_bits.bin";
pub const TIMINGS: &str = "timings.txt";

pub(crate) fn write_file(path: &Path, data: impl AsRef<[u8]>, stage: &'static str) -> Result<(), Failure> {
    fs::write(path, data).map_err(|e| Failure::new(FailureKind::Io, stage, format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn read_text(path: &Path, stage: &'static str) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::new(FailureKind::Io, stage, format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn read_bits(path: &Path, stage: &'static str) -> Result<BitString, Failure> {
    let data =
        fs::read(path).map_err(|e| Failure::new(FailureKind::Io, stage, format!("cannot read {}: {e}", path.display())))?;
    BitString::from_file_bytes(&data).map_err(|e| Failure::new(FailureKind::Io, stage, format!("{}: {e}", path.display())))
}

/// `key = value` lines; other lines are ignored.
pub fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub(crate) fn field<T: std::str::FromStr>(
    kv: &BTreeMap<String, String>,
    key: &str,
    file: &str,
    stage: &'static str,
) -> Result<T, Failure> {
    kv.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Failure::new(FailureKind::Io, stage, format!("{file}: missing or malformed {key}")))
}

fn remove_stale(dir: &Path, names: &[&str], stage: &'static str) -> Result<(), Failure> {
    for n in names {
        let p = dir.join(n);
        if p.exists() {
            fs::remove_file(&p).map_err(io_err(stage))?;
        }
    }
    Ok(())
}

fn measurement(cfg: &PipelineConfig, stage: &'static str) -> Result<MeasurementSet, Failure> {
    cfg.measurement.to_core().map_err(|e| Failure::new(FailureKind::Usage, stage, e))
}

fn settings_index(labels: &[String], x: &str, stage: &'static str) -> Result<usize, Failure> {
    labels
        .iter()
        .position(|l| l == x)
        .ok_or_else(|| Failure::new(FailureKind::Usage, stage, format!("setting {x} is not in the data ({labels:?})")))
}

/// Index of the certified setting under the configured policy.
pub fn x_star_index(cfg: &PipelineConfig, a: &Assemblage, stage: &'static str) -> Result<usize, Failure> {
    match cfg.x_star() {
        XStar::RngSetting => settings_index(a.labels(), &cfg.experiment.rng_setting, stage),
        XStar::Label(l) => settings_index(a.labels(), &l, stage),
        XStar::Auto => choose_x_star(a).map_err(num_err(stage)),
    }
}

/// Tomography counts, time tags of both parties, and the raw bits sifted
/// from their coincidences.
pub fn simulate(cfg: &PipelineConfig, dir: &Path, truth_log: bool) -> Result<(), Failure> {
    const STAGE: &str = "simulate";
    fs::create_dir_all(dir).map_err(io_err(STAGE))?;
    let exp = cfg.experiment.to_core();
    let m = measurement(cfg, STAGE)?;
    let counts = simulate_tomography(&exp, &m).map_err(num_err(STAGE))?;
    write_file(&dir.join(COUNTS), counts.to_tsv(), STAGE)?;

    let streams = simulate_streams(&exp, &m).map_err(num_err(STAGE))?;
    let e = &cfg.experiment;
    let header: Vec<(String, String)> = [
        ("visibility", e.visibility.to_string()),
        ("eta_alice", e.eta_alice.to_string()),
        ("eta_bob", e.eta_bob.to_string()),
        ("pair_rate", e.pair_rate.to_string()),
        ("duration_rng", e.duration_rng.to_string()),
        ("dark_rate", e.dark_rate.to_string()),
        ("rng_setting", e.rng_setting.clone()),
        ("rng_seed", e.rng_seed.to_string()),
        ("emitted_pairs", streams.emitted.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    for (name, tags) in [(ALICE_TAGS, &streams.alice), (BOB_TAGS, &streams.bob)] {
        let mut w = BufWriter::new(File::create(dir.join(name)).map_err(io_err(STAGE))?);
        write_time_tags(&mut w, &header, tags).map_err(io_err(STAGE))?;
        w.flush().map_err(io_err(STAGE))?;
    }
    if truth_log {
        write_file(&dir.join(TRUTH_LOG), streams.truth_log(), STAGE)?;
    }
    let pairs = coincidences(&streams.alice, &streams.bob, e.coincidence_window).map_err(num_err(STAGE))?;
    write_file(&dir.join(RAW_BITS), raw_bits(&pairs).to_file_bytes(), STAGE)
}

/// Maximum-likelihood assemblage from the tomography counts.
pub fn tomo(cfg: &PipelineConfig, dir: &Path) -> Result<(), Failure> {
    const STAGE: &str = "tomo";
    let counts = TomographyCounts::from_tsv(&read_text(&dir.join(COUNTS), STAGE)?).map_err(io_err(STAGE))?;
    if counts.labels() != cfg.measurement.settings.as_slice() {
        return Err(Failure::new(
            FailureKind::Usage,
            STAGE,
            format!("counts cover settings {:?}, config has {:?}", counts.labels(), cfg.measurement.settings),
        ));
    }
    let fit = ml_reconstruct_with(&counts, &MlOptions::default()).map_err(num_err(STAGE))?;
    let mut text = format!(
        "# log_likelihood = {:.12e}\n# iterations = {}\n# stationarity = {:.3e}\n",
        fit.log_likelihood, fit.iterations, fit.stationarity
    );
    text.push_str(&fit.assemblage.to_text());
    write_file(&dir.join(ASSEMBLAGE), text, STAGE)
}

/// Guessing probability, LHS value and steering functional of the
/// reconstructed assemblage, with a bootstrap error bar when enabled.
/// Fails with the certification kind when `p_guess` is 1 within tolerance;
/// the report is written either way.
pub fn certify(cfg: &PipelineConfig, dir: &Path, exec: Execution) -> Result<(), Failure> {
    const STAGE: &str = "certify";
    // Extraction outputs of an earlier certification are no longer valid.
    remove_stale(dir, &[EXTRACTED_BITS, EXTRACTION_PARAMS, EXTRACTION_SEED], STAGE)?;
    let a = Assemblage::from_text(&read_text(&dir.join(ASSEMBLAGE), STAGE)?).map_err(io_err(STAGE))?;
    let x = x_star_index(cfg, &a, STAGE)?;
    let mut result = certification::certify(&a, Some(x)).map_err(num_err(STAGE))?;
    let c = &cfg.certification;
    if c.bootstrap_resamples > 0 {
        let counts = TomographyCounts::from_tsv(&read_text(&dir.join(COUNTS), STAGE)?).map_err(io_err(STAGE))?;
        let u = uncertainty(&counts, c.bootstrap_resamples, c.bootstrap_seed, x, exec).map_err(num_err(STAGE))?;
        result.uncertainty = Some(u);
    }
    let certified = result.p_guess < 1.0 - c.p_guess_tolerance;
    let mut text = result.to_report();
    text.push_str(&format!("p_guess_tolerance = {:e}\ncertified = {certified}\n", c.p_guess_tolerance));
    write_file(&dir.join(CERTIFICATION), text, STAGE)?;
    if !certified {
        return Err(Failure::new(
            FailureKind::Certification,
            STAGE,
            format!("p_guess = {:.9} is not below 1 - {:e}; no min-entropy certified", result.p_guess, c.p_guess_tolerance),
        ));
    }
    Ok(())
}

/// The extractor seed: the configured file, or `d` bits from ChaCha8 seeded
/// with the configured integer.
fn extraction_seed(cfg: &PipelineConfig, d: usize) -> Result<(BitString, String), Failure> {
    const STAGE: &str = "extract";
    match &cfg.extraction.seed_file {
        Some(path) => {
            let seed = read_bits(path, STAGE)?;
            if seed.len() < d {
                return Err(Failure::new(
                    FailureKind::Parameters,
                    STAGE,
                    format!("seed file {} holds {} bits, the extractor needs {d}", path.display(), seed.len()),
                ));
            }
            Ok((seed.slice(0, d), format!("file {}", path.display())))
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.extraction.seed);
            let bits: Vec<bool> = (0..d).map(|_| rng.random()).collect();
            Ok((BitString::from_bools(&bits), format!("chacha8 {}", cfg.extraction.seed)))
        }
    }
}

/// Block extraction of the raw bits at the certified min-entropy. Refuses
/// with the certification kind when nothing was certified and with the
/// parameter kind when no bit can be extracted.
pub fn extract(cfg: &PipelineConfig, dir: &Path, exec: Execution) -> Result<(), Failure> {
    const STAGE: &str = "extract";
    remove_stale(dir, &[EXTRACTED_BITS, EXTRACTION_PARAMS, EXTRACTION_SEED], STAGE)?;
    let kv = parse_key_values(&read_text(&dir.join(CERTIFICATION), STAGE)?);
    let certified: bool = field(&kv, "certified", CERTIFICATION, STAGE)?;
    let h_min: f64 = field(&kv, "h_min", CERTIFICATION, STAGE)?;
    if !certified {
        return Err(Failure::new(FailureKind::Certification, STAGE, "certification failed; nothing extracted"));
    }
    let x = &cfg.extraction;
    let params = ExtractorParams::new(x.block_bits, h_min.clamp(0.0, 1.0), x.epsilon)
        .map_err(|e| Failure::new(FailureKind::Parameters, STAGE, e.to_string()))?;
    let raw = read_bits(&dir.join(RAW_BITS), STAGE)?;
    let blocks = raw.len() / x.block_bits;
    let refuse = |why: String| -> Result<(), Failure> {
        let text = format!("{}raw_bits = {}\nblocks = {blocks}\npasses = false\n", params.report(), raw.len());
        write_file(&dir.join(EXTRACTION_PARAMS), text, STAGE)?;
        Err(Failure::new(FailureKind::Parameters, STAGE, why))
    };
    if !params.passes() {
        return refuse(format!(
            "h_min = {h_min:.6} over {} bits does not cover the extraction losses (m = 0)",
            x.block_bits
        ));
    }
    if blocks == 0 {
        return refuse(format!("{} raw bits hold no full block of {} bits", raw.len(), x.block_bits));
    }
    let (seed, source) = extraction_seed(cfg, params.d)?;
    let out = block_extract(&raw, &seed, x.block_bits, params.h_min, x.epsilon, exec)
        .map_err(|e| Failure::new(FailureKind::Parameters, STAGE, e.to_string()))?;
    write_file(&dir.join(EXTRACTION_SEED), seed.to_file_bytes(), STAGE)?;
    write_file(&dir.join(EXTRACTED_BITS), out.bits.to_file_bytes(), STAGE)?;
    let text = format!("{}raw_bits = {}\nseed_source = {source}\npasses = true\n", out.report(), raw.len());
    write_file(&dir.join(EXTRACTION_PARAMS), text, STAGE)
}

/// All stages in order, then the report. Certification and parameter
/// failures still produce a report before they are returned.
pub fn run(cfg: &PipelineConfig, dir: &Path, exec: Execution) -> Result<RunReport, Failure> {
    const STAGE: &str = "run";
    fs::create_dir_all(dir).map_err(io_err(STAGE))?;
    remove_stale(dir, &[CERTIFICATION, EXTRACTED_BITS, EXTRACTION_PARAMS, EXTRACTION_SEED], STAGE)?;
    write_file(&dir.join(CONFIG_ECHO), cfg.to_toml(), STAGE)?;
    let mut timings = String::new();
    let mut timed = |name: &str, f: &mut dyn FnMut() -> Result<(), Failure>| {
        let start = Instant::now();
        let r = f();
        timings.push_str(&format!("{name} = {:.3}\n", start.elapsed().as_secs_f64()));
        r
    };
    let stages = timed("simulate", &mut || simulate(cfg, dir, false))
        .and_then(|_| timed("tomo", &mut || tomo(cfg, dir)))
        .and_then(|_| timed("certify", &mut || certify(cfg, dir, exec)))
        .and_then(|_| timed("extract", &mut || extract(cfg, dir, exec)));
    match stages {
        Ok(()) => {
            let r = report::report(dir)?.expect("run directories hold a certification report");
            write_file(&dir.join(TIMINGS), timings, STAGE)?;
            Ok(r)
        }
        Err(f) if matches!(f.kind, FailureKind::Certification | FailureKind::Parameters) => {
            report::report(dir)?;
            write_file(&dir.join(TIMINGS), timings, STAGE)?;
            Err(f)
        }
        Err(f) => Err(f),
    }
}
