//! Run summaries rendered from the artifacts of a run directory.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::pipeline::{self, field, parse_key_values, read_bits, read_text, write_file};
use crate::sweep;
use crate::{Failure, FailureKind};

pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationSummary {
    pub x_star: String,
    pub p_guess: f64,
    pub h_min: f64,
    pub mu: f64,
    pub beta: f64,
    pub h_min_bootstrap_std: Option<f64>,
    pub bootstrap_resamples: Option<usize>,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionSummary {
    pub block_bits: usize,
    pub epsilon: f64,
    pub s: u32,
    pub t: usize,
    /// Seed length in bits, shared by all blocks.
    pub d: usize,
    pub m_per_block: usize,
    pub blocks: usize,
    pub total_bits: usize,
    pub discarded_raw_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    /// `pass`, `certification_fail`, `parameter_fail` or `incomplete`.
    pub status: String,
    /// Min-entropy certified and at least one bit extracted.
    pub pass: bool,
    pub raw_bits: Option<usize>,
    pub certification: CertificationSummary,
    /// Absent when extraction did not run or was refused.
    pub extraction: Option<ExtractionSummary>,
    pub artifacts: Vec<String>,
    /// The configuration echo, when the directory holds one.
    pub config: Option<String>,
}

fn certification_summary(dir: &Path) -> Result<CertificationSummary, Failure> {
    const STAGE: &str = "report";
    let file = pipeline::CERTIFICATION;
    let kv = parse_key_values(&read_text(&dir.join(file), STAGE)?);
    Ok(CertificationSummary {
        x_star: field(&kv, "x_star", file, STAGE)?,
        p_guess: field(&kv, "p_guess", file, STAGE)?,
        h_min: field(&kv, "h_min", file, STAGE)?,
        mu: field(&kv, "mu", file, STAGE)?,
        beta: field(&kv, "beta", file, STAGE)?,
        h_min_bootstrap_std: kv.get("h_min_bootstrap_std").and_then(|v| v.parse().ok()),
        bootstrap_resamples: kv.get("bootstrap_resamples").and_then(|v| v.parse().ok()),
        certified: field(&kv, "certified", file, STAGE)?,
    })
}

fn extraction_summary(dir: &Path) -> Result<Option<ExtractionSummary>, Failure> {
    const STAGE: &str = "report";
    let file = pipeline::EXTRACTION_PARAMS;
    let (params, bits) = (dir.join(file), dir.join(pipeline::EXTRACTED_BITS));
    if !params.exists() || !bits.exists() {
        return Ok(None);
    }
    let kv = parse_key_values(&read_text(&params, STAGE)?);
    let total: usize = field(&kv, "total_output_bits", file, STAGE)?;
    let found = read_bits(&bits, STAGE)?.len();
    if found != total {
        return Err(Failure::new(
            FailureKind::Io,
            STAGE,
            format!("{} holds {found} bits, {file} reports {total}", pipeline::EXTRACTED_BITS),
        ));
    }
    Ok(Some(ExtractionSummary {
        block_bits: field(&kv, "n", file, STAGE)?,
        epsilon: field(&kv, "epsilon", file, STAGE)?,
        s: field(&kv, "s", file, STAGE)?,
        t: field(&kv, "t", file, STAGE)?,
        d: field(&kv, "d", file, STAGE)?,
        m_per_block: field(&kv, "m", file, STAGE)?,
        blocks: field(&kv, "blocks", file, STAGE)?,
        total_bits: total,
        discarded_raw_bits: field(&kv, "discarded_raw_bits", file, STAGE)?,
    }))
}

const KNOWN_ARTIFACTS: [&str; 14] = [
    pipeline::CONFIG_ECHO,
    pipeline::COUNTS,
    pipeline::ALICE_TAGS,
    pipeline::BOB_TAGS,
    pipeline::TRUTH_LOG,
    pipeline::RAW_BITS,
    pipeline::ASSEMBLAGE,
    pipeline::CERTIFICATION,
    pipeline::EXTRACTION_SEED,
    pipeline::EXTRACTION_PARAMS,
    pipeline::EXTRACTED_BITS,
    sweep::SWEEP,
    sweep::HMIN_TABLE,
    sweep::BETA_TABLE,
];

impl RunReport {
    /// Reads a completed or partial run directory. Only the certification
    /// report is required.
    pub fn from_dir(dir: &Path) -> Result<RunReport, Failure> {
        const STAGE: &str = "report";
        let certification = certification_summary(dir)?;
        let extraction = extraction_summary(dir)?;
        let raw = dir.join(pipeline::RAW_BITS);
        let raw_bits = if raw.exists() { Some(read_bits(&raw, STAGE)?.len()) } else { None };
        let echo = dir.join(pipeline::CONFIG_ECHO);
        let config = if echo.exists() { Some(read_text(&echo, STAGE)?) } else { None };
        let refused = dir.join(pipeline::EXTRACTION_PARAMS).exists() && extraction.is_none();
        let pass = certification.certified && extraction.as_ref().is_some_and(|e| e.total_bits > 0);
        let status = if pass {
            "pass"
        } else if !certification.certified {
            "certification_fail"
        } else if refused {
            "parameter_fail"
        } else {
            "incomplete"
        };
        let mut artifacts: Vec<String> =
            KNOWN_ARTIFACTS.iter().filter(|a| dir.join(a).exists()).map(|a| a.to_string()).collect();
        artifacts.extend([REPORT_TEXT.to_string(), REPORT_JSON.to_string()]);
        Ok(RunReport { status: status.into(), pass, raw_bits, certification, extraction, artifacts, config })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.certification;
        let _ = writeln!(s, "status = {}", self.status);
        let _ = writeln!(s, "pass = {}", self.pass);
        let _ = writeln!(s, "\n[certification]");
        let _ = writeln!(s, "x_star = {}", c.x_star);
        let _ = writeln!(s, "p_guess = {:.9}", c.p_guess);
        let _ = writeln!(s, "h_min = {:.9}", c.h_min);
        match (c.h_min_bootstrap_std, c.bootstrap_resamples) {
            (Some(sd), Some(n)) => {
                let _ = writeln!(s, "h_min_std = {sd:.9} ({n} bootstrap resamples)");
            }
            _ => {
                let _ = writeln!(s, "h_min_std = none");
            }
        }
        let _ = writeln!(s, "mu = {:.6e}", c.mu);
        let _ = writeln!(s, "beta = {:.6e}", c.beta);
        let _ = writeln!(s, "certified = {}", c.certified);
        let _ = writeln!(s, "\n[extraction]");
        match self.raw_bits {
            Some(n) => {
                let _ = writeln!(s, "raw_bits = {n}");
            }
            None => {
                let _ = writeln!(s, "raw_bits = absent");
            }
        }
        match &self.extraction {
            Some(e) => {
                let _ = writeln!(s, "block_bits = {}", e.block_bits);
                let _ = writeln!(s, "epsilon = {:e}", e.epsilon);
                let _ = writeln!(s, "s = {}\nt = {}\nseed_bits = {}", e.s, e.t, e.d);
                let _ = writeln!(s, "m_per_block = {}", e.m_per_block);
                let _ = writeln!(s, "blocks = {}", e.blocks);
                let _ = writeln!(s, "total_bits = {}", e.total_bits);
                let _ = writeln!(s, "discarded_raw_bits = {}", e.discarded_raw_bits);
            }
            None => {
                let _ = writeln!(s, "extraction = absent");
            }
        }
        let _ = writeln!(s, "\n[artifacts]");
        for a in &self.artifacts {
            let _ = writeln!(s, "{a}");
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut j = serde_json::to_string_pretty(self).expect("report serializes");
        j.push('\n');
        j
    }
}

/// Writes `report.txt` and `report.json`, and the plot tables when the
/// directory holds a sweep. A sweep-only directory yields `None`.
pub fn report(dir: &Path) -> Result<Option<RunReport>, Failure> {
    const STAGE: &str = "report";
    if !dir.is_dir() {
        return Err(Failure::new(FailureKind::Io, STAGE, format!("{} is not a directory", dir.display())));
    }
    let sweep_file = dir.join(sweep::SWEEP);
    if sweep_file.exists() {
        let rows = sweep::read_sweep(&read_text(&sweep_file, STAGE)?)?;
        sweep::write_tables(dir, &rows)?;
        if !dir.join(pipeline::CERTIFICATION).exists() {
            return Ok(None);
        }
    }
    let r = RunReport::from_dir(dir)?;
    write_file(&dir.join(REPORT_TEXT), r.to_text(), STAGE)?;
    write_file(&dir.join(REPORT_JSON), r.to_json(), STAGE)?;
    Ok(Some(r))
}
