//! Certification of ideal assemblages over a grid of visibilities and
//! heralding efficiencies.

use std::fmt::Write as _;
use std::path::Path;

use steer_core::assemblage::ideal_assemblage;
use steer_core::certification::certify;
use steer_core::simulator::werner_state;
use steer_core::Execution;

use crate::config::PipelineConfig;
use crate::pipeline::{self, write_file};
use crate::{io_err, num_err, Failure, FailureKind};

pub const SWEEP: &str = "sweep.tsv";
pub const HMIN_TABLE: &str = "hmin_vs_eta.tsv";
pub const BETA_TABLE: &str = "beta_vs_eta.tsv";

const HEADER: &str = "visibility\teta\tx_star\tp_guess\th_min\tmu\tbeta";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub visibility: f64,
    pub eta: f64,
    pub x_star: String,
    pub p_guess: f64,
    pub h_min: f64,
    pub mu: f64,
    pub beta: f64,
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(grid: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?} in {grid:?}"));
    let parts: Vec<&str> = grid.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (num(start)?, num(stop)?, num(step)?);
            if !(h > 0.0) || b < a {
                return Err(format!("grid {grid:?} needs start ≤ stop and a positive step"));
            }
            let n = ((b - a) / h + 1e-9).floor() as usize + 1;
            // Rounded so that 0.48 + 2·0.02 prints as 0.52.
            (0..n).map(|i| ((a + i as f64 * h) * 1e9).round() / 1e9).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("grid {grid:?} is neither start:stop:step nor a list")),
    };
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(format!("grid {grid:?} leaves [0, 1]"));
    }
    Ok(values)
}

/// One row per (V, η), visibility outermost. The certified setting follows
/// the config's policy.
pub fn sweep(cfg: &PipelineConfig, visibilities: &[f64], etas: &[f64], exec: Execution) -> Result<Vec<SweepRow>, Failure> {
    const STAGE: &str = "sweep";
    let m = cfg.measurement.to_core().map_err(|e| Failure::new(FailureKind::Usage, STAGE, e))?;
    let points: Vec<(f64, f64)> = visibilities.iter().flat_map(|&v| etas.iter().map(move |&e| (v, e))).collect();
    exec.map_slice(&points, |&(v, eta)| {
        let rho = werner_state(v).map_err(num_err(STAGE))?;
        let a = ideal_assemblage(&rho, &m.with_eta(eta).map_err(num_err(STAGE))?).map_err(num_err(STAGE))?;
        let x = pipeline::x_star_index(cfg, &a, STAGE)?;
        let r = certify(&a, Some(x)).map_err(num_err(STAGE))?;
        Ok(SweepRow { visibility: v, eta, x_star: r.x_star, p_guess: r.p_guess, h_min: r.h_min, mu: r.mu, beta: r.beta })
    })
    .into_iter()
    .collect()
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut s = format!("{HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{:.12}\t{:.12}\t{:.12e}\t{:.12e}",
            r.visibility, r.eta, r.x_star, r.p_guess, r.h_min, r.mu, r.beta
        );
    }
    s
}

pub fn read_sweep(text: &str) -> Result<Vec<SweepRow>, Failure> {
    let bad = |l: usize| Failure::new(FailureKind::Io, "report", format!("{SWEEP}: malformed line {l}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(bad(1)),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            let [v, e, x, p, h, mu, b] = f.as_slice() else { return Err(bad(i + 1)) };
            let n = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1));
            Ok(SweepRow {
                visibility: n(v)?,
                eta: n(e)?,
                x_star: x.to_string(),
                p_guess: n(p)?,
                h_min: n(h)?,
                mu: n(mu)?,
                beta: n(b)?,
            })
        })
        .collect()
}

/// Plot-ready tables with one row per grid point.
pub fn write_tables(dir: &Path, rows: &[SweepRow]) -> Result<(), Failure> {
    let mut h = String::from("visibility\teta\th_min\n");
    let mut b = String::from("visibility\teta\tbeta\tmu\n");
    for r in rows {
        let _ = writeln!(h, "{}\t{}\t{:.12}", r.visibility, r.eta, r.h_min);
        let _ = writeln!(b, "{}\t{}\t{:.12e}\t{:.12e}", r.visibility, r.eta, r.beta, r.mu);
    }
    write_file(&dir.join(HMIN_TABLE), h, "report")?;
    write_file(&dir.join(BETA_TABLE), b, "report")
}

/// Runs the sweep and writes `sweep.tsv` plus the plot tables.
pub fn run_sweep(
    cfg: &PipelineConfig,
    dir: &Path,
    visibilities: &[f64],
    etas: &[f64],
    exec: Execution,
) -> Result<Vec<SweepRow>, Failure> {
    std::fs::create_dir_all(dir).map_err(io_err("sweep"))?;
    let rows = sweep(cfg, visibilities, etas, exec)?;
    write_file(&dir.join(SWEEP), sweep_tsv(&rows), "sweep")?;
    write_tables(dir, &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = parse_grid("0.48:0.60:0.02").unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g[2], 0.52);
        assert_eq!(g[6], 0.6);
        assert_eq!(parse_grid("1, 0.9").unwrap(), vec![1.0, 0.9]);
        assert_eq!(parse_grid("0.5:1:0.5").unwrap(), vec![0.5, 1.0]);
        assert!(parse_grid("0.6:0.5:0.1").is_err());
        assert!(parse_grid("0.5:1.2:0.1").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let rows = vec![SweepRow {
            visibility: 1.0,
            eta: 0.52,
            x_star: "X".into(),
            p_guess: 0.98,
            h_min: 0.029146,
            mu: -0.001,
            beta: -0.001,
        }];
        assert_eq!(read_sweep(&sweep_tsv(&rows)).unwrap(), rows);
    }
}
