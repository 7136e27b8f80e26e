//! Primal-dual interior-point solver for small semidefinite programs.
//!
//! Problems are stated over Hermitian (or real-symmetric) PSD blocks plus
//! optional free scalar variables:
//!
//! ```text
//!   max/min  Σ_i Tr(C_i X_i) + Σ_k c_k u_k
//!   s.t.     Σ_i Tr(A_ji X_i) + Σ_k f_jk u_k = b_j     for every row j
//!            X_i ⪰ 0,  u_k free
//! ```
//!
//! Hermitian blocks are solved through their real-symmetric embedding of twice
//! the dimension. Each step uses the HKM search direction with a Mehrotra
//! predictor-corrector; redundant equality rows are removed beforehand by
//! Gaussian elimination with largest-pivot selection. When the main iteration
//! does not converge, a Phase-I problem with explicit slack variables decides
//! between infeasibility, unboundedness, and numerical failure.
//!
//! Dual multipliers `y` are reported so that, for maximization, the dual is
//! `min bᵀy s.t. Σ_j y_j A_ji − C_i ⪰ 0, Σ_j y_j f_jk = c_k`, and for
//! minimization `max bᵀy s.t. C_i − Σ_j y_j A_ji ⪰ 0, Σ_j y_j f_jk = c_k`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::{self, ComplexMatrix, RealMatrix, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("cannot parse problem text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Hermitian,
    RealSymmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub label: String,
    pub dim: usize,
    pub kind: BlockKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeVar {
    pub label: String,
    pub objective: f64,
}

/// One affine equality `Σ Tr(A_i X_i) + Σ f_k u_k = rhs`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Constraint {
    pub terms: Vec<(usize, ComplexMatrix)>,
    pub free_terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(rhs: f64) -> Self {
        Self { rhs, ..Default::default() }
    }

    pub fn term(mut self, block: usize, coeff: ComplexMatrix) -> Self {
        self.terms.push((block, coeff));
        self
    }

    pub fn free_term(mut self, var: usize, coeff: f64) -> Self {
        self.free_terms.push((var, coeff));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub sense: Sense,
    pub blocks: Vec<Block>,
    pub free_vars: Vec<FreeVar>,
    /// Objective coefficient per block (`None` means zero).
    pub objective: Vec<Option<ComplexMatrix>>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        Self { sense, blocks: Vec::new(), free_vars: Vec::new(), objective: Vec::new(), constraints: Vec::new() }
    }

    pub fn add_block(&mut self, label: impl Into<String>, dim: usize, kind: BlockKind) -> usize {
        self.blocks.push(Block { label: label.into(), dim, kind });
        self.objective.push(None);
        self.blocks.len() - 1
    }

    pub fn add_free(&mut self, label: impl Into<String>, objective: f64) -> usize {
        self.free_vars.push(FreeVar { label: label.into(), objective });
        self.free_vars.len() - 1
    }

    pub fn set_objective(&mut self, block: usize, coeff: ComplexMatrix) {
        self.objective[block] = Some(coeff);
    }

    pub fn add_constraint(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let bad = |m: String| Err(SdpError::Malformed(m));
        if self.blocks.is_empty() {
            return bad("at least one block is required".into());
        }
        let check = |what: &str, block: usize, m: &ComplexMatrix| -> Result<(), SdpError> {
            let Some(b) = self.blocks.get(block) else {
                return Err(SdpError::Malformed(format!("{what}: block index {block} out of range")));
            };
            if m.dim() != b.dim {
                return Err(SdpError::Malformed(format!(
                    "{what}: coefficient of dim {} for block '{}' of dim {}",
                    m.dim(),
                    b.label,
                    b.dim
                )));
            }
            if !m.is_hermitian(linalg::HERMITIAN_TOL) {
                return Err(SdpError::Malformed(format!("{what}: coefficient for '{}' is not Hermitian", b.label)));
            }
            if b.kind == BlockKind::RealSymmetric && m.data().iter().any(|z| z.im != 0.0) {
                return Err(SdpError::Malformed(format!("{what}: complex coefficient on real block '{}'", b.label)));
            }
            Ok(())
        };
        for (i, c) in self.objective.iter().enumerate() {
            if let Some(m) = c {
                check("objective", i, m)?;
            }
        }
        for (j, con) in self.constraints.iter().enumerate() {
            for (blk, m) in &con.terms {
                check(&format!("constraint {j}"), *blk, m)?;
            }
            for (k, _) in &con.free_terms {
                if *k >= self.free_vars.len() {
                    return bad(format!("constraint {j}: free variable {k} out of range"));
                }
            }
            if !con.rhs.is_finite() {
                return bad(format!("constraint {j}: non-finite right-hand side"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Objective values and residuals of one interior-point iterate, in the
/// user's sense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateInfo {
    pub primal_value: f64,
    pub dual_value: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub primal_blocks: Vec<ComplexMatrix>,
    pub free_values: Vec<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    /// One multiplier per original constraint; rows removed as redundant get 0.
    pub dual_multipliers: Vec<f64>,
    /// `|primal − dual| / (1 + |primal|)`
    pub gap: f64,
    pub iterations: usize,
    pub removed_rows: Vec<usize>,
    pub trace: Vec<IterateInfo>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub max_iter: usize,
    /// Relative gap at which iteration stops.
    pub gap_target: f64,
    /// Relative gap accepted as optimal if the target is not reached.
    pub gap_accept: f64,
    /// Relative residual at which iteration stops.
    pub feas_target: f64,
    /// Absolute equality residual accepted as optimal.
    pub feas_accept: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { max_iter: 200, gap_target: 1e-9, gap_accept: 1e-7, feas_target: 1e-11, feas_accept: 1e-8 }
    }
}

pub fn solve(p: &SdpProblem) -> Result<SdpSolution, SdpError> {
    solve_with(p, &SdpOptions::default())
}

pub fn solve_with(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    p.validate()?;
    let full = Internal::from_problem(p);
    let reduction = full.reduce_rows();
    let removed_rows = reduction.removed.clone();
    if reduction.inconsistent {
        return Ok(failed(p, SdpStatus::Infeasible, removed_rows, 0, Vec::new()));
    }
    let reduced = full.select_rows(&reduction.kept);
    let run = reduced.ipm(opts);

    let accept = |r: &IpmRun| -> bool {
        if !r.finite {
            return false;
        }
        let (pv, dv) = (r.pobj, r.dobj);
        (pv - dv).abs() / (1.0 + pv.abs()) <= opts.gap_accept
            && r.abs_primal_residual <= opts.feas_accept
            && r.abs_dual_residual <= opts.feas_accept
    };

    if accept(&run) {
        return Ok(assemble(p, &full, &reduction.kept, &run, removed_rows));
    }

    // Classify the failure with a Phase-I feasibility problem.
    let phase1 = reduced.phase_one();
    let p1 = phase1.ipm(opts);
    let bnorm = reduced.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let status = if p1.finite && p1.pobj > 1e-7 * (1.0 + bnorm) && p1.dobj > 1e-8 * (1.0 + bnorm) {
        SdpStatus::Infeasible
    } else if run.diverging {
        SdpStatus::Unbounded
    } else {
        SdpStatus::NumericalFailure
    };
    Ok(failed(p, status, removed_rows, run.iterations, run.trace_user(p.sense)))
}

fn failed(p: &SdpProblem, status: SdpStatus, removed_rows: Vec<usize>, iterations: usize, trace: Vec<IterateInfo>) -> SdpSolution {
    SdpSolution {
        status,
        primal_blocks: p.blocks.iter().map(|b| ComplexMatrix::zeros(b.dim)).collect(),
        free_values: vec![0.0; p.free_vars.len()],
        primal_value: f64::NAN,
        dual_value: f64::NAN,
        dual_multipliers: vec![0.0; p.constraints.len()],
        gap: f64::NAN,
        iterations,
        removed_rows,
        trace,
    }
}

fn assemble(p: &SdpProblem, full: &Internal, kept: &[usize], run: &IpmRun, removed_rows: Vec<usize>) -> SdpSolution {
    let sign = match p.sense {
        Sense::Maximize => -1.0,
        Sense::Minimize => 1.0,
    };
    let primal_blocks: Vec<ComplexMatrix> = full
        .blocks
        .iter()
        .zip(&run.x)
        .map(|(ib, x)| match ib.embedded {
            true => ComplexMatrix::from_real_embedding(x),
            false => ComplexMatrix::from_vec(x.data.iter().map(|&v| C64::new(v, 0.0)).collect()),
        })
        .collect();
    let mut y = vec![0.0; p.constraints.len()];
    for (r, &orig) in kept.iter().enumerate() {
        y[orig] = sign * run.y[r];
    }
    let mut primal_value: f64 = run.u.iter().zip(&p.free_vars).map(|(u, f)| u * f.objective).sum();
    for (c, x) in p.objective.iter().zip(&primal_blocks) {
        if let Some(c) = c {
            primal_value += c.trace_product(x);
        }
    }
    let dual_value: f64 = y.iter().zip(&p.constraints).map(|(yj, c)| yj * c.rhs).sum();
    SdpSolution {
        status: SdpStatus::Optimal,
        primal_blocks,
        free_values: run.u.clone(),
        primal_value,
        dual_value,
        dual_multipliers: y,
        gap: (primal_value - dual_value).abs() / (1.0 + primal_value.abs()),
        iterations: run.iterations,
        removed_rows,
        trace: run.trace_user(p.sense),
    }
}

/// Maximum violations of an (optimal) solution, recomputed from problem data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateReport {
    /// Largest absolute equality residual.
    pub primal_equality: f64,
    /// Largest negative part of a primal block eigenvalue.
    pub primal_psd: f64,
    /// Largest absolute residual of the dual equalities for free variables.
    pub dual_equality: f64,
    /// Largest negative part of a dual slack eigenvalue.
    pub dual_psd: f64,
    /// `|primal − dual| / (1 + |primal|)` with both values recomputed.
    pub gap: f64,
    pub primal_value: f64,
    pub dual_value: f64,
}

impl CertificateReport {
    pub fn max_violation(&self) -> f64 {
        [self.primal_equality, self.primal_psd, self.dual_equality, self.dual_psd, self.gap]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Dual slack matrices `Σ_j y_j A_ji − C_i` (maximize) or `C_i − Σ_j y_j A_ji`
/// (minimize).
pub fn dual_slacks(p: &SdpProblem, y: &[f64]) -> Vec<ComplexMatrix> {
    let mut aty: Vec<ComplexMatrix> = p.blocks.iter().map(|b| ComplexMatrix::zeros(b.dim)).collect();
    for (con, yj) in p.constraints.iter().zip(y) {
        for (blk, a) in &con.terms {
            aty[*blk] = &aty[*blk] + &a.scale(*yj);
        }
    }
    aty.into_iter()
        .zip(&p.objective)
        .map(|(s, c)| {
            let c = c.clone().unwrap_or_else(|| ComplexMatrix::zeros(s.dim()));
            match p.sense {
                Sense::Maximize => &s - &c,
                Sense::Minimize => &c - &s,
            }
        })
        .collect()
}

/// Re-verifies primal feasibility, dual feasibility, and the duality gap of a
/// solution using only dense linear algebra on the original problem data.
pub fn check_certificate(p: &SdpProblem, s: &SdpSolution) -> CertificateReport {
    let mut primal_equality: f64 = 0.0;
    for con in &p.constraints {
        let mut lhs: f64 = con.free_terms.iter().map(|(k, f)| f * s.free_values[*k]).sum();
        for (blk, a) in &con.terms {
            lhs += a.trace_product(&s.primal_blocks[*blk]);
        }
        primal_equality = primal_equality.max((lhs - con.rhs).abs());
    }
    let neg_part = |m: &ComplexMatrix| -> f64 {
        let h = m.hermitian_part();
        linalg::min_eigenvalue(&h).map(|l| (-l).max(0.0)).unwrap_or(f64::INFINITY)
    };
    let primal_psd = s.primal_blocks.iter().map(neg_part).fold(0.0, f64::max);
    let dual_psd = dual_slacks(p, &s.dual_multipliers).iter().map(neg_part).fold(0.0, f64::max);
    let mut dual_equality: f64 = 0.0;
    for (k, fv) in p.free_vars.iter().enumerate() {
        let mut acc = 0.0;
        for (con, yj) in p.constraints.iter().zip(&s.dual_multipliers) {
            for (kk, f) in &con.free_terms {
                if *kk == k {
                    acc += f * yj;
                }
            }
        }
        dual_equality = dual_equality.max((acc - fv.objective).abs());
    }
    let mut primal_value: f64 = s.free_values.iter().zip(&p.free_vars).map(|(u, f)| u * f.objective).sum();
    for (c, x) in p.objective.iter().zip(&s.primal_blocks) {
        if let Some(c) = c {
            primal_value += c.trace_product(x);
        }
    }
    let dual_value: f64 = s.dual_multipliers.iter().zip(&p.constraints).map(|(y, c)| y * c.rhs).sum();
    CertificateReport {
        primal_equality,
        primal_psd,
        dual_equality,
        dual_psd,
        gap: (primal_value - dual_value).abs() / (1.0 + primal_value.abs()),
        primal_value,
        dual_value,
    }
}

// ---------------------------------------------------------------------------
// Internal real-symmetric minimization form.

#[derive(Debug, Clone)]
struct InternalBlock {
    n: usize,
    embedded: bool,
}

#[derive(Debug, Clone)]
struct Internal {
    blocks: Vec<InternalBlock>,
    c: Vec<RealMatrix>,
    /// Per row, the nonzero block coefficients.
    a: Vec<Vec<(usize, RealMatrix)>>,
    /// Per row, dense free-variable coefficients.
    f: Vec<Vec<f64>>,
    cf: Vec<f64>,
    b: Vec<f64>,
}

struct RowReduction {
    kept: Vec<usize>,
    removed: Vec<usize>,
    inconsistent: bool,
}

impl Internal {
    fn from_problem(p: &SdpProblem) -> Self {
        let sign = match p.sense {
            Sense::Maximize => -1.0,
            Sense::Minimize => 1.0,
        };
        let blocks: Vec<InternalBlock> = p
            .blocks
            .iter()
            .map(|b| match b.kind {
                BlockKind::Hermitian => InternalBlock { n: 2 * b.dim, embedded: true },
                BlockKind::RealSymmetric => InternalBlock { n: b.dim, embedded: false },
            })
            .collect();
        let lift = |blk: usize, m: &ComplexMatrix| -> RealMatrix {
            if blocks[blk].embedded {
                m.hermitian_part().real_embedding().scale(0.5)
            } else {
                let n = m.dim();
                let mut r = RealMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        r[(i, j)] = 0.5 * (m[(i, j)].re + m[(j, i)].re);
                    }
                }
                r
            }
        };
        let c = p
            .objective
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                Some(m) => lift(i, m).scale(sign),
                None => RealMatrix::zeros(blocks[i].n, blocks[i].n),
            })
            .collect();
        let k = p.free_vars.len();
        let mut a = Vec::with_capacity(p.constraints.len());
        let mut f = Vec::with_capacity(p.constraints.len());
        for con in &p.constraints {
            let mut row: Vec<(usize, RealMatrix)> = Vec::new();
            for (blk, m) in &con.terms {
                let lifted = lift(*blk, m);
                match row.iter_mut().find(|(b, _)| b == blk) {
                    Some((_, existing)) => *existing = existing.add_scaled(&lifted, 1.0),
                    None => row.push((*blk, lifted)),
                }
            }
            row.sort_by_key(|(b, _)| *b);
            a.push(row);
            let mut frow = vec![0.0; k];
            for (kk, v) in &con.free_terms {
                frow[*kk] += v;
            }
            f.push(frow);
        }
        Self {
            blocks,
            c,
            a,
            f,
            cf: p.free_vars.iter().map(|v| sign * v.objective).collect(),
            b: p.constraints.iter().map(|c| c.rhs).collect(),
        }
    }

    fn row_vector(&self, j: usize) -> Vec<f64> {
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut len = 0;
        for b in &self.blocks {
            offsets.push(len);
            len += b.n * (b.n + 1) / 2;
        }
        let mut v = vec![0.0; len + self.cf.len()];
        for (blk, m) in &self.a[j] {
            let n = self.blocks[*blk].n;
            let mut idx = offsets[*blk];
            for r in 0..n {
                for s in r..n {
                    v[idx] = if r == s { m[(r, s)] } else { std::f64::consts::SQRT_2 * m[(r, s)] };
                    idx += 1;
                }
            }
        }
        v[len..].copy_from_slice(&self.f[j]);
        v
    }

    /// Gaussian elimination with the largest available pivot per column.
    fn reduce_rows(&self) -> RowReduction {
        let m = self.b.len();
        let mut rows: Vec<Vec<f64>> = (0..m).map(|j| self.row_vector(j)).collect();
        let mut rhs = self.b.clone();
        let scale = rows.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        let tol = 1e-10 * scale;
        let width = rows.first().map_or(0, |r| r.len());
        let mut pivoted = vec![false; m];
        for col in 0..width {
            let best = (0..m)
                .filter(|&r| !pivoted[r])
                .max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()));
            let Some(p) = best else { break };
            if rows[p][col].abs() <= tol {
                continue;
            }
            pivoted[p] = true;
            let prow = rows[p].clone();
            let prhs = rhs[p];
            for r in 0..m {
                if pivoted[r] {
                    continue;
                }
                let factor = rows[r][col] / prow[col];
                if factor == 0.0 {
                    continue;
                }
                for (x, pv) in rows[r].iter_mut().zip(&prow).skip(col) {
                    *x -= factor * pv;
                }
                rhs[r] -= factor * prhs;
            }
        }
        let bscale = self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        let mut kept = Vec::new();
        let mut removed = Vec::new();
        let mut inconsistent = false;
        for r in 0..m {
            if pivoted[r] {
                kept.push(r);
            } else {
                removed.push(r);
                if rhs[r].abs() > 1e-8 * bscale {
                    inconsistent = true;
                }
            }
        }
        RowReduction { kept, removed, inconsistent }
    }

    fn select_rows(&self, rows: &[usize]) -> Internal {
        Internal {
            blocks: self.blocks.clone(),
            c: self.c.clone(),
            a: rows.iter().map(|&j| self.a[j].clone()).collect(),
            f: rows.iter().map(|&j| self.f[j].clone()).collect(),
            cf: self.cf.clone(),
            b: rows.iter().map(|&j| self.b[j]).collect(),
        }
    }

    /// `min Σ (p_j + q_j)  s.t.  A(X) + p − q = b`, with `p, q` as 1×1 blocks.
    fn phase_one(&self) -> Internal {
        let m = self.b.len();
        let mut blocks = self.blocks.clone();
        let mut c: Vec<RealMatrix> = self.blocks.iter().map(|b| RealMatrix::zeros(b.n, b.n)).collect();
        let first_slack = blocks.len();
        for _ in 0..2 * m {
            blocks.push(InternalBlock { n: 1, embedded: false });
            c.push(RealMatrix::identity(1));
        }
        let mut a = self.a.clone();
        for (j, row) in a.iter_mut().enumerate() {
            row.push((first_slack + 2 * j, RealMatrix::identity(1)));
            row.push((first_slack + 2 * j + 1, RealMatrix::identity(1).scale(-1.0)));
        }
        // Free variables are kept free with zero cost.
        Internal { blocks, c, a, f: self.f.clone(), cf: vec![0.0; self.cf.len()], b: self.b.clone() }
    }

    fn apply_a(&self, x: &[RealMatrix], u: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.f)
            .map(|(row, frow)| {
                row.iter().map(|(blk, m)| m.dot(&x[*blk])).sum::<f64>()
                    + frow.iter().zip(u).map(|(f, v)| f * v).sum::<f64>()
            })
            .collect()
    }

    fn apply_at(&self, y: &[f64]) -> Vec<RealMatrix> {
        let mut out: Vec<RealMatrix> = self.blocks.iter().map(|b| RealMatrix::zeros(b.n, b.n)).collect();
        for (row, yj) in self.a.iter().zip(y) {
            for (blk, m) in row {
                out[*blk] = out[*blk].add_scaled(m, *yj);
            }
        }
        out
    }

    fn apply_ft(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cf.len()];
        for (frow, yj) in self.f.iter().zip(y) {
            for (o, f) in out.iter_mut().zip(frow) {
                *o += f * yj;
            }
        }
        out
    }

    fn ipm(&self, opts: &SdpOptions) -> IpmRun {
        let m = self.b.len();
        let k = self.cf.len();
        let n_tot: usize = self.blocks.iter().map(|b| b.n).sum();
        let bnorm = norm(&self.b);
        let cnorm = (self.c.iter().map(|c| c.dot(c)).sum::<f64>() + self.cf.iter().map(|v| v * v).sum::<f64>()).sqrt();

        // Initial point per block in the style of SDPT3.
        let mut x = Vec::with_capacity(self.blocks.len());
        let mut s = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let sq = (b.n as f64).sqrt();
            let mut xi: f64 = 10.0f64.max(sq);
            let mut eta: f64 = 10.0f64.max(sq).max(self.c[i].frobenius_norm());
            for (row, bj) in self.a.iter().zip(&self.b) {
                for (blk, a) in row {
                    if *blk == i {
                        let an = a.frobenius_norm();
                        xi = xi.max(sq * (1.0 + bj.abs()) / (1.0 + an));
                        eta = eta.max(an);
                    }
                }
            }
            x.push(RealMatrix::identity(b.n).scale(xi));
            s.push(RealMatrix::identity(b.n).scale(eta));
        }
        let mut y = vec![0.0; m];
        let mut u = vec![0.0; k];
        let mut trace = Vec::new();
        let mut best: Option<IpmRun> = None;
        let mut diverging = false;

        for iter in 0..=opts.max_iter {
            let ax = self.apply_a(&x, &u);
            let rp: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let aty = self.apply_at(&y);
            let rd: Vec<RealMatrix> =
                (0..self.blocks.len()).map(|i| self.c[i].add_scaled(&aty[i], -1.0).add_scaled(&s[i], -1.0)).collect();
            let ft = self.apply_ft(&y);
            let rf: Vec<f64> = self.cf.iter().zip(&ft).map(|(c, f)| c - f).collect();
            let xs: f64 = x.iter().zip(&s).map(|(a, b)| a.dot(b)).sum();
            let mu = xs / n_tot as f64;
            let pobj: f64 =
                self.c.iter().zip(&x).map(|(c, x)| c.dot(x)).sum::<f64>() + self.cf.iter().zip(&u).map(|(c, v)| c * v).sum::<f64>();
            let dobj: f64 = self.b.iter().zip(&y).map(|(b, y)| b * y).sum();
            let rd_norm = (rd.iter().map(|r| r.dot(r)).sum::<f64>() + rf.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let pinf = norm(&rp) / (1.0 + bnorm);
            let dinf = rd_norm / (1.0 + cnorm);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
            let finite = pobj.is_finite() && dobj.is_finite() && mu.is_finite();
            trace.push(IterateInfo {
                primal_value: pobj,
                dual_value: dobj,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                complementarity: xs,
            });
            let abs_primal_residual = rp.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let abs_dual_residual = rd
                .iter()
                .flat_map(|r| r.data.iter())
                .chain(rf.iter())
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
            let snapshot = |diverging: bool| IpmRun {
                x: x.clone(),
                s: s.clone(),
                y: y.clone(),
                u: u.clone(),
                pobj,
                dobj,
                abs_primal_residual,
                abs_dual_residual,
                iterations: iter,
                finite,
                diverging,
                trace: Vec::new(),
            };
            if !finite {
                break;
            }
            let merit = gap.max(pinf).max(dinf);
            let improves = best.as_ref().map_or(true, |b: &IpmRun| {
                let bgap = (b.pobj - b.dobj).abs() / (1.0 + b.pobj.abs());
                merit <= bgap.max(b.abs_primal_residual / (1.0 + bnorm)).max(b.abs_dual_residual / (1.0 + cnorm))
            });
            if improves {
                best = Some(snapshot(false));
            }
            if gap <= opts.gap_target && pinf <= opts.feas_target && dinf <= opts.feas_target {
                break;
            }
            let xnorm: f64 = x.iter().map(|m| m.frobenius_norm()).sum::<f64>() + norm(&u);
            let ynorm = norm(&y);
            if xnorm > 1e12 || ynorm > 1e12 {
                diverging = true;
                break;
            }
            if iter == opts.max_iter {
                break;
            }

            // Factor pieces shared by predictor and corrector.
            let sinv: Vec<RealMatrix> = match s.iter().map(|si| si.spd_inverse()).collect::<Result<_, _>>() {
                Ok(v) => v,
                Err(_) => break,
            };
            let schur = self.schur(&x, &sinv);
            let mut kkt = RealMatrix::zeros(m + k, m + k);
            for i in 0..m {
                for j in 0..m {
                    kkt[(i, j)] = schur[(i, j)];
                }
                for l in 0..k {
                    kkt[(i, m + l)] = self.f[i][l];
                    kkt[(m + l, i)] = self.f[i][l];
                }
            }
            let direction = |tau: f64, corr: Option<(&[RealMatrix], &[RealMatrix])>| -> Option<Direction> {
                let h: Vec<RealMatrix> = (0..self.blocks.len())
                    .map(|i| {
                        let mut h = sinv[i].scale(tau).add_scaled(&x[i], -1.0);
                        h = h.add_scaled(&x[i].matmul(&rd[i]).matmul(&sinv[i]), -1.0);
                        if let Some((dxa, dsa)) = corr {
                            h = h.add_scaled(&dxa[i].matmul(&dsa[i]).matmul(&sinv[i]), -1.0);
                        }
                        h
                    })
                    .collect();
                let ah = self.apply_a(&h, &vec![0.0; k]);
                let mut rhs: Vec<f64> = rp.iter().zip(&ah).map(|(r, a)| r - a).collect();
                rhs.extend_from_slice(&rf);
                let sol = solve_kkt(&kkt, &rhs)?;
                let mut dy = sol[..m].to_vec();
                let mut du = sol[m..].to_vec();
                let lift = |dy: &[f64]| -> Vec<RealMatrix> {
                    let atdy = self.apply_at(dy);
                    (0..self.blocks.len()).map(|i| x[i].matmul(&atdy[i]).matmul(&sinv[i]).symmetrize()).collect()
                };
                let mut dx: Vec<RealMatrix> =
                    lift(&dy).iter().zip(&h).map(|(l, h)| h.symmetrize().add_scaled(l, 1.0)).collect();
                // Iterative refinement against the true operator: the Schur
                // complement is badly conditioned close to the optimum.
                for _ in 0..2 {
                    let adx = self.apply_a(&dx, &du);
                    let mut res: Vec<f64> = rp.iter().zip(&adx).map(|(r, a)| r - a).collect();
                    let ftdy = self.apply_ft(&dy);
                    res.extend(rf.iter().zip(&ftdy).map(|(r, f)| r - f));
                    if norm(&res) <= 1e-15 * (1.0 + norm(&rhs)) {
                        break;
                    }
                    let corr = solve_kkt(&kkt, &res)?;
                    for (v, c) in dy.iter_mut().zip(&corr[..m]) {
                        *v += c;
                    }
                    for (v, c) in du.iter_mut().zip(&corr[m..]) {
                        *v += c;
                    }
                    for (d, l) in dx.iter_mut().zip(lift(&corr[..m])) {
                        *d = d.add_scaled(&l, 1.0);
                    }
                }
                let atdy = self.apply_at(&dy);
                let ds: Vec<RealMatrix> = (0..self.blocks.len()).map(|i| rd[i].add_scaled(&atdy[i], -1.0)).collect();
                Some(Direction { dx, ds, dy, du })
            };
            let Some(aff) = direction(0.0, None) else { break };
            let ap = max_step(&x, &aff.dx).min(1.0);
            let ad = max_step(&s, &aff.ds).min(1.0);
            let xs_aff: f64 = (0..self.blocks.len())
                .map(|i| x[i].add_scaled(&aff.dx[i], ap).dot(&s[i].add_scaled(&aff.ds[i], ad)))
                .sum();
            let sigma = ((xs_aff / n_tot as f64) / mu).clamp(0.0, 1.0).powi(3);
            let Some(dir) = direction(sigma * mu, Some((&aff.dx, &aff.ds))) else { break };
            let gamma = 0.98;
            let ap = (gamma * max_step(&x, &dir.dx)).min(1.0);
            let ad = (gamma * max_step(&s, &dir.ds)).min(1.0);
            for i in 0..self.blocks.len() {
                x[i] = x[i].add_scaled(&dir.dx[i], ap).symmetrize();
                s[i] = s[i].add_scaled(&dir.ds[i], ad).symmetrize();
            }
            for (v, d) in u.iter_mut().zip(&dir.du) {
                *v += ap * d;
            }
            for (v, d) in y.iter_mut().zip(&dir.dy) {
                *v += ad * d;
            }
        }

        let ax = self.apply_a(&x, &u);
        let final_pobj: f64 =
            self.c.iter().zip(&x).map(|(c, x)| c.dot(x)).sum::<f64>() + self.cf.iter().zip(&u).map(|(c, v)| c * v).sum::<f64>();
        let mut run = match best {
            Some(b) => b,
            None => IpmRun {
                x,
                s,
                y,
                u,
                pobj: final_pobj,
                dobj: f64::NAN,
                abs_primal_residual: self.b.iter().zip(&ax).map(|(b, a)| (b - a).abs()).fold(0.0, f64::max),
                abs_dual_residual: f64::INFINITY,
                iterations: opts.max_iter,
                finite: false,
                diverging,
                trace: Vec::new(),
            },
        };
        run.diverging = diverging;
        run.trace = trace;
        run
    }

    /// `M_ij = Tr(A_i X A_j S⁻¹)` summed over blocks.
    fn schur(&self, x: &[RealMatrix], sinv: &[RealMatrix]) -> RealMatrix {
        let m = self.a.len();
        let mut per_block: Vec<Vec<(usize, &RealMatrix)>> = vec![Vec::new(); self.blocks.len()];
        for (j, row) in self.a.iter().enumerate() {
            for (blk, a) in row {
                per_block[*blk].push((j, a));
            }
        }
        let mut out = RealMatrix::zeros(m, m);
        for (blk, rows) in per_block.iter().enumerate() {
            for &(j, aj) in rows {
                let t = x[blk].matmul(aj).matmul(&sinv[blk]);
                for &(i, ai) in rows {
                    out[(i, j)] += ai.dot(&t);
                }
            }
        }
        out.symmetrize()
    }
}

struct Direction {
    dx: Vec<RealMatrix>,
    ds: Vec<RealMatrix>,
    dy: Vec<f64>,
    du: Vec<f64>,
}

#[derive(Debug, Clone)]
struct IpmRun {
    x: Vec<RealMatrix>,
    #[allow(dead_code)]
    s: Vec<RealMatrix>,
    y: Vec<f64>,
    u: Vec<f64>,
    pobj: f64,
    dobj: f64,
    abs_primal_residual: f64,
    abs_dual_residual: f64,
    iterations: usize,
    finite: bool,
    diverging: bool,
    trace: Vec<IterateInfo>,
}

impl IpmRun {
    fn trace_user(&self, sense: Sense) -> Vec<IterateInfo> {
        let sign = match sense {
            Sense::Maximize => -1.0,
            Sense::Minimize => 1.0,
        };
        self.trace
            .iter()
            .map(|t| IterateInfo { primal_value: sign * t.primal_value, dual_value: sign * t.dual_value, ..*t })
            .collect()
    }
}

/// Solves the symmetric KKT system through a diagonally scaled eigen
/// decomposition, dropping directions whose eigenvalue is negligible. Near a
/// degenerate optimum the Schur complement loses rank and a plain
/// factorization returns garbage.
fn solve_kkt(a: &RealMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = a[(i, i)].abs();
            if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }
        })
        .collect();
    let mut scaled = a.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= d[i] * d[j];
        }
    }
    let (vals, vecs) = scaled.symmetric_eigen();
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !top.is_finite() || top == 0.0 {
        return None;
    }
    let cut = 1e-15 * top;
    let rb: Vec<f64> = b.iter().zip(&d).map(|(v, s)| v * s).collect();
    let mut z = vec![0.0; n];
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= cut {
            continue;
        }
        let coef = (0..n).map(|i| vecs[(i, k)] * rb[i]).sum::<f64>() / lam;
        for i in 0..n {
            z[i] += coef * vecs[(i, k)];
        }
    }
    let x: Vec<f64> = z.iter().zip(&d).map(|(v, s)| v * s).collect();
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest `α` keeping every `X_i + α dX_i` positive semidefinite.
fn max_step(x: &[RealMatrix], dx: &[RealMatrix]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xi, di) in x.iter().zip(dx) {
        let Ok(l) = xi.cholesky() else { return 0.0 };
        let linv = l.lower_triangular_inverse();
        let w = linv.matmul(di).matmul(&linv.transpose());
        let lmin = w.min_symmetric_eigenvalue();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    alpha
}

// ---------------------------------------------------------------------------
// Plain-text problem format.
//
//   sdp v1
//   sense maximize|minimize
//   block <label> <dim> hermitian|real
//   free <label> <objective coefficient>
//   objective <block index>
//   <dim rows of "re im" pairs>
//   constraint <rhs>
//   term <block index>
//   <dim rows of "re im" pairs>
//   freeterm <free index> <coefficient>
//   end
//
// Numbers are written with 17 significant digits, so a dump/load round trip is
// exact. Lines starting with '#' are comments.

pub fn to_text(p: &SdpProblem) -> String {
    let mut out = String::from("sdp v1\n");
    let write_matrix = |out: &mut String, m: &ComplexMatrix| {
        for i in 0..m.dim() {
            let row: Vec<String> =
                (0..m.dim()).map(|j| format!("{:.16e} {:.16e}", m[(i, j)].re, m[(i, j)].im)).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    };
    let _ = writeln!(out, "sense {}", if p.sense == Sense::Maximize { "maximize" } else { "minimize" });
    for b in &p.blocks {
        let kind = if b.kind == BlockKind::Hermitian { "hermitian" } else { "real" };
        let _ = writeln!(out, "block {} {} {}", b.label, b.dim, kind);
    }
    for f in &p.free_vars {
        let _ = writeln!(out, "free {} {:.16e}", f.label, f.objective);
    }
    for (i, c) in p.objective.iter().enumerate() {
        if let Some(m) = c {
            let _ = writeln!(out, "objective {i}");
            write_matrix(&mut out, m);
        }
    }
    for con in &p.constraints {
        let _ = writeln!(out, "constraint {:.16e}", con.rhs);
        for (blk, m) in &con.terms {
            let _ = writeln!(out, "term {blk}");
            write_matrix(&mut out, m);
        }
        for (k, v) in &con.free_terms {
            let _ = writeln!(out, "freeterm {k} {v:.16e}");
        }
    }
    out.push_str("end\n");
    out
}

pub fn from_text(text: &str) -> Result<SdpProblem, SdpError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .peekable();
    let err = |line: usize, msg: &str| SdpError::Parse { line, msg: msg.to_string() };
    let num = |line: usize, s: &str| -> Result<f64, SdpError> { s.parse::<f64>().map_err(|_| err(line, &format!("bad number '{s}'"))) };
    let idx = |line: usize, s: &str| -> Result<usize, SdpError> { s.parse::<usize>().map_err(|_| err(line, &format!("bad index '{s}'"))) };

    match lines.next() {
        Some((_, "sdp v1")) => {}
        Some((l, _)) => return Err(err(l, "expected header 'sdp v1'")),
        None => return Err(err(0, "empty input")),
    }
    let mut p = SdpProblem::new(Sense::Maximize);
    let read_matrix = |lines: &mut dyn Iterator<Item = (usize, &str)>, dim: usize| -> Result<ComplexMatrix, SdpError> {
        let mut m = ComplexMatrix::zeros(dim);
        for i in 0..dim {
            let (l, row) = lines.next().ok_or_else(|| err(0, "unexpected end of matrix"))?;
            let vals: Vec<&str> = row.split_whitespace().collect();
            if vals.len() != 2 * dim {
                return Err(err(l, "matrix row has the wrong number of entries"));
            }
            for j in 0..dim {
                m[(i, j)] = C64::new(num(l, vals[2 * j])?, num(l, vals[2 * j + 1])?);
            }
        }
        Ok(m)
    };
    let mut saw_end = false;
    while let Some((l, line)) = lines.next() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["sense", "maximize"] => p.sense = Sense::Maximize,
            ["sense", "minimize"] => p.sense = Sense::Minimize,
            ["block", label, dim, kind] => {
                let kind = match *kind {
                    "hermitian" => BlockKind::Hermitian,
                    "real" => BlockKind::RealSymmetric,
                    _ => return Err(err(l, "block kind must be 'hermitian' or 'real'")),
                };
                p.add_block(*label, idx(l, dim)?, kind);
            }
            ["free", label, obj] => {
                p.add_free(*label, num(l, obj)?);
            }
            ["objective", blk] => {
                let blk = idx(l, blk)?;
                let dim = p.blocks.get(blk).ok_or_else(|| err(l, "unknown block"))?.dim;
                let m = read_matrix(&mut lines, dim)?;
                p.set_objective(blk, m);
            }
            ["constraint", rhs] => {
                p.add_constraint(Constraint::new(num(l, rhs)?));
            }
            ["term", blk] => {
                let blk = idx(l, blk)?;
                let dim = p.blocks.get(blk).ok_or_else(|| err(l, "unknown block"))?.dim;
                let m = read_matrix(&mut lines, dim)?;
                p.constraints.last_mut().ok_or_else(|| err(l, "term outside a constraint"))?.terms.push((blk, m));
            }
            ["freeterm", k, v] => {
                let (k, v) = (idx(l, k)?, num(l, v)?);
                p.constraints.last_mut().ok_or_else(|| err(l, "freeterm outside a constraint"))?.free_terms.push((k, v));
            }
            ["end"] => {
                saw_end = true;
                break;
            }
            _ => return Err(err(l, &format!("unrecognized line '{line}'"))),
        }
    }
    if !saw_end {
        return Err(err(0, "missing 'end'"));
    }
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn check_optimal(p: &SdpProblem, s: &SdpSolution) {
        assert_eq!(s.status, SdpStatus::Optimal, "{s:?}");
        let rep = check_certificate(p, s);
        assert!(rep.max_violation() <= 1e-7, "{rep:?}");
        assert!(s.gap <= 1e-7);
    }

    #[test]
    fn fully_constrained_scalar() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block("x", 1, BlockKind::Hermitian);
        p.set_objective(x, ComplexMatrix::identity(1));
        p.add_constraint(Constraint::new(1.0).term(x, ComplexMatrix::identity(1)));
        let s = solve(&p).unwrap();
        check_optimal(&p, &s);
        assert_abs_diff_eq!(s.primal_value, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.primal_blocks[0][(0, 0)].re, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn extremal_psd_point() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block("x", 2, BlockKind::Hermitian);
        p.set_objective(x, ComplexMatrix::diag(&[1.0, 0.0]));
        p.add_constraint(Constraint::new(1.0).term(x, ComplexMatrix::identity(2)));
        let s = solve(&p).unwrap();
        check_optimal(&p, &s);
        assert_abs_diff_eq!(s.primal_value, 1.0, epsilon = 1e-8);
        assert!(s.primal_blocks[0].max_abs_diff(&ComplexMatrix::diag(&[1.0, 0.0])) < 1e-4);
    }

    #[test]
    fn largest_eigenvalue_of_complex_matrix() {
        // max Tr(C X), Tr X = 1 equals λ_max(C).
        let cmat = ComplexMatrix::from_vec(vec![c(1.0, 0.0), c(0.5, -0.7), c(0.5, 0.7), c(-0.3, 0.0)]);
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block("x", 2, BlockKind::Hermitian);
        p.set_objective(x, cmat.clone());
        p.add_constraint(Constraint::new(1.0).term(x, ComplexMatrix::identity(2)));
        let s = solve(&p).unwrap();
        check_optimal(&p, &s);
        let lmax = -linalg::min_eigenvalue(&cmat.scale(-1.0)).unwrap();
        assert_abs_diff_eq!(s.primal_value, lmax, epsilon = 1e-8);
    }

    #[test]
    fn free_variable_min_eigenvalue() {
        // max t s.t. X + t·I = A, X ⪰ 0 gives t = λ_min(A).
        let a = ComplexMatrix::from_vec(vec![c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.5, 0.0)]);
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block("x", 2, BlockKind::Hermitian);
        let t = p.add_free("t", 1.0);
        for (i, j) in [(0, 0), (1, 1), (0, 1)] {
            for imag in [false, true] {
                if i == j && imag {
                    continue;
                }
                let mut e = ComplexMatrix::zeros(2);
                if i == j {
                    e[(i, i)] = c(1.0, 0.0);
                } else if imag {
                    e[(i, j)] = c(0.0, -0.5);
                    e[(j, i)] = c(0.0, 0.5);
                } else {
                    e[(i, j)] = c(0.5, 0.0);
                    e[(j, i)] = c(0.5, 0.0);
                }
                let rhs = e.trace_product(&a);
                let id_coeff = e.trace().re;
                p.add_constraint(Constraint::new(rhs).term(x, e).free_term(t, id_coeff));
            }
        }
        let s = solve(&p).unwrap();
        check_optimal(&p, &s);
        assert_abs_diff_eq!(s.free_values[0], linalg::min_eigenvalue(&a).unwrap(), epsilon = 1e-7);
    }

    #[test]
    fn redundant_rows_are_removed() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_block("x", 2, BlockKind::Hermitian);
        p.set_objective(x, ComplexMatrix::diag(&[1.0, 2.0]));
        p.add_constraint(Constraint::new(1.0).term(x, ComplexMatrix::identity(2)));
        p.add_constraint(Constraint::new(2.0).term(x, ComplexMatrix::identity(2).scale(2.0)));
        let s = solve(&p).unwrap();
        check_optimal(&p, &s);
        assert_eq!(s.removed_rows.len(), 1);
        assert_abs_diff_eq!(s.primal_value, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn inconsistent_rows_are_infeasible() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let x = p.add_block("x", 2, BlockKind::Hermitian);
        p.add_constraint(Constraint::new(1.0).term(x, ComplexMatrix::identity(2)));
        p.add_constraint(Constraint::new(3.0).term(x, ComplexMatrix::identity(2).scale(2.0)));
        assert_eq!(solve(&p).unwrap().status, SdpStatus::Infeasible);
    }

    #[test]
    fn psd_infeasibility_detected_by_phase_one() {
        // Tr X = -1 with X ⪰ 0 has no solution, but the rows are consistent.
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block("x", 2, BlockKind::Hermitian);
        p.set_objective(x, ComplexMatrix::identity(2));
        p.add_constraint(Constraint::new(-1.0).term(x, ComplexMatrix::identity(2)));
        assert_eq!(solve(&p).unwrap().status, SdpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // max X_00 s.t. X_11 = 1.
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block("x", 2, BlockKind::RealSymmetric);
        p.set_objective(x, ComplexMatrix::diag(&[1.0, 0.0]));
        p.add_constraint(Constraint::new(1.0).term(x, ComplexMatrix::diag(&[0.0, 1.0])));
        assert_eq!(solve(&p).unwrap().status, SdpStatus::Unbounded);
    }

    #[test]
    fn malformed_inputs_rejected() {
        let p = SdpProblem::new(Sense::Maximize);
        assert!(matches!(solve(&p), Err(SdpError::Malformed(_))));
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block("x", 2, BlockKind::Hermitian);
        p.set_objective(x, ComplexMatrix::from_real(&[&[1.0, 2.0], &[0.0, 1.0]]));
        assert!(matches!(solve(&p), Err(SdpError::Malformed(_))));
    }

    fn random_problem(rng: &mut impl Rng) -> SdpProblem {
        // Feasible by construction (rhs from a PSD point) and bounded (trace fixed).
        let mut p = SdpProblem::new(Sense::Maximize);
        let x0 = p.add_block("a", 2, BlockKind::Hermitian);
        let x1 = p.add_block("b", 3, BlockKind::Hermitian);
        let rh = |rng: &mut dyn rand::RngCore, n: usize| {
            ComplexMatrix::from_vec(
                (0..n * n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
            )
            .hermitian_part()
        };
        let g0 = rh(rng, 2);
        let g1 = rh(rng, 3);
        let p0 = &(&g0 * &g0.dagger()) + &ComplexMatrix::identity(2).scale(0.1);
        let p1 = &(&g1 * &g1.dagger()) + &ComplexMatrix::identity(3).scale(0.1);
        p.set_objective(x0, rh(rng, 2));
        p.set_objective(x1, rh(rng, 3));
        p.add_constraint(
            Constraint::new(p0.trace().re + p1.trace().re)
                .term(x0, ComplexMatrix::identity(2))
                .term(x1, ComplexMatrix::identity(3)),
        );
        for _ in 0..3 {
            let a0 = rh(rng, 2);
            let a1 = rh(rng, 3);
            let rhs = a0.trace_product(&p0) + a1.trace_product(&p1);
            p.add_constraint(Constraint::new(rhs).term(x0, a0).term(x1, a1));
        }
        p
    }

    #[test]
    fn random_problems_certify() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let p = random_problem(&mut rng);
            let s = solve(&p).unwrap();
            check_optimal(&p, &s);
            // Weak duality on iterates that are feasible to high accuracy.
            for it in &s.trace {
                if it.primal_infeasibility < 1e-10 && it.dual_infeasibility < 1e-10 {
                    assert!(it.dual_value >= it.primal_value - 1e-9, "{it:?}");
                }
            }
            assert!(s.dual_value >= s.primal_value - 1e-9);
        }
    }

    #[test]
    fn unitary_conjugation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_problem(&mut rng);
        // Hadamard-with-phase unitary on the 2-dim block.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = ComplexMatrix::from_vec(vec![c(s, 0.0), c(0.0, s), c(0.0, s), c(s, 0.0)]);
        let mut q = p.clone();
        if let Some(m) = &mut q.objective[0] {
            *m = m.conjugate_by(&u).hermitian_part();
        }
        for con in &mut q.constraints {
            for (blk, m) in &mut con.terms {
                if *blk == 0 {
                    *m = m.conjugate_by(&u).hermitian_part();
                }
            }
        }
        let a = solve(&p).unwrap();
        let b = solve(&q).unwrap();
        assert_abs_diff_eq!(a.primal_value, b.primal_value, epsilon = 1e-7);
    }

    #[test]
    fn real_embedding_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_problem(&mut rng);
        let mut q = SdpProblem::new(p.sense);
        for b in &p.blocks {
            q.add_block(b.label.clone(), 2 * b.dim, BlockKind::RealSymmetric);
        }
        let embed = |m: &ComplexMatrix| {
            let r = m.real_embedding().scale(0.5);
            ComplexMatrix::from_vec(r.data.iter().map(|&v| c(v, 0.0)).collect())
        };
        for (i, o) in p.objective.iter().enumerate() {
            if let Some(m) = o {
                q.set_objective(i, embed(m));
            }
        }
        for con in &p.constraints {
            let mut nc = Constraint::new(con.rhs);
            for (blk, m) in &con.terms {
                nc = nc.term(*blk, embed(m));
            }
            q.add_constraint(nc);
        }
        let a = solve(&p).unwrap();
        let b = solve(&q).unwrap();
        check_optimal(&q, &b);
        assert_abs_diff_eq!(a.primal_value, b.primal_value, epsilon = 1e-7);
    }

    #[test]
    fn certificate_detects_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = random_problem(&mut rng);
        let mut s = solve(&p).unwrap();
        check_optimal(&p, &s);
        // Constraint 0 is Tr X0 + Tr X1 = const, so moving X1[0][0] by 1e-3
        // moves its residual by exactly 1e-3.
        s.primal_blocks[1][(0, 0)] += c(1e-3, 0.0);
        let rep = check_certificate(&p, &s);
        assert!(rep.primal_equality >= 1e-4, "{rep:?}");
    }

    #[test]
    fn certificate_detects_suboptimal_point() {
        // max Tr(diag(1,0) X), Tr X = 1: the point X = I/2 is feasible with
        // value 1/2 while the optimal multiplier certifies 1.
        let mut p = SdpProblem::new(Sense::Maximize);
        let x = p.add_block("x", 2, BlockKind::Hermitian);
        p.set_objective(x, ComplexMatrix::diag(&[1.0, 0.0]));
        p.add_constraint(Constraint::new(1.0).term(x, ComplexMatrix::identity(2)));
        let mut s = solve(&p).unwrap();
        s.primal_blocks[0] = ComplexMatrix::identity(2).scale(0.5);
        let rep = check_certificate(&p, &s);
        assert!(rep.primal_equality < 1e-12);
        assert!(rep.gap > 1e-3, "{rep:?}");
        assert_abs_diff_eq!(rep.primal_value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_problem(&mut rng);
        assert_eq!(solve(&p).unwrap(), solve(&p).unwrap());
    }

    #[test]
    fn text_format_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p = random_problem(&mut rng);
        let t = p.add_free("t", 0.25);
        p.constraints[1].free_terms.push((t, -1.5));
        let text = to_text(&p);
        let q = from_text(&text).unwrap();
        assert_eq!(p, q);
        assert!(from_text("sdp v2\nend\n").is_err());
        assert!(from_text("sdp v1\nblock x 2 hermitian\nbogus\nend\n").is_err());
    }
}
