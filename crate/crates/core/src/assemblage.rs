//! Assemblages: Bob's unnormalized conditional qubit states σ_{a|x}, indexed by
//! Alice's setting `x` and outcome `a ∈ {0, 1, Ø}`.
//!
//! Also holds the tomography count tables, the Born-rule forward model for
//! Bob's Pauli measurements, and the maximum-likelihood reconstruction of a
//! physical (PSD, normalized, non-signaling) assemblage from counts.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::{self, partial_trace_a, solve_linear, tensor, ComplexMatrix, DensityMatrix, LinalgError, RealMatrix, C64};

/// Qubit dimension on Bob's side.
pub const BOB_DIM: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblageError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid measurement set: {0}")]
    InvalidMeasurement(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("maximum-likelihood reconstruction did not converge after {iterations} iterations (stationarity {stationarity:.3e})")]
    NonConvergence { iterations: usize, stationarity: f64 },
    #[error("cannot parse line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, AssemblageError>;

/// Alice's outcome, including the null (no detection) outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Zero,
    One,
    Null,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Zero, Outcome::One, Outcome::Null];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Zero => "0",
            Outcome::One => "1",
            Outcome::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "0" => Some(Outcome::Zero),
            "1" => Some(Outcome::One),
            "null" | "Ø" | "-" => Some(Outcome::Null),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bob's tomography basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Basis::X => "X",
            Basis::Y => "Y",
            Basis::Z => "Z",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "X" => Some(Basis::X),
            "Y" => Some(Basis::Y),
            "Z" => Some(Basis::Z),
            _ => None,
        }
    }

    pub fn pauli(self) -> ComplexMatrix {
        match self {
            Basis::X => ComplexMatrix::pauli_x(),
            Basis::Y => ComplexMatrix::pauli_y(),
            Basis::Z => ComplexMatrix::pauli_z(),
        }
    }

    /// Projector onto outcome `beta` (0 is the +1 eigenspace).
    pub fn projector(self, beta: usize) -> ComplexMatrix {
        let sign = if beta == 0 { 0.5 } else { -0.5 };
        &ComplexMatrix::identity(2).scale(0.5) + &self.pauli().scale(sign)
    }
}

/// Alice's measurements: per setting the effect `M_{0|x}` (with
/// `M_{1|x} = 𝟙 − M_{0|x}`), plus the heralding efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    labels: Vec<String>,
    effects: Vec<ComplexMatrix>,
    eta: f64,
}

impl MeasurementSet {
    pub fn new(labels: Vec<String>, effects: Vec<ComplexMatrix>, eta: f64) -> Result<Self> {
        let bad = |m: String| Err(AssemblageError::InvalidMeasurement(m));
        if labels.is_empty() || labels.len() != effects.len() {
            return bad("need one effect per setting label".into());
        }
        if !(0.0..=1.0).contains(&eta) {
            return bad(format!("eta = {eta} outside [0, 1]"));
        }
        for (l, m) in labels.iter().zip(&effects) {
            if m.dim() != 2 {
                return bad(format!("effect for setting {l} is not 2x2"));
            }
            if !m.is_hermitian(1e-12) {
                return bad(format!("effect for setting {l} is not Hermitian"));
            }
            let l0 = linalg::min_eigenvalue(m)?;
            let l1 = linalg::min_eigenvalue(&(&ComplexMatrix::identity(2) - m))?;
            if l0 < -1e-12 || l1 < -1e-12 {
                return bad(format!("effects for setting {l} are not PSD"));
            }
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return bad("duplicate setting labels".into());
        }
        Ok(Self { labels, effects, eta })
    }

    /// Settings X and Z with `M_{0|Z} = |0⟩⟨0|` and `M_{0|X} = |+⟩⟨+|`.
    pub fn standard(eta: f64) -> Result<Self> {
        Self::new(
            vec!["X".into(), "Z".into()],
            vec![Basis::X.projector(0), Basis::Z.projector(0)],
            eta,
        )
    }

    /// The same effects with a different heralding efficiency.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.labels.clone(), self.effects.clone(), eta)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `M_{a|x}` for `a ∈ {0, 1}`.
    pub fn effect(&self, x: usize, a: Outcome) -> ComplexMatrix {
        match a {
            Outcome::Zero => self.effects[x].clone(),
            Outcome::One => &ComplexMatrix::identity(2) - &self.effects[x],
            Outcome::Null => panic!("the null outcome has no effect operator"),
        }
    }
}

/// σ_{a|x} for every setting `x` and outcome `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assemblage {
    labels: Vec<String>,
    members: Vec<[ComplexMatrix; 3]>,
}

impl Assemblage {
    pub fn new(labels: Vec<String>, members: Vec<[ComplexMatrix; 3]>) -> Result<Self> {
        if labels.is_empty() || labels.len() != members.len() {
            return Err(AssemblageError::DimensionMismatch("need one member triple per setting".into()));
        }
        if members.iter().flatten().any(|m| m.dim() != BOB_DIM) {
            return Err(AssemblageError::DimensionMismatch("assemblage members must be 2x2".into()));
        }
        Ok(Self { labels, members })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn settings(&self) -> usize {
        self.members.len()
    }

    pub fn setting_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn sigma(&self, x: usize, a: Outcome) -> &ComplexMatrix {
        &self.members[x][a.index()]
    }

    pub fn members(&self) -> &[[ComplexMatrix; 3]] {
        &self.members
    }

    /// Bob's reduced state `Σ_a σ_{a|x}` for setting `x`.
    pub fn marginal(&self, x: usize) -> ComplexMatrix {
        let m = &self.members[x];
        &(&m[0] + &m[1]) + &m[2]
    }

    /// Applies `f` to every member.
    pub fn map(&self, f: impl Fn(usize, Outcome, &ComplexMatrix) -> ComplexMatrix) -> Assemblage {
        let members = self
            .members
            .iter()
            .enumerate()
            .map(|(x, t)| [f(x, Outcome::Zero, &t[0]), f(x, Outcome::One, &t[1]), f(x, Outcome::Null, &t[2])])
            .collect();
        Assemblage { labels: self.labels.clone(), members }
    }

    /// `w·self + (1−w)·other`, member-wise.
    pub fn mix(&self, other: &Assemblage, w: f64) -> Assemblage {
        self.map(|x, a, m| &m.scale(w) + &other.sigma(x, a).scale(1.0 - w))
    }

    /// Exchanges the labels of outcomes 0 and 1 in every setting.
    pub fn swap_outcomes(&self) -> Assemblage {
        self.map(|x, a, _| match a {
            Outcome::Zero => self.sigma(x, Outcome::One).clone(),
            Outcome::One => self.sigma(x, Outcome::Zero).clone(),
            Outcome::Null => self.sigma(x, Outcome::Null).clone(),
        })
    }

    pub fn max_abs_diff(&self, other: &Assemblage) -> f64 {
        self.members
            .iter()
            .flatten()
            .zip(other.members.iter().flatten())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Labeled plain-text form, exact to 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::from("assemblage v1\n");
        let _ = writeln!(out, "settings {}", self.labels.join(" "));
        for (x, t) in self.members.iter().enumerate() {
            for a in Outcome::ALL {
                let _ = writeln!(out, "sigma {} {}", self.labels[x], a);
                let m = &t[a.index()];
                for i in 0..BOB_DIM {
                    let row: Vec<String> =
                        (0..BOB_DIM).map(|j| format!("{:.16e} {:.16e}", m[(i, j)].re, m[(i, j)].im)).collect();
                    let _ = writeln!(out, "{}", row.join(" "));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Assemblage> {
        let perr = |line: usize, msg: &str| AssemblageError::Parse { line, msg: msg.into() };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, "assemblage v1")) => {}
            Some((l, _)) => return Err(perr(l, "expected header 'assemblage v1'")),
            None => return Err(perr(0, "empty input")),
        }
        let (l, settings) = lines.next().ok_or_else(|| perr(0, "missing settings line"))?;
        let labels: Vec<String> = match settings.strip_prefix("settings ") {
            Some(rest) => rest.split_whitespace().map(String::from).collect(),
            None => return Err(perr(l, "expected 'settings <labels>'")),
        };
        let mut members: Vec<[Option<ComplexMatrix>; 3]> = vec![[None, None, None]; labels.len()];
        while let Some((l, head)) = lines.next() {
            let parts: Vec<&str> = head.split_whitespace().collect();
            let [tag, x, a] = parts.as_slice() else { return Err(perr(l, "expected 'sigma <setting> <outcome>'")) };
            if *tag != "sigma" {
                return Err(perr(l, "expected 'sigma <setting> <outcome>'"));
            }
            let x = labels.iter().position(|s| s == x).ok_or_else(|| perr(l, "unknown setting"))?;
            let a = Outcome::parse(a).ok_or_else(|| perr(l, "unknown outcome"))?;
            let mut m = ComplexMatrix::zeros(BOB_DIM);
            for i in 0..BOB_DIM {
                let (l, row) = lines.next().ok_or_else(|| perr(l, "truncated matrix"))?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| perr(l, "bad number")))
                    .collect::<Result<_>>()?;
                if vals.len() != 2 * BOB_DIM {
                    return Err(perr(l, "matrix row has the wrong number of entries"));
                }
                for j in 0..BOB_DIM {
                    m[(i, j)] = C64::new(vals[2 * j], vals[2 * j + 1]);
                }
            }
            members[x][a.index()] = Some(m);
        }
        let members = members
            .into_iter()
            .map(|[a, b, c]| match (a, b, c) {
                (Some(a), Some(b), Some(c)) => Ok([a, b, c]),
                _ => Err(perr(0, "missing assemblage member")),
            })
            .collect::<Result<Vec<_>>>()?;
        Assemblage::new(labels, members)
    }
}

/// σ_{a|x} = η·Tr_A[(M_{a|x} ⊗ 𝟙)ρ] for a ∈ {0,1}; σ_{Ø|x} = (1−η)·Tr_A ρ.
pub fn ideal_assemblage(rho: &DensityMatrix, m: &MeasurementSet) -> Result<Assemblage> {
    if rho.dim() != 4 {
        return Err(AssemblageError::DimensionMismatch(format!("expected a two-qubit state, got dim {}", rho.dim())));
    }
    let id = ComplexMatrix::identity(2);
    let rho_b = partial_trace_a(rho.matrix(), 2, 2)?;
    let members = (0..m.len())
        .map(|x| -> Result<[ComplexMatrix; 3]> {
            let cond = |a: Outcome| -> Result<ComplexMatrix> {
                let op = tensor(&m.effect(x, a), &id)?;
                Ok(partial_trace_a(&(&op * rho.matrix()), 2, 2)?.scale(m.eta()).hermitian_part())
            };
            Ok([cond(Outcome::Zero)?, cond(Outcome::One)?, rho_b.scale(1.0 - m.eta())])
        })
        .collect::<Result<Vec<_>>>()?;
    Assemblage::new(m.labels().to_vec(), members)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    /// Largest negative part of any member eigenvalue.
    pub psd_violation: f64,
    /// Largest element-wise deviation between marginals of different settings.
    pub nonsignaling_deviation: f64,
    /// Largest `|Σ_a Tr σ_{a|x} − 1|`.
    pub normalization_deviation: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn validate(a: &Assemblage, tol: f64) -> ValidationReport {
    let psd_violation = a
        .members
        .iter()
        .flatten()
        .map(|m| linalg::min_eigenvalue(&m.hermitian_part()).map_or(f64::INFINITY, |l| (-l).max(0.0)))
        .fold(0.0, f64::max);
    let marginals: Vec<ComplexMatrix> = (0..a.settings()).map(|x| a.marginal(x)).collect();
    let nonsignaling_deviation = marginals
        .iter()
        .flat_map(|m| marginals.iter().map(move |n| m.max_abs_diff(n)))
        .fold(0.0, f64::max);
    let normalization_deviation = marginals.iter().map(|m| (m.trace().re - 1.0).abs()).fold(0.0, f64::max);
    let passed = psd_violation <= tol && nonsignaling_deviation <= tol && normalization_deviation <= tol;
    ValidationReport { psd_violation, nonsignaling_deviation, normalization_deviation, tol, passed }
}

/// `p(a, β | x, b)` indexed `[x][basis position][a][β]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub bases: Vec<Basis>,
    pub p: Vec<Vec<[[f64; 2]; 3]>>,
}

impl ProbabilityTable {
    pub fn get(&self, x: usize, b: Basis, a: Outcome, beta: usize) -> f64 {
        let bi = self.bases.iter().position(|&c| c == b).expect("basis not in table");
        self.p[x][bi][a.index()][beta]
    }
}

pub fn born_probabilities(a: &Assemblage, bob_bases: &[Basis]) -> ProbabilityTable {
    let proj: Vec<[ComplexMatrix; 2]> = bob_bases.iter().map(|b| [b.projector(0), b.projector(1)]).collect();
    let p = (0..a.settings())
        .map(|x| {
            proj.iter()
                .map(|pb| {
                    let mut t = [[0.0; 2]; 3];
                    for o in Outcome::ALL {
                        for beta in 0..2 {
                            t[o.index()][beta] = pb[beta].trace_product(a.sigma(x, o));
                        }
                    }
                    t
                })
                .collect()
        })
        .collect();
    ProbabilityTable { bases: bob_bases.to_vec(), p }
}

/// Counts indexed `[x][a][b][β]` with `b` over the Pauli bases X, Y, Z.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TomographyCounts {
    labels: Vec<String>,
    counts: Vec<[[[u64; 2]; 3]; 3]>,
}

impl TomographyCounts {
    pub fn zeros(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self { labels, counts: vec![[[[0; 2]; 3]; 3]; n] }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn settings(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, x: usize, a: Outcome, b: Basis, beta: usize) -> u64 {
        self.counts[x][a.index()][b.index()][beta]
    }

    pub fn set(&mut self, x: usize, a: Outcome, b: Basis, beta: usize, n: u64) {
        self.counts[x][a.index()][b.index()][beta] = n;
    }

    pub fn add(&mut self, x: usize, a: Outcome, b: Basis, beta: usize, n: u64) {
        self.counts[x][a.index()][b.index()][beta] += n;
    }

    /// Number of trials recorded for configuration `(x, b)`.
    pub fn total_per_config(&self, x: usize, b: Basis) -> u64 {
        Outcome::ALL.iter().map(|a| self.counts[x][a.index()][b.index()].iter().sum::<u64>()).sum()
    }

    pub fn total(&self) -> u64 {
        (0..self.settings()).flat_map(|x| Basis::ALL.map(|b| self.total_per_config(x, b))).sum()
    }

    /// Multiplies every count by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        let mut c = self.clone();
        c.counts.iter_mut().flatten().flatten().flatten().for_each(|n| *n *= k);
        c
    }

    /// Counts rounded from exact probabilities, `trials` per configuration.
    pub fn from_probabilities(table: &ProbabilityTable, labels: Vec<String>, trials: u64) -> Self {
        let mut c = Self::zeros(labels);
        for (x, per_basis) in table.p.iter().enumerate() {
            for (bi, &b) in table.bases.iter().enumerate() {
                for a in Outcome::ALL {
                    for beta in 0..2 {
                        let n = (per_basis[bi][a.index()][beta] * trials as f64).round().max(0.0);
                        c.set(x, a, b, beta, n as u64);
                    }
                }
            }
        }
        c
    }

    /// Tab-separated rows `x a b beta count` under a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("x\ta\tb\tbeta\tcount\n");
        for (x, label) in self.labels.iter().enumerate() {
            for a in Outcome::ALL {
                for b in Basis::ALL {
                    for beta in 0..2 {
                        let _ = writeln!(out, "{label}\t{a}\t{}\t{beta}\t{}", b.label(), self.get(x, a, b, beta));
                    }
                }
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: &str| AssemblageError::Parse { line, msg: msg.into() };
        let mut rows = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let l = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("x\t")) {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [x, a, b, beta, n] = f.as_slice() else { return Err(perr(l, "expected 5 tab-separated fields")) };
            let a = Outcome::parse(a).ok_or_else(|| perr(l, "bad outcome"))?;
            let b = Basis::parse(b).ok_or_else(|| perr(l, "bad basis"))?;
            let beta: usize = match *beta {
                "0" => 0,
                "1" => 1,
                _ => return Err(perr(l, "bad Bob outcome")),
            };
            let n: u64 = n.parse().map_err(|_| perr(l, "bad count"))?;
            if !labels.iter().any(|s| s == x) {
                labels.push(x.to_string());
            }
            rows.push((x.to_string(), a, b, beta, n));
        }
        if labels.is_empty() {
            return Err(perr(0, "no count rows"));
        }
        let mut c = Self::zeros(labels);
        for (x, a, b, beta, n) in rows {
            let xi = c.labels.iter().position(|s| *s == x).expect("label registered above");
            c.add(xi, a, b, beta, n);
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOptions {
    pub max_iter: usize,
    /// Stop once the projected-gradient step norm divided by the step size
    /// drops below this.
    pub stationarity_tol: f64,
    /// Also run from a second starting point and report the likelihood gap.
    pub second_start: bool,
    /// Keep the per-iteration log-likelihood values.
    pub record_trace: bool,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self { max_iter: 5000, stationarity_tol: 1e-9, second_start: false, record_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlFit {
    pub assemblage: Assemblage,
    /// Multinomial log-likelihood `Σ n log p` (without the combinatorial constant).
    pub log_likelihood: f64,
    pub iterations: usize,
    pub stationarity: f64,
    /// `|ℓ₁ − ℓ₂| / N` between the two starts, when a second start was run.
    pub second_start_gap: Option<f64>,
    pub trace: Vec<f64>,
}

/// Maximum-likelihood physical assemblage for the given counts.
pub fn ml_reconstruct(c: &TomographyCounts) -> Result<Assemblage> {
    Ok(ml_reconstruct_with(c, &MlOptions::default())?.assemblage)
}

pub fn ml_reconstruct_with(c: &TomographyCounts, opts: &MlOptions) -> Result<MlFit> {
    let nx = c.settings();
    for x in 0..nx {
        for b in Basis::ALL {
            if c.total_per_config(x, b) == 0 {
                return Err(AssemblageError::InsufficientData(format!(
                    "no counts for setting {} with Bob basis {}",
                    c.labels[x],
                    b.label()
                )));
            }
        }
    }
    let problem = MlProblem::new(c);
    // Start at σ_{a|x} = q_{a|x}·𝟙/2 with q the observed outcome frequencies.
    let start: Vec<ComplexMatrix> = (0..nx)
        .flat_map(|x| {
            let tot: u64 = Basis::ALL.iter().map(|&b| c.total_per_config(x, b)).sum();
            Outcome::ALL.map(|a| {
                let n: u64 = Basis::ALL.iter().map(|&b| c.get(x, a, b, 0) + c.get(x, a, b, 1)).sum();
                ComplexMatrix::identity(2).scale(0.5 * n as f64 / tot as f64)
            })
        })
        .collect();
    let start = project_feasible(&start, nx);
    let first = problem.ascend(start, opts)?;
    let second_start_gap = if opts.second_start {
        // Uniform start: σ_{a|x} = 𝟙/6.
        let uniform = vec![ComplexMatrix::identity(2).scale(1.0 / 6.0); 3 * nx];
        let second = problem.ascend(uniform, opts)?;
        Some((first.1 - second.1).abs())
    } else {
        None
    };
    let members = first.0.chunks(3).map(|t| [t[0].clone(), t[1].clone(), t[2].clone()]).collect();
    Ok(MlFit {
        assemblage: Assemblage::new(c.labels.clone(), members)?,
        log_likelihood: first.1 * problem.total,
        iterations: first.2,
        stationarity: first.3,
        second_start_gap,
        trace: first.4.into_iter().map(|l| l * problem.total).collect(),
    })
}

struct MlProblem {
    nx: usize,
    /// Frequencies `n / N` indexed `[x][a][b][β]`.
    freq: Vec<[[[f64; 2]; 3]; 3]>,
    total: f64,
    proj: [[ComplexMatrix; 2]; 3],
}

type AscentResult = (Vec<ComplexMatrix>, f64, usize, f64, Vec<f64>);

impl MlProblem {
    fn new(c: &TomographyCounts) -> Self {
        let total = c.total() as f64;
        let freq = c
            .counts
            .iter()
            .map(|t| t.map(|per_a| per_a.map(|per_b| per_b.map(|n| n as f64 / total))))
            .collect();
        let proj = Basis::ALL.map(|b| [b.projector(0), b.projector(1)]);
        Self { nx: c.settings(), freq, total, proj }
    }

    /// Normalized log-likelihood `Σ f log p`; `-∞` when an observed event
    /// gets non-positive probability.
    fn loglik(&self, s: &[ComplexMatrix]) -> f64 {
        let mut l = 0.0;
        for x in 0..self.nx {
            for a in 0..3 {
                for b in 0..3 {
                    for beta in 0..2 {
                        let f = self.freq[x][a][b][beta];
                        if f > 0.0 {
                            let p = self.proj[b][beta].trace_product(&s[3 * x + a]);
                            if p <= 0.0 {
                                return f64::NEG_INFINITY;
                            }
                            l += f * p.ln();
                        }
                    }
                }
            }
        }
        l
    }

    fn gradient(&self, s: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
        let mut g = vec![ComplexMatrix::zeros(2); 3 * self.nx];
        for x in 0..self.nx {
            for a in 0..3 {
                for b in 0..3 {
                    for beta in 0..2 {
                        let f = self.freq[x][a][b][beta];
                        if f > 0.0 {
                            let p = self.proj[b][beta].trace_product(&s[3 * x + a]);
                            g[3 * x + a] = &g[3 * x + a] + &self.proj[b][beta].scale(f / p);
                        }
                    }
                }
            }
        }
        g
    }

    /// Monotone projected-gradient ascent with Armijo backtracking.
    fn ascend(&self, start: Vec<ComplexMatrix>, opts: &MlOptions) -> Result<AscentResult> {
        let mut s = start;
        let mut l = self.loglik(&s);
        let mut trace = Vec::new();
        if opts.record_trace {
            trace.push(l);
        }
        let mut tau = 1.0;
        // Smallest gradient-mapping norm seen. Once steps stop changing the
        // log-likelihood in floating point this is the best available
        // measure of how close the iterate is to stationary.
        let mut stationarity = f64::INFINITY;
        let mut iterations = 0;
        for it in 0..opts.max_iter {
            iterations = it + 1;
            let g = self.gradient(&s);
            let mut accepted = None;
            while tau > 1e-16 {
                let trial: Vec<ComplexMatrix> = s.iter().zip(&g).map(|(a, b)| a + &b.scale(tau)).collect();
                let cand = project_feasible(&trial, self.nx);
                let d: Vec<ComplexMatrix> = cand.iter().zip(&s).map(|(a, b)| a - b).collect();
                let dn = d.iter().map(|m| m.frobenius_norm().powi(2)).sum::<f64>().sqrt();
                let ascent: f64 = g.iter().zip(&d).map(|(a, b)| a.trace_product(b)).sum();
                let lc = self.loglik(&cand);
                if lc >= l + 1e-4 * ascent && lc >= l {
                    accepted = Some((cand, lc, dn));
                    break;
                }
                tau *= 0.5;
            }
            let Some((cand, lc, dn)) = accepted else { break };
            let stalled = tau < 1e-10;
            if !stalled {
                stationarity = stationarity.min(dn / tau);
            }
            s = cand;
            l = lc;
            if opts.record_trace {
                trace.push(l);
            }
            if stationarity < opts.stationarity_tol || stalled {
                break;
            }
            tau = (tau * 2.0).min(1e6);
        }
        if stationarity >= opts.stationarity_tol.max(1e-6) {
            return Err(AssemblageError::NonConvergence { iterations, stationarity });
        }
        Ok((s, l, iterations, stationarity, trace))
    }
}

/// Projects `v` (stacked σ_{a|x}) onto the intersection of the PSD cones
/// with the affine set {Σ_a σ_{a|x} equal across x, trace 1}.
///
/// In orthonormal Pauli coordinates a 2×2 PSD matrix is a point of the
/// Lorentz cone, so the projection is found by semismooth Newton on the
/// (tiny) dual of the projection problem. A final affine correction and a
/// mix towards the feasible centre `σ_{a|x} = 𝟙/6` make the output exactly
/// feasible.
fn project_feasible(v: &[ComplexMatrix], nx: usize) -> Vec<ComplexMatrix> {
    let vc: Vec<[f64; 4]> = v.iter().map(to_coords).collect();
    let m = 4 * (nx - 1) + 1;
    // Row j of the constraint map applied to variable i, coordinate k.
    let coeff = |j: usize, i: usize, k: usize| -> f64 {
        let x = i / 3;
        if j == m - 1 {
            return if x == 0 && k == 0 { std::f64::consts::SQRT_2 } else { 0.0 };
        }
        let (row_x, row_k) = (j / 4 + 1, j % 4);
        if k != row_k {
            0.0
        } else if x == row_x {
            1.0
        } else if x == 0 {
            -1.0
        } else {
            0.0
        }
    };
    let mut b = vec![0.0; m];
    b[m - 1] = 1.0;
    let shifted = |y: &[f64]| -> Vec<[f64; 4]> {
        vc.iter()
            .enumerate()
            .map(|(i, r)| {
                let mut w = *r;
                for (j, yj) in y.iter().enumerate() {
                    for (k, wk) in w.iter_mut().enumerate() {
                        *wk += yj * coeff(j, i, k);
                    }
                }
                w
            })
            .collect()
    };
    let residual = |p: &[[f64; 4]]| -> Vec<f64> {
        (0..m)
            .map(|j| b[j] - p.iter().enumerate().map(|(i, r)| (0..4).map(|k| coeff(j, i, k) * r[k]).sum::<f64>()).sum::<f64>())
            .collect()
    };
    let dual = |y: &[f64], p: &[[f64; 4]]| -> f64 {
        -0.5 * p.iter().flatten().map(|v| v * v).sum::<f64>() + b.iter().zip(y).map(|(b, y)| b * y).sum::<f64>()
    };
    let mut y = vec![0.0; m];
    let mut p: Vec<[f64; 4]> = shifted(&y).iter().map(soc_project).collect();
    for _ in 0..100 {
        let g = residual(&p);
        if g.iter().fold(0.0f64, |a, v| a.max(v.abs())) < 1e-15 {
            break;
        }
        let w = shifted(&y);
        let mut h = RealMatrix::zeros(m, m);
        for (i, wi) in w.iter().enumerate() {
            let jac = soc_jacobian(wi);
            for j1 in 0..m {
                for j2 in 0..m {
                    let mut s = 0.0;
                    for k1 in 0..4 {
                        let c1 = coeff(j1, i, k1);
                        if c1 == 0.0 {
                            continue;
                        }
                        for k2 in 0..4 {
                            s += c1 * jac[k1][k2] * coeff(j2, i, k2);
                        }
                    }
                    h[(j1, j2)] += s;
                }
            }
        }
        for j in 0..m {
            h[(j, j)] += 1e-12;
        }
        let Ok(dy) = solve_linear(&h, &g) else { break };
        let d0 = dual(&y, &p);
        let slope: f64 = g.iter().zip(&dy).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let yn: Vec<f64> = y.iter().zip(&dy).map(|(a, d)| a + t * d).collect();
            let pn: Vec<[f64; 4]> = shifted(&yn).iter().map(soc_project).collect();
            if dual(&yn, &pn) >= d0 + 1e-4 * t * slope {
                y = yn;
                p = pn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let mut x = project_affine(&p.iter().map(from_coords).collect::<Vec<_>>(), nx);
    let lmin = x
        .iter()
        .map(|m| linalg::min_eigenvalue(m).unwrap_or(f64::NEG_INFINITY))
        .fold(f64::INFINITY, f64::min);
    if lmin < 0.0 {
        let c = 1.0 / 6.0;
        let t = -lmin / (c - lmin);
        let centre = ComplexMatrix::identity(2).scale(c);
        x = x.iter().map(|m| &m.scale(1.0 - t) + &centre.scale(t)).collect();
    }
    x
}

/// `H = (h₀𝟙 + h₁X + h₂Y + h₃Z)/√2`, an isometry onto ℝ⁴.
fn to_coords(m: &ComplexMatrix) -> [f64; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        s * (m[(0, 0)].re + m[(1, 1)].re),
        s * (m[(0, 1)].re + m[(1, 0)].re),
        s * (m[(1, 0)].im - m[(0, 1)].im),
        s * (m[(0, 0)].re - m[(1, 1)].re),
    ]
}

fn from_coords(h: &[f64; 4]) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_vec(vec![
        C64::new(s * (h[0] + h[3]), 0.0),
        C64::new(s * h[1], -s * h[2]),
        C64::new(s * h[1], s * h[2]),
        C64::new(s * (h[0] - h[3]), 0.0),
    ])
}

/// Projection onto the Lorentz cone `h₀ ≥ ‖(h₁, h₂, h₃)‖`.
fn soc_project(h: &[f64; 4]) -> [f64; 4] {
    let r = (h[1] * h[1] + h[2] * h[2] + h[3] * h[3]).sqrt();
    if r <= h[0] {
        *h
    } else if r <= -h[0] {
        [0.0; 4]
    } else {
        let a = 0.5 * (h[0] + r);
        [a, a * h[1] / r, a * h[2] / r, a * h[3] / r]
    }
}

fn soc_jacobian(h: &[f64; 4]) -> [[f64; 4]; 4] {
    let r = (h[1] * h[1] + h[2] * h[2] + h[3] * h[3]).sqrt();
    let mut j = [[0.0; 4]; 4];
    if r <= h[0] {
        for (k, row) in j.iter_mut().enumerate() {
            row[k] = 1.0;
        }
    } else if r > -h[0] {
        let u = [h[1] / r, h[2] / r, h[3] / r];
        let q = h[0] / r;
        j[0][0] = 0.5;
        for a in 0..3 {
            j[0][a + 1] = 0.5 * u[a];
            j[a + 1][0] = 0.5 * u[a];
            for c in 0..3 {
                let id = if a == c { 1.0 } else { 0.0 };
                j[a + 1][c + 1] = 0.5 * ((1.0 + q) * id - q * u[a] * u[c]);
            }
        }
    }
    j
}

/// Frobenius projection onto {Σ_a σ_{a|x} = R for all x, Tr R = 1}.
fn project_affine(v: &[ComplexMatrix], nx: usize) -> Vec<ComplexMatrix> {
    let sums: Vec<ComplexMatrix> = v.chunks(3).map(|t| &(&t[0] + &t[1]) + &t[2]).collect();
    let mut mean = ComplexMatrix::zeros(2);
    for s in &sums {
        mean = &mean + &s.scale(1.0 / nx as f64);
    }
    let r = &mean + &ComplexMatrix::identity(2).scale((1.0 - mean.trace().re) / 2.0);
    v.iter()
        .enumerate()
        .map(|(i, m)| (m + &(&r - &sums[i / 3]).scale(1.0 / 3.0)).hermitian_part())
        .collect()
}
