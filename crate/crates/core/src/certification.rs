//! Certified randomness from an assemblage.
//!
//! * guessing probability of Alice's outcome at `x*` for an eavesdropper who
//!   splits the assemblage into `{σ^e_{a|x}}`, and the min-entropy;
//! * the local-hidden-state value μ (μ < 0 witnesses steering);
//! * the dual steering functional `F_{a|x}` and its value β;
//! * bootstrap dispersion of the min-entropy from tomography counts.
//!
//! Eve's guess ranges over the full outcome alphabet `{0, 1, Ø}`. With a
//! binary guess the SDP bound would not capture the loss threshold: a local
//! model that reproduces a lossy assemblage generally needs to predict the
//! null outcome too.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assemblage::{
    born_probabilities, ml_reconstruct_with, validate, Assemblage, AssemblageError, Basis, MlOptions, Outcome,
    TomographyCounts, ValidationReport,
};
use crate::linalg::{self, ComplexMatrix, C64};
use crate::par::Execution;
use crate::sdp::{self, BlockKind, Constraint, Sense, SdpError, SdpProblem, SdpSolution, SdpStatus};
use crate::simulator::multinomial;

/// Tolerance at which an input assemblage must validate.
pub const INPUT_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertError {
    #[error("assemblage is not valid at tolerance 1e-7: {0:?}")]
    InvalidAssemblage(ValidationReport),
    #[error("SDP solver returned status {0:?}")]
    Solver(SdpStatus),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Assemblage(#[from] AssemblageError),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, CertError>;

/// `{𝟙, X, Y, Z}`: a real basis of 2×2 Hermitian matrices with `Tr(E_k E_l) = 2δ_kl`.
fn pauli_basis() -> [ComplexMatrix; 4] {
    [ComplexMatrix::identity(2), ComplexMatrix::pauli_x(), ComplexMatrix::pauli_y(), ComplexMatrix::pauli_z()]
}

fn require_valid(a: &Assemblage) -> Result<()> {
    let r = validate(a, INPUT_TOL);
    if r.passed {
        Ok(())
    } else {
        Err(CertError::InvalidAssemblage(r))
    }
}

fn require_optimal(s: &SdpSolution) -> Result<()> {
    if s.is_optimal() {
        Ok(())
    } else {
        Err(CertError::Solver(s.status))
    }
}

/// Eve's split of the assemblage, one part per guess `e ∈ {0, 1, Ø}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EveDecomposition {
    pub parts: Vec<Assemblage>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionCheck {
    /// Largest element of `Σ_e σ^e_{a|x} − σ_{a|x}`.
    pub sum_deviation: f64,
    /// Largest element-wise difference of `Σ_a σ^e_{a|x}` across settings.
    pub nonsignaling_deviation: f64,
    /// Largest negative part of any eigenvalue.
    pub psd_violation: f64,
}

impl EveDecomposition {
    pub fn check(&self, a: &Assemblage) -> DecompositionCheck {
        let mut sum_deviation: f64 = 0.0;
        for x in 0..a.settings() {
            for o in Outcome::ALL {
                let mut s = ComplexMatrix::zeros(2);
                for p in &self.parts {
                    s = &s + p.sigma(x, o);
                }
                sum_deviation = sum_deviation.max(s.max_abs_diff(a.sigma(x, o)));
            }
        }
        let mut nonsignaling_deviation: f64 = 0.0;
        let mut psd_violation: f64 = 0.0;
        for p in &self.parts {
            let r = validate(p, f64::INFINITY);
            nonsignaling_deviation = nonsignaling_deviation.max(r.nonsignaling_deviation);
            psd_violation = psd_violation.max(r.psd_violation);
        }
        DecompositionCheck { sum_deviation, nonsignaling_deviation, psd_violation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuessingResult {
    pub p_guess: f64,
    pub decomposition: EveDecomposition,
    /// Raw SDP optimum before clamping to `[max_a Tr σ_{a|x*}, 1]`.
    pub sdp_value: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Eigenvalues of `σ_{a|x}` at or below this are treated as exact zeros.
const SUPPORT_TOL: f64 = 1e-10;

/// Orthonormal basis of the support of a 2×2 Hermitian matrix.
fn support(m: &ComplexMatrix) -> Vec<Vec<C64>> {
    let eig = linalg::eigh(&m.hermitian_part()).expect("Hermitian part is Hermitian");
    eig.values.iter().zip(eig.vectors).filter(|(v, _)| **v > SUPPORT_TOL).map(|(_, v)| v).collect()
}

/// `V† M V` for the basis columns `V`.
fn compress(m: &ComplexMatrix, v: &[Vec<C64>]) -> ComplexMatrix {
    let r = v.len();
    let mut out = ComplexMatrix::zeros(r);
    for i in 0..r {
        for j in 0..r {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..2 {
                for l in 0..2 {
                    acc += v[i][k].conj() * m[(k, l)] * v[j][l];
                }
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// `V Y V†`
fn expand(y: &ComplexMatrix, v: &[Vec<C64>]) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(2);
    for (i, vi) in v.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            for k in 0..2 {
                for l in 0..2 {
                    out[(k, l)] += vi[k] * y[(i, j)] * vj[l].conj();
                }
            }
        }
    }
    out
}

/// A guessing SDP together with the map back to Eve's decomposition.
///
/// Every `σ^e_{a|x}` must lie under `σ_{a|x}`, so it is parameterized as
/// `V Y V†` on the support `V` of `σ_{a|x}`. Without this reduction a
/// rank-deficient assemblage (the ideal singlet one, or a boundary ML fit)
/// leaves the SDP with no strictly feasible point and the interior-point
/// iterates stall.
#[derive(Debug, Clone)]
pub struct GuessingSdp {
    pub problem: SdpProblem,
    /// Block index for `(e, x, a)`, `None` when `σ_{a|x}` vanishes.
    blocks: Vec<Option<usize>>,
    supports: Vec<Vec<Vec<C64>>>,
    nx: usize,
}

impl GuessingSdp {
    fn index(&self, e: usize, x: usize, o: usize) -> usize {
        (e * self.nx + x) * 3 + o
    }

    fn part(&self, sol: &SdpSolution, e: usize, x: usize, o: usize) -> ComplexMatrix {
        match self.blocks[self.index(e, x, o)] {
            Some(b) => expand(&sol.primal_blocks[b], &self.supports[x * 3 + o]),
            None => ComplexMatrix::zeros(2),
        }
    }
}

/// Builds the guessing-probability SDP for Alice's outcome at `x_star`.
pub fn guessing_problem(a: &Assemblage, x_star: usize) -> GuessingSdp {
    let nx = a.settings();
    let supports: Vec<Vec<Vec<C64>>> =
        (0..nx).flat_map(|x| Outcome::ALL.map(|o| support(a.sigma(x, o)))).collect();
    let mut p = SdpProblem::new(Sense::Maximize);
    let mut blocks = vec![None; 3 * nx * 3];
    for e in Outcome::ALL {
        for x in 0..nx {
            for o in Outcome::ALL {
                let r = supports[x * 3 + o.index()].len();
                if r > 0 {
                    let b = p.add_block(format!("e{}_{}_{}", e, a.labels()[x], o), r, BlockKind::Hermitian);
                    blocks[(e.index() * nx + x) * 3 + o.index()] = Some(b);
                }
            }
        }
    }
    let idx = |e: usize, x: usize, o: usize| (e * nx + x) * 3 + o;
    for e in 0..3 {
        if let Some(b) = blocks[idx(e, x_star, e)] {
            p.set_objective(b, ComplexMatrix::identity(supports[x_star * 3 + e].len()));
        }
    }
    for x in 0..nx {
        for o in 0..3 {
            let v = &supports[x * 3 + o];
            let target = compress(a.sigma(x, Outcome::ALL[o]), v);
            let basis = match v.len() {
                0 => continue,
                1 => vec![ComplexMatrix::identity(1)],
                _ => pauli_basis().to_vec(),
            };
            for ek in &basis {
                let mut c = Constraint::new(ek.trace_product(&target));
                for e in 0..3 {
                    c = c.term(blocks[idx(e, x, o)].expect("support is non-empty"), ek.clone());
                }
                p.add_constraint(c);
            }
        }
    }
    for e in 0..3 {
        for x in 1..nx {
            for ek in &pauli_basis() {
                let mut c = Constraint::new(0.0);
                for o in 0..3 {
                    for (xx, sign) in [(x, 1.0), (0, -1.0)] {
                        if let Some(b) = blocks[idx(e, xx, o)] {
                            c = c.term(b, compress(ek, &supports[xx * 3 + o]).scale(sign));
                        }
                    }
                }
                p.add_constraint(c);
            }
        }
    }
    GuessingSdp { problem: p, blocks, supports, nx }
}

/// Maximum probability that Eve guesses Alice's outcome at setting `x_star`.
pub fn guessing_probability(a: &Assemblage, x_star: usize) -> Result<GuessingResult> {
    require_valid(a)?;
    if x_star >= a.settings() {
        return Err(CertError::Domain(format!("x* index {x_star} out of range")));
    }
    let g = guessing_problem(a, x_star);
    let sol = sdp::solve(&g.problem)?;
    require_optimal(&sol)?;
    let nx = a.settings();
    let parts = (0..3)
        .map(|e| {
            let members = (0..nx).map(|x| [0, 1, 2].map(|o| g.part(&sol, e, x, o))).collect();
            Assemblage::new(a.labels().to_vec(), members)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let floor = Outcome::ALL.iter().map(|&o| a.sigma(x_star, o).trace().re).fold(0.0, f64::max);
    Ok(GuessingResult {
        p_guess: sol.primal_value.clamp(floor, 1.0),
        decomposition: EveDecomposition { parts },
        sdp_value: sol.primal_value,
        gap: sol.gap,
        iterations: sol.iterations,
    })
}

/// `−log₂ p_guess`
pub fn min_entropy(p_guess: f64) -> Result<f64> {
    if !(p_guess > 0.0 && p_guess <= 1.0) {
        return Err(CertError::Domain(format!("p_guess = {p_guess} outside (0, 1]")));
    }
    // `+ 0.0` turns the -0.0 at p_guess = 1 into 0.0.
    Ok(-p_guess.log2() + 0.0)
}

/// Deterministic response functions `λ: settings → {0, 1, Ø}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicStrategy {
    /// `table[x]` is the outcome produced at setting `x`.
    pub table: Vec<Outcome>,
}

impl DeterministicStrategy {
    /// All `3^nx` strategies; setting 0 varies slowest.
    pub fn all(nx: usize) -> Vec<DeterministicStrategy> {
        let total = 3usize.pow(nx as u32);
        (0..total)
            .map(|mut k| {
                let mut table = vec![Outcome::Zero; nx];
                for slot in table.iter_mut().rev() {
                    *slot = Outcome::ALL[k % 3];
                    k /= 3;
                }
                DeterministicStrategy { table }
            })
            .collect()
    }

    /// `D(a|x,λ)`
    pub fn d(&self, a: Outcome, x: usize) -> f64 {
        if self.table[x] == a {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LhsResult {
    pub mu: f64,
    pub strategies: Vec<DeterministicStrategy>,
    /// `σ_λ`, one per strategy.
    pub sigma_lambda: Vec<ComplexMatrix>,
    pub gap: f64,
    pub iterations: usize,
}

/// `max μ s.t. Σ_λ D(a|x,λ) σ_λ = σ_{a|x}, σ_λ ⪰ μ𝟙`, with `σ_λ = X_λ + μ𝟙`
/// and `X_λ ⪰ 0`.
pub fn lhs_mu(a: &Assemblage) -> Result<LhsResult> {
    require_valid(a)?;
    let nx = a.settings();
    let strategies = DeterministicStrategy::all(nx);
    let mut p = SdpProblem::new(Sense::Maximize);
    for l in 0..strategies.len() {
        p.add_block(format!("lambda{l}"), 2, BlockKind::Hermitian);
    }
    let mu = p.add_free("mu", 1.0);
    let basis = pauli_basis();
    for x in 0..nx {
        for o in Outcome::ALL {
            let members: Vec<usize> = (0..strategies.len()).filter(|&l| strategies[l].d(o, x) == 1.0).collect();
            for ek in &basis {
                let mut c = Constraint::new(ek.trace_product(a.sigma(x, o)));
                for &l in &members {
                    c = c.term(l, ek.clone());
                }
                c = c.free_term(mu, ek.trace().re * members.len() as f64);
                p.add_constraint(c);
            }
        }
    }
    let sol = sdp::solve(&p)?;
    require_optimal(&sol)?;
    let mu_val = sol.free_values[mu];
    let sigma_lambda = sol.primal_blocks.iter().map(|x| x + &ComplexMatrix::identity(2).scale(mu_val)).collect();
    Ok(LhsResult { mu: mu_val, strategies, sigma_lambda, gap: sol.gap, iterations: sol.iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringFunctional {
    /// `F_{a|x}` indexed `[x][a]`.
    pub f: Vec<[ComplexMatrix; 3]>,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalCheck {
    /// Largest negative part of an eigenvalue of `Σ_{a,x} F_{a|x} D(a|x,λ)`.
    pub psd_violation: f64,
    /// `|Tr Σ_λ Σ_{a,x} F_{a|x} D(a|x,λ) − 1|`
    pub normalization_deviation: f64,
}

impl SteeringFunctional {
    /// `Z_λ = Σ_{a,x} F_{a|x} D(a|x,λ)`
    pub fn z_lambda(&self, s: &DeterministicStrategy) -> ComplexMatrix {
        let mut z = ComplexMatrix::zeros(2);
        for (x, fx) in self.f.iter().enumerate() {
            z = &z + &fx[s.table[x].index()];
        }
        z
    }

    pub fn check(&self) -> FunctionalCheck {
        let strategies = DeterministicStrategy::all(self.f.len());
        let mut psd_violation: f64 = 0.0;
        let mut tr = 0.0;
        for s in &strategies {
            let z = self.z_lambda(s);
            tr += z.trace().re;
            let l = linalg::min_eigenvalue(&z.hermitian_part()).unwrap_or(f64::NEG_INFINITY);
            psd_violation = psd_violation.max(-l);
        }
        FunctionalCheck { psd_violation: psd_violation.max(0.0), normalization_deviation: (tr - 1.0).abs() }
    }

    /// `β = Tr Σ_{a,x} F_{a|x} σ_{a|x}`
    pub fn evaluate(&self, a: &Assemblage) -> f64 {
        let mut b = 0.0;
        for (x, fx) in self.f.iter().enumerate() {
            for o in Outcome::ALL {
                b += fx[o.index()].trace_product(a.sigma(x, o));
            }
        }
        b
    }
}

/// Solves the dual of the LHS problem:
/// `min Σ Tr F_{a|x} σ_{a|x} s.t. Σ_{a,x} F_{a|x} D(a|x,λ) ⪰ 0 ∀λ,
/// Σ_λ Tr Σ_{a,x} F_{a|x} D(a|x,λ) = 1`.
///
/// `F_{Ø|x}` is fixed to zero for every setting after the first; this removes
/// exactly the shifts `F_{a|0} → F_{a|0} + H`, `F_{a|x} → F_{a|x} − H` that
/// leave every `Z_λ` unchanged.
pub fn steering_functional(a: &Assemblage) -> Result<SteeringFunctional> {
    require_valid(a)?;
    let nx = a.settings();
    let strategies = DeterministicStrategy::all(nx);
    let basis = pauli_basis();
    let mut p = SdpProblem::new(Sense::Minimize);
    for l in 0..strategies.len() {
        p.add_block(format!("z{l}"), 2, BlockKind::Hermitian);
    }
    // Free coordinates f_{x,a,k} with F_{a|x} = Σ_k f_{x,a,k} E_k / 2.
    let mut var = vec![[[None; 4]; 3]; nx];
    for x in 0..nx {
        for o in Outcome::ALL {
            if x > 0 && o == Outcome::Null {
                continue;
            }
            for (k, ek) in basis.iter().enumerate() {
                let obj = 0.5 * ek.trace_product(a.sigma(x, o));
                var[x][o.index()][k] = Some(p.add_free(format!("f_{}_{}_{}", a.labels()[x], o, k), obj));
            }
        }
    }
    for (l, s) in strategies.iter().enumerate() {
        for (k, ek) in basis.iter().enumerate() {
            // Tr(E_k Z_λ) − Σ_x f_{x,λ(x),k} · Tr(E_k E_k)/2 = 0
            let mut c = Constraint::new(0.0).term(l, ek.clone());
            for (x, vx) in var.iter().enumerate() {
                if let Some(v) = vx[s.table[x].index()][k] {
                    c = c.free_term(v, -1.0);
                }
            }
            p.add_constraint(c);
        }
    }
    let mut norm = Constraint::new(1.0);
    for l in 0..strategies.len() {
        norm = norm.term(l, ComplexMatrix::identity(2));
    }
    p.add_constraint(norm);
    let sol = sdp::solve(&p)?;
    require_optimal(&sol)?;
    let f: Vec<[ComplexMatrix; 3]> = var
        .iter()
        .map(|vx| {
            let mk = |o: usize| {
                let mut m = ComplexMatrix::zeros(2);
                for (k, ek) in basis.iter().enumerate() {
                    if let Some(v) = vx[o][k] {
                        m = &m + &ek.scale(0.5 * sol.free_values[v]);
                    }
                }
                m
            };
            [mk(0), mk(1), mk(2)]
        })
        .collect();
    let mut func = SteeringFunctional { f, beta: 0.0 };
    // Renormalize so that Σ_λ Tr Z_λ = 1 holds to rounding.
    let tr: f64 = strategies.iter().map(|s| func.z_lambda(s).trace().re).sum();
    if tr > 0.0 {
        func.f = func.f.iter().map(|t| [t[0].scale(1.0 / tr), t[1].scale(1.0 / tr), t[2].scale(1.0 / tr)]).collect();
    }
    func.beta = func.evaluate(a);
    Ok(func)
}

/// The setting with the larger min-entropy; ties go to the first setting.
pub fn choose_x_star(a: &Assemblage) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for x in 0..a.settings() {
        let h = min_entropy(guessing_probability(a, x)?.p_guess)?;
        if h > best.1 + 1e-9 {
            best = (x, h);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uncertainty {
    pub h_min_mean: f64,
    pub h_min_std: f64,
    pub resamples: usize,
    pub failed: usize,
}

/// Parametric bootstrap of the min-entropy: counts are redrawn per
/// configuration from the Born probabilities of the maximum-likelihood fit,
/// each resample is reconstructed and certified again. Resample `i` uses the
/// ChaCha stream `i` of `seed`, so results do not depend on scheduling.
pub fn uncertainty(c: &TomographyCounts, resamples: usize, seed: u64, x_star: usize, exec: Execution) -> Result<Uncertainty> {
    if resamples < 100 {
        return Err(CertError::Domain(format!("at least 100 resamples are required, got {resamples}")));
    }
    let fit = ml_reconstruct_with(c, &MlOptions::default())?.assemblage;
    let table = born_probabilities(&fit, &Basis::ALL);
    let one = |i: usize| -> Option<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut rc = TomographyCounts::zeros(c.labels().to_vec());
        for x in 0..c.settings() {
            for b in Basis::ALL {
                let probs: Vec<f64> =
                    Outcome::ALL.iter().flat_map(|&o| [table.get(x, b, o, 0), table.get(x, b, o, 1)]).collect();
                let draw = multinomial(&mut rng, c.total_per_config(x, b), &probs);
                for (k, n) in draw.into_iter().enumerate() {
                    rc.set(x, Outcome::ALL[k / 2], b, k % 2, n);
                }
            }
        }
        let a = ml_reconstruct_with(&rc, &MlOptions::default()).ok()?.assemblage;
        let g = guessing_probability(&a, x_star).ok()?;
        min_entropy(g.p_guess).ok()
    };
    let hs = exec.map_range(resamples, one);
    let ok: Vec<f64> = hs.iter().flatten().copied().collect();
    let failed = resamples - ok.len();
    if ok.len() < 2 {
        return Err(CertError::Domain(format!("{failed} of {resamples} bootstrap resamples failed")));
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let var = ok.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Uncertainty { h_min_mean: mean, h_min_std: var.sqrt(), resamples: ok.len(), failed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationResult {
    pub p_guess: f64,
    pub h_min: f64,
    pub mu: f64,
    pub functional: SteeringFunctional,
    pub beta: f64,
    pub x_star: String,
    pub uncertainty: Option<Uncertainty>,
    pub guess_gap: f64,
    pub guess_iterations: usize,
    pub lhs_gap: f64,
    pub lhs_iterations: usize,
}

/// Runs the guessing-probability, LHS and functional SDPs. `x_star = None`
/// selects the setting automatically.
pub fn certify(a: &Assemblage, x_star: Option<usize>) -> Result<CertificationResult> {
    let x = match x_star {
        Some(x) => x,
        None => choose_x_star(a)?,
    };
    let g = guessing_probability(a, x)?;
    let lhs = lhs_mu(a)?;
    let functional = steering_functional(a)?;
    Ok(CertificationResult {
        p_guess: g.p_guess,
        h_min: min_entropy(g.p_guess)?,
        mu: lhs.mu,
        beta: functional.beta,
        functional,
        x_star: a.labels()[x].clone(),
        uncertainty: None,
        guess_gap: g.gap,
        guess_iterations: g.iterations,
        lhs_gap: lhs.gap,
        lhs_iterations: lhs.iterations,
    })
}

impl CertificationResult {
    /// `key = value` lines.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "x_star = {}", self.x_star);
        let _ = writeln!(s, "p_guess = {:.12}", self.p_guess);
        let _ = writeln!(s, "h_min = {:.12}", self.h_min);
        let _ = writeln!(s, "mu = {:.12e}", self.mu);
        let _ = writeln!(s, "beta = {:.12e}", self.beta);
        match &self.uncertainty {
            Some(u) => {
                let _ = writeln!(s, "h_min_bootstrap_mean = {:.12}", u.h_min_mean);
                let _ = writeln!(s, "h_min_bootstrap_std = {:.12}", u.h_min_std);
                let _ = writeln!(s, "bootstrap_resamples = {}", u.resamples);
                let _ = writeln!(s, "bootstrap_failed = {}", u.failed);
            }
            None => {
                let _ = writeln!(s, "h_min_bootstrap_std = none");
            }
        }
        let _ = writeln!(s, "guess_sdp_gap = {:.3e}", self.guess_gap);
        let _ = writeln!(s, "guess_sdp_iterations = {}", self.guess_iterations);
        let _ = writeln!(s, "lhs_sdp_gap = {:.3e}", self.lhs_gap);
        let _ = writeln!(s, "lhs_sdp_iterations = {}", self.lhs_iterations);
        for (x, fx) in self.functional.f.iter().enumerate() {
            for o in Outcome::ALL {
                let m = &fx[o.index()];
                let _ = writeln!(
                    s,
                    "F[{x}][{o}] = {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e}",
                    m[(0, 0)].re,
                    m[(0, 0)].im,
                    m[(0, 1)].re,
                    m[(0, 1)].im,
                    m[(1, 0)].re,
                    m[(1, 0)].im,
                    m[(1, 1)].re,
                    m[(1, 1)].im
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn min_entropy_examples() {
        assert_abs_diff_eq!(min_entropy(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(min_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(min_entropy(0.97133).unwrap(), 0.04197, epsilon = 1e-5);
        assert!(min_entropy(0.0).is_err());
        assert!(min_entropy(1.01).is_err());
    }

    #[test]
    fn strategies_enumerated() {
        let s = DeterministicStrategy::all(2);
        assert_eq!(s.len(), 9);
        for st in &s {
            for x in 0..2 {
                let total: f64 = Outcome::ALL.iter().map(|&a| st.d(a, x)).sum();
                assert_eq!(total, 1.0);
            }
        }
        let mut tables: Vec<_> = s.iter().map(|t| t.table.clone()).collect();
        tables.dedup();
        assert_eq!(tables.len(), 9);
    }
}
