//! Stand-in for the photonic experiment: Werner states, tomography counts,
//! Poissonian time-tag streams with heralding loss, and coincidence search.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp};
use thiserror::Error;

use crate::assemblage::{born_probabilities, ideal_assemblage, AssemblageError, Basis, MeasurementSet, Outcome, TomographyCounts};
use crate::bits::BitString;
use crate::linalg::{tensor, ComplexMatrix, DensityMatrix, C64};

/// Picoseconds per second; timestamps are integer picoseconds.
pub const PS_PER_S: f64 = 1e12;

/// RNG stream used for tomography sampling.
const TOMOGRAPHY_STREAM: u64 = 0;
/// RNG stream used for time-tag generation.
const TAG_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("time tags of {0:?} are not sorted by timestamp")]
    Unsorted(Party),
    #[error("malformed time-tag file: {0}")]
    Format(String),
    #[error(transparent)]
    Assemblage(#[from] AssemblageError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub visibility: f64,
    pub eta_alice: f64,
    pub eta_bob: f64,
    /// Expected pairs per second.
    pub pair_rate: f64,
    pub trials_certification: u64,
    /// Seconds of time-tag stream for randomness generation.
    pub duration_rng: f64,
    /// Seconds.
    pub coincidence_window: f64,
    pub rng_seed: u64,
    /// Alice's setting during randomness generation.
    pub rng_setting: String,
    /// Uncorrelated detections per second and party.
    pub dark_rate: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            visibility: 0.99,
            eta_alice: 0.543,
            eta_bob: 1.0,
            pair_rate: 1e5,
            trials_certification: 1_000_000,
            duration_rng: 1.0,
            coincidence_window: 3e-9,
            rng_seed: 1,
            rng_setting: "X".into(),
            dark_rate: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if !(0.0..=1.0).contains(&self.visibility) {
            return bad("visibility must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eta_alice) {
            return bad("eta_alice must lie in [0, 1]");
        }
        if !(self.eta_bob > 0.0 && self.eta_bob <= 1.0) {
            return bad("eta_bob must lie in (0, 1]");
        }
        if !(self.pair_rate > 0.0 && self.pair_rate.is_finite()) {
            return bad("pair_rate must be positive");
        }
        if !(self.duration_rng >= 0.0 && self.duration_rng.is_finite()) {
            return bad("duration_rng must be non-negative");
        }
        if !(self.coincidence_window > 0.0 && self.coincidence_window.is_finite()) {
            return bad("coincidence_window must be positive");
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return bad("dark_rate must be non-negative");
        }
        Ok(())
    }
}

/// `V|Ψ−⟩⟨Ψ−| + (1−V)𝟙/4`
pub fn werner_state(v: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&v) {
        return Err(SimError::Config(format!("visibility {v} outside [0, 1]")));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let psi = ComplexMatrix::outer(&[z, C64::new(s, 0.0), C64::new(-s, 0.0), z]);
    let m = &psi.scale(v) + &ComplexMatrix::identity(4).scale((1.0 - v) / 4.0);
    DensityMatrix::new(m.hermitian_part()).map_err(|e| SimError::Config(e.to_string()))
}

/// Multinomial draw of `n` trials over `probs` by sequential conditional
/// binomials. Probabilities are renormalized; negative rounding noise is
/// clipped to zero.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let p: Vec<f64> = probs.iter().map(|&v| v.max(0.0)).collect();
    let mut rest_mass: f64 = p.iter().sum();
    let mut rest = n;
    let mut out = vec![0; p.len()];
    for (i, &pi) in p.iter().enumerate() {
        if rest == 0 {
            break;
        }
        if i + 1 == p.len() {
            out[i] = rest;
            break;
        }
        let q = if rest_mass > 0.0 { (pi / rest_mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(rest, q).expect("probability in [0, 1]").sample(rng);
        out[i] = k;
        rest -= k;
        rest_mass -= pi;
    }
    out
}

/// Tomography counts for the ideal assemblage of `werner_state(V)` with
/// Alice's efficiency `eta_alice`. The trials are split evenly over the
/// `(x, b)` configurations, earlier configurations taking the remainder.
pub fn simulate_tomography(cfg: &ExperimentConfig, m: &MeasurementSet) -> Result<TomographyCounts> {
    cfg.validate()?;
    let m = m.with_eta(cfg.eta_alice)?;
    let a = ideal_assemblage(&werner_state(cfg.visibility)?, &m)?;
    let table = born_probabilities(&a, &Basis::ALL);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(TOMOGRAPHY_STREAM);
    let configs = m.len() * Basis::ALL.len();
    let mut counts = TomographyCounts::zeros(m.labels().to_vec());
    for x in 0..m.len() {
        for b in Basis::ALL {
            let k = x * Basis::ALL.len() + b.index();
            let trials = cfg.trials_certification / configs as u64
                + u64::from((k as u64) < cfg.trials_certification % configs as u64);
            let probs: Vec<f64> = Outcome::ALL
                .iter()
                .flat_map(|&o| [table.get(x, b, o, 0), table.get(x, b, o, 1)])
                .collect();
            let draw = multinomial(&mut rng, trials, &probs);
            for (i, n) in draw.into_iter().enumerate() {
                counts.set(x, Outcome::ALL[i / 2], b, i % 2, n);
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    fn code(self) -> u8 {
        match self {
            Party::Alice => 0,
            Party::Bob => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeTag {
    pub party: Party,
    pub channel: u8,
    /// Picoseconds.
    pub timestamp: u64,
}

/// Indices of the two detections of one emitted pair, for test use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruePair {
    pub alice: usize,
    pub bob: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Streams {
    pub alice: Vec<TimeTag>,
    pub bob: Vec<TimeTag>,
    /// Pairs in which both photons were detected.
    pub truth: Vec<TruePair>,
    /// Pairs emitted in total.
    pub emitted: u64,
}

impl Streams {
    /// Ground-truth pairing as tab-separated `alice_index bob_index` rows.
    pub fn truth_log(&self) -> String {
        let mut s = String::from("alice\tbob\n");
        for p in &self.truth {
            s.push_str(&format!("{}\t{}\n", p.alice, p.bob));
        }
        s
    }
}

/// Joint distribution of (Alice channel, Bob channel) for setting `x`, with
/// Bob measuring in the matching Pauli basis.
fn joint_channel_probabilities(rho: &DensityMatrix, m: &MeasurementSet, x: usize) -> Result<[f64; 4]> {
    let bob_basis = match m.labels()[x].as_str() {
        "X" => Basis::X,
        "Y" => Basis::Y,
        _ => Basis::Z,
    };
    let mut p = [0.0; 4];
    for (ai, a) in [Outcome::Zero, Outcome::One].into_iter().enumerate() {
        for beta in 0..2 {
            let op = tensor(&m.effect(x, a), &bob_basis.projector(beta)).map_err(AssemblageError::from)?;
            p[2 * ai + beta] = op.trace_product(rho.matrix()).max(0.0);
        }
    }
    Ok(p)
}

/// Poisson pair emission over `duration_rng`; each photon is detected
/// independently with its party's efficiency and lands on the channel drawn
/// from the joint quantum statistics at Alice's RNG setting. Optional dark
/// detections are uncorrelated Poisson processes on a random channel.
pub fn simulate_streams(cfg: &ExperimentConfig, m: &MeasurementSet) -> Result<Streams> {
    cfg.validate()?;
    let x = m
        .labels()
        .iter()
        .position(|l| *l == cfg.rng_setting)
        .ok_or_else(|| SimError::Config(format!("rng_setting {} is not a measurement setting", cfg.rng_setting)))?;
    let rho = werner_state(cfg.visibility)?;
    let joint = joint_channel_probabilities(&rho, m, x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(TAG_STREAM);
    let end_ps = (cfg.duration_rng * PS_PER_S).round() as u64;

    // Tags carry the index of their emitted pair (or u64::MAX for dark counts)
    // until sorting fixes the final positions.
    let mut alice: Vec<(TimeTag, u64)> = Vec::new();
    let mut bob: Vec<(TimeTag, u64)> = Vec::new();
    let gap = Exp::new(cfg.pair_rate).expect("positive rate");
    let mut t = 0.0;
    let mut emitted = 0u64;
    loop {
        t += gap.sample(&mut rng);
        let ts = (t * PS_PER_S).round() as u64;
        if ts >= end_ps {
            break;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = 3;
        for (i, p) in joint.iter().enumerate() {
            acc += p;
            if u < acc {
                k = i;
                break;
            }
        }
        let (ca, cb) = ((k / 2) as u8, (k % 2) as u8);
        let det_a = rng.random::<f64>() < cfg.eta_alice;
        let det_b = rng.random::<f64>() < cfg.eta_bob;
        if det_a {
            alice.push((TimeTag { party: Party::Alice, channel: ca, timestamp: ts }, emitted));
        }
        if det_b {
            bob.push((TimeTag { party: Party::Bob, channel: cb, timestamp: ts }, emitted));
        }
        emitted += 1;
    }
    if cfg.dark_rate > 0.0 {
        let dark = Exp::new(cfg.dark_rate).expect("positive rate");
        for (party, list) in [(Party::Alice, &mut alice), (Party::Bob, &mut bob)] {
            let mut t = 0.0;
            loop {
                t += dark.sample(&mut rng);
                let ts = (t * PS_PER_S).round() as u64;
                if ts >= end_ps {
                    break;
                }
                let channel = u8::from(rng.random::<bool>());
                list.push((TimeTag { party, channel, timestamp: ts }, u64::MAX));
            }
        }
    }
    alice.sort_by_key(|(tag, id)| (tag.timestamp, *id));
    bob.sort_by_key(|(tag, id)| (tag.timestamp, *id));
    let mut alice_pos = std::collections::HashMap::new();
    for (i, (_, id)) in alice.iter().enumerate() {
        if *id != u64::MAX {
            alice_pos.insert(*id, i);
        }
    }
    let truth = bob
        .iter()
        .enumerate()
        .filter(|(_, (_, id))| *id != u64::MAX)
        .filter_map(|(j, (_, id))| alice_pos.get(id).map(|&i| TruePair { alice: i, bob: j }))
        .collect();
    Ok(Streams {
        alice: alice.into_iter().map(|(t, _)| t).collect(),
        bob: bob.into_iter().map(|(t, _)| t).collect(),
        truth,
        emitted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coincidence {
    pub alice_index: usize,
    pub bob_index: usize,
    pub alice: TimeTag,
    pub bob: TimeTag,
}

fn check_sorted(tags: &[TimeTag], party: Party) -> Result<()> {
    if tags.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(SimError::Unsorted(party));
    }
    Ok(())
}

/// Greedy earliest-match pairing: each Bob tag, in time order, takes the
/// earliest unused Alice tag with `|Δt| ≤ window`.
pub fn coincidences(alice: &[TimeTag], bob: &[TimeTag], window: f64) -> Result<Vec<Coincidence>> {
    check_sorted(alice, Party::Alice)?;
    check_sorted(bob, Party::Bob)?;
    let w = (window * PS_PER_S).round() as u64;
    let mut out = Vec::new();
    let mut i = 0;
    for (j, b) in bob.iter().enumerate() {
        while i < alice.len() && alice[i].timestamp + w < b.timestamp {
            i += 1;
        }
        if i < alice.len() && alice[i].timestamp <= b.timestamp + w {
            out.push(Coincidence { alice_index: i, bob_index: j, alice: alice[i], bob: *b });
            i += 1;
        }
    }
    Ok(out)
}

/// Alice's channel per coincidence, in Bob-timestamp order.
pub fn raw_bits(pairs: &[Coincidence]) -> BitString {
    let mut b = BitString::new();
    for p in pairs {
        b.push(p.alice.channel == 1);
    }
    b
}

const TAG_MAGIC: &str = "# steer time-tags v1";
const HEADER_END: &str = "# end-header";

/// Writes a text header of `key = value` lines followed by 10-byte
/// little-endian records (party u8, channel u8, timestamp u64 ps).
pub fn write_time_tags<W: Write>(mut w: W, header: &[(String, String)], tags: &[TimeTag]) -> io::Result<()> {
    writeln!(w, "{TAG_MAGIC}")?;
    for (k, v) in header {
        writeln!(w, "{k} = {v}")?;
    }
    writeln!(w, "records = {}", tags.len())?;
    writeln!(w, "{HEADER_END}")?;
    let mut buf = Vec::with_capacity(tags.len() * 10);
    for t in tags {
        buf.push(t.party.code());
        buf.push(t.channel);
        buf.extend_from_slice(&t.timestamp.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_time_tags<R: BufRead>(mut r: R) -> Result<(Vec<(String, String)>, Vec<TimeTag>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != TAG_MAGIC {
        return Err(SimError::Format("missing magic line".into()));
    }
    let mut header = Vec::new();
    let mut records = None;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(SimError::Format("header not terminated".into()));
        }
        let l = line.trim_end();
        if l == HEADER_END {
            break;
        }
        let (k, v) = l.split_once(" = ").ok_or_else(|| SimError::Format(format!("bad header line {l:?}")))?;
        if k == "records" {
            records = Some(v.parse::<usize>().map_err(|_| SimError::Format("bad record count".into()))?);
        } else {
            header.push((k.to_string(), v.to_string()));
        }
    }
    let n = records.ok_or_else(|| SimError::Format("missing record count".into()))?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() != 10 * n {
        return Err(SimError::Format(format!("expected {} record bytes, found {}", 10 * n, data.len())));
    }
    let tags = data
        .chunks_exact(10)
        .map(|c| {
            let party = match c[0] {
                0 => Party::Alice,
                1 => Party::Bob,
                p => return Err(SimError::Format(format!("unknown party code {p}"))),
            };
            if c[1] > 1 {
                return Err(SimError::Format(format!("unknown channel {}", c[1])));
            }
            Ok(TimeTag { party, channel: c[1], timestamp: u64::from_le_bytes(c[2..10].try_into().expect("8 bytes")) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tag(party: Party, channel: u8, ps: u64) -> TimeTag {
        TimeTag { party, channel, timestamp: ps }
    }

    #[test]
    fn werner_limits_and_spectrum() {
        let w1 = werner_state(1.0).unwrap();
        assert_abs_diff_eq!(w1.matrix()[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w1.matrix()[(1, 2)].re, -0.5, epsilon = 1e-15);
        let w0 = werner_state(0.0).unwrap();
        assert!(w0.matrix().max_abs_diff(&ComplexMatrix::identity(4).scale(0.25)) < 1e-15);
        let e = crate::linalg::eigh(werner_state(0.99).unwrap().matrix()).unwrap();
        for (got, want) in e.values.iter().zip([0.0025, 0.0025, 0.0025, 0.9925]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert!(werner_state(1.1).is_err());
    }

    #[test]
    fn multinomial_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = multinomial(&mut rng, 1000, &[0.2, 0.0, 0.5, 0.3]);
        assert_eq!(d.iter().sum::<u64>(), 1000);
        assert_eq!(d[1], 0);
        assert_eq!(multinomial(&mut rng, 0, &[0.5, 0.5]), vec![0, 0]);
    }

    #[test]
    fn coincidence_window_examples() {
        let a = [tag(Party::Alice, 0, 1000)];
        let b = [tag(Party::Bob, 1, 2000)];
        assert_eq!(coincidences(&a, &b, 3e-9).unwrap().len(), 1);
        let b = [tag(Party::Bob, 1, 6000)];
        assert!(coincidences(&a, &b, 3e-9).unwrap().is_empty());
        let unsorted = [tag(Party::Alice, 0, 5), tag(Party::Alice, 0, 1)];
        assert!(matches!(coincidences(&unsorted, &b, 3e-9), Err(SimError::Unsorted(Party::Alice))));
    }

    #[test]
    fn raw_bit_mapping() {
        assert!(raw_bits(&[]).is_empty());
        let pairs: Vec<Coincidence> = [1u8, 0, 0, 1]
            .iter()
            .enumerate()
            .map(|(i, &c)| Coincidence {
                alice_index: i,
                bob_index: i,
                alice: tag(Party::Alice, c, i as u64),
                bob: tag(Party::Bob, 0, i as u64),
            })
            .collect();
        assert_eq!(raw_bits(&pairs).to_string(), "1001");
    }

    #[test]
    fn time_tag_file_round_trip() {
        let tags = vec![tag(Party::Alice, 1, 17), tag(Party::Bob, 0, u64::MAX - 3)];
        let header = vec![("seed".to_string(), "42".to_string())];
        let mut buf = Vec::new();
        write_time_tags(&mut buf, &header, &tags).unwrap();
        let (h, t) = read_time_tags(&buf[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(t, tags);
        assert!(read_time_tags(&buf[..buf.len() - 1]).is_err());
    }
}
