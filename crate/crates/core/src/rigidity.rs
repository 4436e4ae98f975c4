//! Horizon-bounded empirical checks for the boundedness properties of orbit
//! streams: bounded letter powers, the rank-2 starred variant after a basis
//! change, and candidate (basis, letter) suggestions from classified
//! representatives.

use thiserror::Error;

use crate::freegroup::{
    extend_to_basis, to_basis_a_bak, BasisError, CyclicWord, FreeMap, FreeMapError, Word,
    DEFAULT_LETTER_CAP,
};
use crate::graph::{primitive_loop_crossing, GraphError, Subgraph};
use crate::trainmap::{bcc_estimate, pf_classify, PfClass, TopRep, TrainMapError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RigidityError {
    #[error("free map error: {0}")]
    FreeMap(#[from] FreeMapError),
    #[error("basis error: {0}")]
    Basis(#[from] BasisError),
    #[error("graph error: {0}")]
    Graph(#[from] GraphError),
    #[error("train map error: {0}")]
    TrainMap(#[from] TrainMapError),
    #[error("property check needs rank 2, got {0}")]
    NotRankTwo(usize),
}

/// Orbit direction selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

/// Horizon-bounded report on max letter powers across a stream.
#[derive(Clone, Debug)]
pub struct PropertyWReport {
    pub letter: usize,
    pub n_lo: i64,
    pub n_hi: i64,
    /// observed bound M = max over the stream
    pub observed_m: usize,
    /// the max was already attained in the first three quarters of samples
    pub stabilized: bool,
    pub per_n: Vec<(i64, usize)>,
    pub truncated_forward: Option<i64>,
    pub truncated_backward: Option<i64>,
}

impl PropertyWReport {
    pub fn truncated(&self) -> bool {
        self.truncated_forward.is_some() || self.truncated_backward.is_some()
    }
}

/// Max powers of a letter over a finite stream of cyclic words; evidence
/// only — never a claim about the infinite set.
pub fn check_property_w<'a>(
    stream: impl IntoIterator<Item = (i64, &'a CyclicWord)>,
    letter: usize,
) -> PropertyWReport {
    let mut per_n: Vec<(i64, usize)> = stream
        .into_iter()
        .map(|(n, w)| (n, w.max_power(letter)))
        .collect();
    per_n.sort_by_key(|&(n, _)| n);
    let observed_m = per_n.iter().map(|&(_, k)| k).max().unwrap_or(0);
    // stabilized when the bound was already attained away from the horizon
    // edge: restrict to |n| at most three quarters of the largest |n|
    let n_max = per_n
        .iter()
        .map(|&(n, _)| n.unsigned_abs())
        .max()
        .unwrap_or(0);
    let cutoff = n_max * 3 / 4;
    let early = per_n
        .iter()
        .filter(|&&(n, _)| n.unsigned_abs() <= cutoff)
        .map(|&(_, k)| k)
        .max()
        .unwrap_or(0);
    PropertyWReport {
        letter,
        n_lo: per_n.first().map_or(0, |&(n, _)| n),
        n_hi: per_n.last().map_or(0, |&(n, _)| n),
        observed_m,
        stabilized: !per_n.is_empty() && early == observed_m,
        per_n,
        truncated_forward: None,
        truncated_backward: None,
    }
}

/// Runs the orbit in the requested direction(s) and applies the letter-power
/// check to the resulting cyclic words.
pub fn check_property_p(
    phi: &FreeMap,
    g: &Word,
    letter: usize,
    horizon: i64,
    direction: Direction,
    letter_cap: usize,
) -> Result<PropertyWReport, RigidityError> {
    let (n_lo, n_hi) = match direction {
        Direction::Forward => (0, horizon),
        Direction::Backward => (-horizon, 0),
        Direction::Both => (-horizon, horizon),
    };
    let orbit = phi.orbit(g, n_lo, n_hi, letter_cap)?;
    let mut report = check_property_w(orbit.samples.iter().map(|s| (s.n, &s.cyclic)), letter);
    report.truncated_forward = orbit.truncated_forward;
    report.truncated_backward = orbit.truncated_backward;
    Ok(report)
}

/// Convenience wrapper with the default letter cap.
pub fn check_property_p_default(
    phi: &FreeMap,
    g: &Word,
    letter: usize,
    horizon: i64,
    direction: Direction,
) -> Result<PropertyWReport, RigidityError> {
    check_property_p(phi, g, letter, horizon, direction, DEFAULT_LETTER_CAP)
}

/// Report of the rank-2 starred check after rewriting into the basis
/// {a, b′ = baᵏ}.
#[derive(Clone, Debug)]
pub struct PropertyWStarReport {
    pub k: u32,
    /// rewritten words lying inside ⟨b′⟩ (condition 1 violations)
    pub cond1_violations: Vec<CyclicWord>,
    /// (rewritten word, power t) with |t| ≥ 2 (condition 2 violations)
    pub cond2_violations: Vec<(CyclicWord, usize)>,
    /// rewritten form per input word
    pub rewritten: Vec<CyclicWord>,
}

impl PropertyWStarReport {
    pub fn holds(&self) -> bool {
        self.cond1_violations.is_empty() && self.cond2_violations.is_empty()
    }
}

/// Rewrites each word of a rank-2 stream via b ↦ b′a⁻ᵏ with k = M + 1 and
/// checks the starred conditions: no word falls inside ⟨b′⟩, and every b′
/// power is at most 1 in absolute value.
pub fn w_to_wstar(stream: &[CyclicWord], m: usize) -> Result<PropertyWStarReport, RigidityError> {
    let k = m as u32 + 1;
    let mut cond1_violations = Vec::new();
    let mut cond2_violations = Vec::new();
    let mut rewritten = Vec::new();
    for sigma in stream {
        if let Some(index) = sigma.max_index() {
            if index > 1 {
                return Err(RigidityError::NotRankTwo(index + 1));
            }
        }
        let out = to_basis_a_bak(sigma, k)?;
        let in_bprime = !out.is_empty() && out.letters().iter().all(|l| l.index() == 1);
        if in_bprime {
            cond1_violations.push(out.clone());
        }
        let t = out.max_power(1);
        if t >= 2 {
            cond2_violations.push((out.clone(), t));
        }
        rewritten.push(out);
    }
    Ok(PropertyWStarReport {
        k,
        cond1_violations,
        cond2_violations,
        rewritten,
    })
}

/// A candidate (basis, letter) pair for the rigidity pipeline.
#[derive(Clone, Debug)]
pub struct Candidate {
    /// the suggested primitive word in the standard basis
    pub word: Word,
    /// a certified automorphism carrying the standard basis to one
    /// containing the word, when available
    pub basis_cert: Option<FreeMap>,
    pub note: String,
}

/// Suggestion report with the classification evidence that produced it.
#[derive(Clone, Debug)]
pub struct SuggestReport {
    pub candidates: Vec<Candidate>,
    pub forward_top: PfClass,
    pub backward_top: PfClass,
    /// Some((m, verified)) when the crossing-bound inequality was used
    pub crossing_bound: Option<(usize, bool)>,
}

/// Proposes candidate letters from classified representatives of φ and φ⁻¹:
/// an NEG top stratum names its own edge; a pair of single-stratum EG
/// representatives admits every letter; otherwise a primitive loop crossing
/// the top stratum often enough is constructed.
pub fn suggest_pair(
    fwd: &TopRep,
    bwd: &TopRep,
    bcc_upper: Option<usize>,
) -> Result<SuggestReport, RigidityError> {
    let top_class = |f: &TopRep| pf_classify(&f.transition_matrix(f.n_strata() - 1));
    let forward_top = top_class(fwd)?;
    let backward_top = top_class(bwd)?;

    let mut candidates = Vec::new();
    let mut crossing_bound = None;

    let neg_candidate = |f: &TopRep| -> Option<Candidate> {
        let edges = f.stratum_edges(f.n_strata() - 1);
        let [e0] = edges[..] else { return None };
        // rose representative: stratum edge index is the generator index
        let word = Word::generator(e0);
        let cert = extend_to_basis(&word, f.graph().n_edges()).ok();
        Some(Candidate {
            word,
            basis_cert: cert.map(|c| c.automorphism),
            note: format!("top stratum is a single NEG edge {e0}"),
        })
    };

    match (&forward_top, &backward_top) {
        (PfClass::Neg | PfClass::Zero, _) => {
            if let Some(c) = neg_candidate(fwd) {
                candidates.push(c);
            }
        }
        (_, PfClass::Neg | PfClass::Zero) => {
            if let Some(c) = neg_candidate(bwd) {
                candidates.push(c);
            }
        }
        (PfClass::Eg { .. }, PfClass::Eg { .. }) => {
            if fwd.n_strata() == 1 && bwd.n_strata() == 1 {
                // single-stratum EG both ways: every letter qualifies
                for i in 0..fwd.graph().n_edges() {
                    let word = Word::generator(i);
                    candidates.push(Candidate {
                        word: word.clone(),
                        basis_cert: extend_to_basis(&word, fwd.graph().n_edges())
                            .ok()
                            .map(|c| c.automorphism),
                        note: "both representatives are single-stratum EG".into(),
                    });
                }
            } else {
                // reducible EG: construct a loop crossing the top stratum
                // at least M > 2(diam G' + BCC) times
                let bcc = bcc_upper.unwrap_or_else(|| bcc_estimate(bwd, 2));
                let m = 2 * (bwd.graph().diameter() + bcc) + 1;
                crossing_bound = Some((m, bcc_upper.is_some()));
                let g = fwd.graph();
                let top = fwd.stratum_edges(fwd.n_strata() - 1);
                let h = Subgraph::new(g, &top)?;
                let loop_out = primitive_loop_crossing(g, &h, top[0], m)?;
                let cert = extend_to_basis(&loop_out.word, g.n_edges()).ok();
                candidates.push(Candidate {
                    word: loop_out.word.clone(),
                    basis_cert: cert.map(|c| c.automorphism),
                    note: format!(
                        "primitive loop crossing top stratum >= {m} times ({:?})",
                        loop_out.certificate
                    ),
                });
            }
        }
    }

    Ok(SuggestReport {
        candidates,
        forward_top,
        backward_top,
        crossing_bound,
    })
}
