//! Label dynamics for agents carrying a mixed strategy.
//!
//! Each agent is `c = (x, λ)` with a position driven by the particle
//! dynamics of the base [`ProblemSpec`] and an uncontrolled label `λ ∈ R^n`.
//! Two label fields are provided:
//!
//! - Markov: `λ̇ = Q λ` with nonnegative off-diagonal rates and zero column
//!   sums, which keeps `λ` on the probability simplex.
//! - Entropic replicator: `λ̇ = S(c, ψ) + ε R(λ)` over a finite strategy set
//!   `U` with reference weights `η`, where
//!   `S(u) = (F(u) − Σ_{u'} η(u') λ(u') F(u')) λ(u)`,
//!   `R(u) = (Σ_{u'} η(u') λ(u') log λ(u') − log λ(u)) λ(u)`
//!   and `F(u) = ∫ J(x, u, x') dψ(x')`. Both terms conserve `Σ η λ`.
//!   The payoff is `J(x, u, x') = payoff(u) · exp(−|x − x'|² / σ²)`, or just
//!   `payoff(u)` when no interaction width is set.

use crate::problems::ProblemSpec;
use crate::vec;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum LabelDynamics {
    Markov {
        /// Row-major `n × n` rate matrix `Q`.
        rates: Vec<f64>,
    },
    Entropic {
        reference: Vec<f64>,
        payoff: Vec<f64>,
        width: Option<f64>,
        eps: f64,
        lower: f64,
        upper: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicatorState {
    pub x: Vec<f64>,
    pub labels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicatorProblem {
    pub spec: ProblemSpec,
    pub labels: LabelDynamics,
}

impl ReplicatorProblem {
    /// Seeded initial labels for `n` agents (`n × labels`, row per agent),
    /// each inside the invariant set: random simplex points for the Markov
    /// chain, bounded perturbations of the uniform density otherwise.
    pub fn sample_labels(&self, n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_6265_6c73);
        let k = self.labels.label_count();
        let mut out = Vec::with_capacity(n * k);
        for _ in 0..n {
            let mut row: Vec<f64> = match &self.labels {
                LabelDynamics::Markov { .. } => (0..k)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect(),
                LabelDynamics::Entropic {
                    reference,
                    lower,
                    upper,
                    ..
                } => {
                    let base = 1.0 / reference.iter().sum::<f64>();
                    let s = 0.25 * (1.0 - lower / base).min(upper / base - 1.0);
                    let xi: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
                    let centre = vec::dot(reference, &xi) * base;
                    xi.iter().map(|x| base * (1.0 + s * (x - centre))).collect()
                }
            };
            self.labels.renormalize(&mut row);
            out.extend(row);
        }
        out
    }
}

impl LabelDynamics {
    /// Symmetric chain with rate `q` between every pair of `n` states.
    pub fn uniform_chain(n: usize, q: f64) -> Self {
        let mut rates = vec![q; n * n];
        for i in 0..n {
            rates[i * n + i] = -(n as f64 - 1.0) * q;
        }
        LabelDynamics::Markov { rates }
    }

    pub fn label_count(&self) -> usize {
        match self {
            LabelDynamics::Markov { rates } => (rates.len() as f64).sqrt().round() as usize,
            LabelDynamics::Entropic { reference, .. } => reference.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter {
                name: name.into(),
                reason: reason.into(),
            })
        };
        match self {
            LabelDynamics::Markov { rates } => {
                let n = self.label_count();
                if n * n != rates.len() || n < 2 {
                    return bad("rates", "need a square matrix with at least 2 states");
                }
                for j in 0..n {
                    let mut col = 0.0;
                    for i in 0..n {
                        let q = rates[i * n + j];
                        if i != j && q < 0.0 {
                            return bad("rates", "off-diagonal rates must be nonnegative");
                        }
                        col += q;
                    }
                    if col.abs() > 1e-12 {
                        return bad("rates", "columns must sum to zero");
                    }
                }
            }
            LabelDynamics::Entropic {
                reference,
                payoff,
                width,
                eps,
                lower,
                upper,
            } => {
                if reference.len() < 2 || payoff.len() != reference.len() {
                    return bad("labels", "need at least 2 strategies with one payoff each");
                }
                if reference.iter().any(|&e| !(e > 0.0)) {
                    return bad("reference", "weights must be positive");
                }
                if width.is_some_and(|w| !(w > 0.0)) {
                    return bad("width", "must be positive");
                }
                if !(*eps >= 0.0) {
                    return bad("eps", "must be nonnegative");
                }
                let total: f64 = reference.iter().sum();
                if !(*lower > 0.0 && lower * total <= 1.0 && upper * total >= 1.0) {
                    return bad("lower", "need 0 < lower ≤ 1/η(U) ≤ upper");
                }
            }
        }
        Ok(())
    }

    /// The conserved quantity: `Σ λ` (Markov) or `Σ η λ` (entropic).
    pub fn conserved(&self, label: &[f64]) -> f64 {
        match self {
            LabelDynamics::Markov { .. } => label.iter().sum(),
            LabelDynamics::Entropic { reference, .. } => vec::dot(reference, label),
        }
    }

    /// Distance of `label` from the invariant set (0 inside).
    pub fn violation(&self, label: &[f64]) -> f64 {
        let mass = (self.conserved(label) - 1.0).abs();
        let (lo, hi) = match self {
            LabelDynamics::Markov { .. } => (0.0, f64::INFINITY),
            LabelDynamics::Entropic { lower, upper, .. } => (*lower, *upper),
        };
        label
            .iter()
            .map(|&l| (lo - l).max(l - hi).max(0.0))
            .fold(mass, f64::max)
    }

    /// Rescales `label` so the conserved quantity is exactly 1.
    pub fn renormalize(&self, label: &mut [f64]) {
        let s = self.conserved(label);
        label.iter_mut().for_each(|l| *l /= s);
    }

    /// `−Σ η λ log λ` (entropic) or `−Σ λ log λ` (Markov), with `0 log 0 = 0`.
    pub fn entropy(&self, label: &[f64]) -> f64 {
        let xlogx = |l: f64| if l > 0.0 { l * l.ln() } else { 0.0 };
        match self {
            LabelDynamics::Markov { .. } => -label.iter().map(|&l| xlogx(l)).sum::<f64>(),
            LabelDynamics::Entropic { reference, .. } => -reference
                .iter()
                .zip(label)
                .map(|(e, &l)| e * xlogx(l))
                .sum::<f64>(),
        }
    }

    /// Label velocity of agent `(x, label)` in the population with positions
    /// `positions` (`N·d`). No invariant check.
    pub(crate) fn rhs_into(&self, x: &[f64], label: &[f64], positions: &[f64], out: &mut [f64]) {
        match self {
            LabelDynamics::Markov { rates } => {
                let n = label.len();
                for i in 0..n {
                    out[i] = vec::dot(&rates[i * n..(i + 1) * n], label);
                }
            }
            LabelDynamics::Entropic {
                reference,
                payoff,
                width,
                eps,
                ..
            } => {
                let d = x.len();
                let spatial = match width {
                    Some(w) => {
                        let s2 = w * w;
                        positions
                            .chunks_exact(d)
                            .map(|y| (-vec::dist(x, y).powi(2) / s2).exp())
                            .sum::<f64>()
                            / (positions.len() / d) as f64
                    }
                    None => 1.0,
                };
                let mut avg_payoff = 0.0;
                let mut avg_log = 0.0;
                for ((e, &l), p) in reference.iter().zip(label).zip(payoff) {
                    avg_payoff += e * l * p * spatial;
                    avg_log += e * l * l.ln();
                }
                for (u, o) in out.iter_mut().enumerate() {
                    let l = label[u];
                    let s = (payoff[u] * spatial - avg_payoff) * l;
                    let r = (avg_log - l.ln()) * l;
                    *o = s + eps * r;
                }
            }
        }
    }
}

/// Label velocity of `state` in the population `psi`, after checking that
/// the label lies in its invariant set (tolerance 1e-6).
pub fn replicator_rhs(
    state: &ReplicatorState,
    psi: &[ReplicatorState],
    dynamics: &LabelDynamics,
) -> Result<Vec<f64>> {
    if state.labels.len() != dynamics.label_count() {
        return Err(Error::DimensionMismatch {
            expected: dynamics.label_count(),
            found: state.labels.len(),
        });
    }
    let violation = dynamics.violation(&state.labels);
    if violation > 1e-6 {
        return Err(Error::LabelInvariant { step: 0, violation });
    }
    let positions: Vec<f64> = psi.iter().flat_map(|c| c.x.iter().copied()).collect();
    if positions.is_empty() {
        return Err(Error::invalid("empty population"));
    }
    let mut out = vec![0.0; state.labels.len()];
    dynamics.rhs_into(&state.x, &state.labels, &positions, &mut out);
    Ok(out)
}
