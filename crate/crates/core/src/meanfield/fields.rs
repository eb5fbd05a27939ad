//! Control fields `ω(t_k, x)` fed to the limit Hamiltonian.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bin_of;
use crate::problems::{ControlSet, ProblemSpec};
use crate::vec;

/// A control as a function of time node and position. `None` marks points
/// where the field is undefined.
pub trait ControlField: Sync {
    fn value(&self, node: usize, x: &[f64]) -> Option<Vec<f64>>;
}

impl<F> ControlField for F
where
    F: Fn(usize, &[f64]) -> Option<Vec<f64>> + Sync,
{
    fn value(&self, node: usize, x: &[f64]) -> Option<Vec<f64>> {
        self(node, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantField(pub Vec<f64>);

impl ControlField for ConstantField {
    fn value(&self, _node: usize, _x: &[f64]) -> Option<Vec<f64>> {
        Some(self.0.clone())
    }
}

/// Mean payload per occupied cubic bin of side `delta`, per node.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedField {
    delta: f64,
    dim: usize,
    nodes: Vec<BTreeMap<Vec<i64>, Vec<f64>>>,
}

impl BinnedField {
    pub(crate) fn new(delta: f64, dim: usize, nodes: Vec<BTreeMap<Vec<i64>, Vec<f64>>>) -> Self {
        BinnedField { delta, dim, nodes }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Occupied bins of node `k` with their mean payloads, in bin order.
    pub fn bins(&self, k: usize) -> impl Iterator<Item = (&[i64], &[f64])> {
        self.nodes[k].iter().map(|(b, v)| (b.as_slice(), v.as_slice()))
    }
}

impl ControlField for BinnedField {
    fn value(&self, node: usize, x: &[f64]) -> Option<Vec<f64>> {
        self.nodes.get(node)?.get(&bin_of(x, self.delta)).cloned()
    }
}

/// `Π_K(offset + amplitude · sin(⟨frequency, x⟩ + phase))`, Lipschitz with
/// constant `|amplitude|·|frequency|`.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzField {
    pub offset: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub frequency: Vec<f64>,
    pub phase: f64,
    pub set: ControlSet,
}

impl LipschitzField {
    pub fn slope(&self) -> f64 {
        vec::norm(&self.amplitude) * vec::norm(&self.frequency)
    }

    fn wave(&self, x: &[f64]) -> f64 {
        (vec::dot(&self.frequency, x) + self.phase).sin()
    }

    pub(crate) fn random(rng: &mut ChaCha8Rng, set: &ControlSet, dim: usize, size: f64, max_slope: f64) -> Self {
        let m = set.half_width();
        let mut offset: Vec<f64> = (0..dim).map(|_| rng.random_range(-m..=m)).collect();
        set.project(&mut offset);
        let amplitude: Vec<f64> = (0..dim).map(|_| rng.random_range(-size..=size)).collect();
        let mut direction: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let norm = vec::norm(&direction).max(1e-12);
        let slope = rng.random_range(0.0..=max_slope);
        let scale = slope / (norm * vec::norm(&amplitude).max(1e-12));
        direction.iter_mut().for_each(|c| *c *= scale);
        LipschitzField {
            offset,
            amplitude,
            frequency: direction,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            set: set.clone(),
        }
    }
}

impl ControlField for LipschitzField {
    fn value(&self, _node: usize, x: &[f64]) -> Option<Vec<f64>> {
        let s = self.wave(x);
        let mut w: Vec<f64> = self.offset.iter().zip(&self.amplitude).map(|(o, a)| o + a * s).collect();
        self.set.project(&mut w);
        Some(w)
    }
}

/// `Π_K(w̄(t_k, x) + δω(x))` for a Lipschitz perturbation `δω` (its offset is
/// ignored).
pub struct PerturbedField<'a> {
    pub base: &'a BinnedField,
    pub perturbation: LipschitzField,
}

impl ControlField for PerturbedField<'_> {
    fn value(&self, node: usize, x: &[f64]) -> Option<Vec<f64>> {
        let mut w = self.base.value(node, x)?;
        let s = self.perturbation.wave(x);
        vec::axpy(s, &self.perturbation.amplitude, &mut w);
        self.perturbation.set.project(&mut w);
        Some(w)
    }
}

/// Trial family for the maximality check: `field` itself, the zero field,
/// `count` random Lipschitz fields with slope at most `max_slope`, and `count`
/// perturbations of `field` of size `0.2·M`.
pub fn trial_fields<'a>(
    p: &ProblemSpec,
    field: &'a BinnedField,
    count: usize,
    max_slope: f64,
    seed: u64,
) -> Vec<Box<dyn ControlField + 'a>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = p.control_set.half_width();
    let mut trials: Vec<Box<dyn ControlField + 'a>> = vec![Box::new(field.clone()), Box::new(ConstantField(vec![0.0; p.dim]))];
    for _ in 0..count {
        trials.push(Box::new(LipschitzField::random(&mut rng, &p.control_set, p.dim, m, max_slope)));
    }
    for _ in 0..count {
        let perturbation = LipschitzField::random(&mut rng, &p.control_set, p.dim, 0.2 * m, max_slope);
        trials.push(Box::new(PerturbedField { base: field, perturbation }));
    }
    trials
}
