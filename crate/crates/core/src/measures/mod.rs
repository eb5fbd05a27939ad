//! Equal-weight atomic measures and Wasserstein-1 distances between them.
//!
//! Every measure here is uniform over its atoms (weight `1/N`). Exact W1
//! between measures with the same atom count is an assignment problem; the
//! sorted-order coupling solves it in one dimension. Measures with different
//! atom counts go through [`w1_sinkhorn`] or, when the least common multiple
//! of the counts is small, through replication and exact assignment.

mod assignment;
pub mod sinkhorn;

use crate::error::{Error, Result};
use crate::vec;

pub use sinkhorn::{SinkhornOptions, SinkhornOutcome};

/// Default atom cap for [`w1_exact_assignment`].
pub const ASSIGNMENT_CAP: usize = 512;

/// A uniform measure over `len()` atoms, each a point of dimension
/// `atom_dim()`, stored contiguously.
pub trait AtomicMeasure: Sync {
    fn atom_dim(&self) -> usize;
    fn coords(&self) -> &[f64];

    fn len(&self) -> usize {
        self.coords().len() / self.atom_dim()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn atom(&self, i: usize) -> &[f64] {
        let d = self.atom_dim();
        &self.coords()[i * d..(i + 1) * d]
    }

    fn atoms(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords().chunks_exact(self.atom_dim())
    }
}

/// `(1/N) Σ δ_{x_i}` on `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    coords: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        check_layout(dim, coords.len())?;
        Ok(EmpiricalMeasure { dim, coords })
    }

    /// One-dimensional measure from scalar atoms.
    pub fn from_scalars(atoms: &[f64]) -> Result<Self> {
        Self::new(1, atoms.to_vec())
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("atoms of unequal dimension"));
        }
        Self::new(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> Vec<f64> {
        vec::mean(&self.coords, self.dim)
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl AtomicMeasure for EmpiricalMeasure {
    fn atom_dim(&self) -> usize {
        self.dim
    }
    fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// `(1/N) Σ δ_{(x_i, r_i)}` on `R^d × R^d`; atom `i` is `[x_i, r_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMeasure {
    dim: usize,
    coords: Vec<f64>,
}

impl PhaseMeasure {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        check_layout(2 * dim, coords.len())?;
        Ok(PhaseMeasure { dim, coords })
    }

    /// Interleaves state and costate blocks given as `N·d` arrays.
    pub fn from_parts(dim: usize, x: &[f64], r: &[f64]) -> Result<Self> {
        if x.len() != r.len() {
            return Err(Error::CountMismatch {
                left: x.len(),
                right: r.len(),
            });
        }
        check_layout(dim, x.len())?;
        let mut coords = Vec::with_capacity(2 * x.len());
        for (xi, ri) in x.chunks_exact(dim).zip(r.chunks_exact(dim)) {
            coords.extend_from_slice(xi);
            coords.extend_from_slice(ri);
        }
        Ok(PhaseMeasure { dim, coords })
    }

    /// State dimension `d` (atoms live in `R^{2d}`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self, i: usize) -> &[f64] {
        let w = 2 * self.dim;
        &self.coords[i * w..i * w + self.dim]
    }

    pub fn r(&self, i: usize) -> &[f64] {
        let w = 2 * self.dim;
        &self.coords[i * w + self.dim..(i + 1) * w]
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|i| self.x(i).to_vec()).collect()
    }

    pub fn r_coords(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|i| self.r(i).to_vec()).collect()
    }
}

impl AtomicMeasure for PhaseMeasure {
    fn atom_dim(&self) -> usize {
        2 * self.dim
    }
    fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Vector-valued measure `(1/N) Σ u_i δ_{atom_i}` over a uniform base.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorMeasure<B> {
    base: B,
    payload_dim: usize,
    payload: Vec<f64>,
}

impl<B: AtomicMeasure> VectorMeasure<B> {
    pub fn new(base: B, payload_dim: usize, payload: Vec<f64>) -> Result<Self> {
        if payload_dim == 0 || payload.len() != base.len() * payload_dim {
            return Err(Error::CountMismatch {
                left: base.len() * payload_dim,
                right: payload.len(),
            });
        }
        Ok(VectorMeasure {
            base,
            payload_dim,
            payload,
        })
    }

    pub fn base(&self) -> &B {
        &self.base
    }

    pub fn payload_dim(&self) -> usize {
        self.payload_dim
    }

    pub fn payload(&self, i: usize) -> &[f64] {
        &self.payload[i * self.payload_dim..(i + 1) * self.payload_dim]
    }

    pub fn payloads(&self) -> &[f64] {
        &self.payload
    }
}

fn check_layout(width: usize, len: usize) -> Result<()> {
    if width == 0 {
        return Err(Error::invalid("atom dimension must be positive"));
    }
    if len == 0 {
        return Err(Error::invalid("a measure needs at least one atom"));
    }
    if len % width != 0 {
        return Err(Error::invalid(format!(
            "{len} coordinates do not split into atoms of width {width}"
        )));
    }
    Ok(())
}

fn check_same_shape<A: AtomicMeasure, B: AtomicMeasure>(a: &A, b: &B) -> Result<()> {
    if a.atom_dim() != b.atom_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.atom_dim(),
            found: b.atom_dim(),
        });
    }
    if a.len() != b.len() {
        return Err(Error::CountMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Exact W1 for one-dimensional equal-weight measures: the mean gap between
/// sorted atoms. Stable sort, so equal atoms pair in index order.
pub fn w1_exact_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: if a.dim() != 1 { a.dim() } else { b.dim() },
        });
    }
    check_same_shape(a, b)?;
    let mut xa = a.coords().to_vec();
    let mut xb = b.coords().to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let total: f64 = xa.iter().zip(&xb).map(|(p, q)| (p - q).abs()).sum();
    Ok(total / xa.len() as f64)
}

/// Exact W1 between equal-size uniform measures by optimal assignment.
pub fn w1_exact_assignment<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: AtomicMeasure,
    B: AtomicMeasure,
{
    w1_exact_assignment_capped(a, b, ASSIGNMENT_CAP)
}

pub fn w1_exact_assignment_capped<A, B>(a: &A, b: &B, cap: usize) -> Result<f64>
where
    A: AtomicMeasure,
    B: AtomicMeasure,
{
    check_same_shape(a, b)?;
    let n = a.len();
    if n > cap {
        return Err(Error::AssignmentCap { n, cap });
    }
    let cost = distance_matrix(a, b);
    let (_, total) = assignment::solve(&cost, n);
    Ok(total / n as f64)
}

/// Exact W1 between uniform measures of sizes `n`, `m` by replicating atoms
/// up to `lcm(n, m)` copies; errors if that exceeds the assignment cap.
pub fn w1_exact_replicated<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: AtomicMeasure,
    B: AtomicMeasure,
{
    if a.atom_dim() != b.atom_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.atom_dim(),
            found: b.atom_dim(),
        });
    }
    let l = lcm(a.len(), b.len());
    if l > ASSIGNMENT_CAP {
        return Err(Error::AssignmentCap {
            n: l,
            cap: ASSIGNMENT_CAP,
        });
    }
    let ra = replicate(a, l / a.len());
    let rb = replicate(b, l / b.len());
    let cost = distance_matrix(&ra, &rb);
    let (_, total) = assignment::solve(&cost, l);
    Ok(total / l as f64)
}

/// Entropic W1 with uniform weights `1/n`, `1/m`; default solver options.
pub fn w1_sinkhorn<A, B>(a: &A, b: &B, eps: f64) -> Result<SinkhornOutcome>
where
    A: AtomicMeasure,
    B: AtomicMeasure,
{
    w1_sinkhorn_with(a, b, eps, &SinkhornOptions::default())
}

pub fn w1_sinkhorn_with<A, B>(
    a: &A,
    b: &B,
    eps: f64,
    opts: &SinkhornOptions,
) -> Result<SinkhornOutcome>
where
    A: AtomicMeasure,
    B: AtomicMeasure,
{
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("sinkhorn eps must be positive, got {eps}")));
    }
    if a.atom_dim() != b.atom_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.atom_dim(),
            found: b.atom_dim(),
        });
    }
    let wa = vec![1.0 / a.len() as f64; a.len()];
    let wb = vec![1.0 / b.len() as f64; b.len()];
    let cost = distance_matrix(a, b);
    Ok(sinkhorn::solve(&wa, &wb, &cost, eps, opts))
}

/// Largest Euclidean norm over atoms.
pub fn support_radius<M: AtomicMeasure>(m: &M) -> f64 {
    m.atoms().map(vec::norm).fold(0.0, f64::max)
}

/// First-block projection `π¹_# ν`.
pub fn push_x(m: &PhaseMeasure) -> EmpiricalMeasure {
    EmpiricalMeasure {
        dim: m.dim(),
        coords: m.x_coords(),
    }
}

fn distance_matrix<A: AtomicMeasure, B: AtomicMeasure>(a: &A, b: &B) -> Vec<f64> {
    let m = b.len();
    let mut cost = vec![0.0; a.len() * m];
    crate::par::fill_chunks(&mut cost, m, |i, row| {
        let p = a.atom(i);
        for (j, c) in row.iter_mut().enumerate() {
            *c = vec::dist(p, b.atom(j));
        }
    });
    cost
}

struct Replicated {
    dim: usize,
    coords: Vec<f64>,
}

impl AtomicMeasure for Replicated {
    fn atom_dim(&self) -> usize {
        self.dim
    }
    fn coords(&self) -> &[f64] {
        &self.coords
    }
}

fn replicate<A: AtomicMeasure>(a: &A, copies: usize) -> Replicated {
    let mut coords = Vec::with_capacity(a.coords().len() * copies);
    for p in a.atoms() {
        for _ in 0..copies {
            coords.extend_from_slice(p);
        }
    }
    Replicated {
        dim: a.atom_dim(),
        coords,
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}
