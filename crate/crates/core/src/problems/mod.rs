//! Concrete control problems `(v, h, L, φ, K, Ψ̂₀, T)` with analytic spatial
//! and Wasserstein differentials.
//!
//! A [`ProblemSpec`] describes particles in `R^d` driven by
//! `ẋᵢ = v(xᵢ, ψ) + h(xᵢ, ψ) uᵢ` with the cost
//! `∫ L(ψₜ) dt + (1/N) Σᵢ ∫ φ(uᵢ) dt + g(ψ_T)`, where `φ(u) = (λ/2)|u|²`.
//! Fields are kernel-structured so that every Wasserstein differential is
//! available in closed form.
//!
//! Point evaluators (`eval_*`) take a single position and an
//! [`EmpiricalMeasure`]. The crate-internal bulk routines work on the whole
//! particle configuration and are what the integrators call.

mod entries;
pub mod kernel;
pub mod replicator;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::measures::{AtomicMeasure, EmpiricalMeasure};
use crate::vec;
use crate::{par, Error, Result};

pub use entries::{build, catalog, CatalogEntry, ParamDoc, Params, Problem};
pub use kernel::KernelField;
pub use replicator::{replicator_rhs, LabelDynamics, ReplicatorProblem, ReplicatorState};

/// Tolerance used when testing membership in `K`.
pub const CONTROL_SET_TOL: f64 = 1e-12;

/// Compact convex admissible control set containing 0.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlSet {
    /// `[−M, M]^d`.
    Box { half_width: f64 },
    /// Closed Euclidean ball of radius `M`.
    Ball { radius: f64 },
}

impl ControlSet {
    /// Nearest point of `K`, in place.
    pub fn project(&self, u: &mut [f64]) {
        match *self {
            ControlSet::Box { half_width } => {
                for c in u.iter_mut() {
                    *c = c.clamp(-half_width, half_width);
                }
            }
            ControlSet::Ball { radius } => {
                let n = vec::norm(u);
                if n > radius {
                    let s = radius / n;
                    u.iter_mut().for_each(|c| *c *= s);
                }
            }
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        match *self {
            ControlSet::Box { half_width } => {
                u.iter().all(|c| c.abs() <= half_width + CONTROL_SET_TOL)
            }
            ControlSet::Ball { radius } => vec::norm(u) <= radius + CONTROL_SET_TOL,
        }
    }

    /// `max_{u ∈ K} |u|` in dimension `d`.
    pub fn max_norm(&self, d: usize) -> f64 {
        match *self {
            ControlSet::Box { half_width } => half_width * (d as f64).sqrt(),
            ControlSet::Ball { radius } => radius,
        }
    }

    /// Per-axis half width of the bounding box.
    pub fn half_width(&self) -> f64 {
        match *self {
            ControlSet::Box { half_width } => half_width,
            ControlSet::Ball { radius } => radius,
        }
    }
}

/// Control activation `h(x, ψ)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Activation {
    Constant(f64),
    /// `b(x − β·mean(ψ))` with `b(z) = 1 / (1 + |z|²)`: control acts mostly
    /// near the (shifted) centre of mass.
    Bump { shift: f64 },
}

/// Running cost terms; `L` is their sum.
#[derive(Clone, Debug, PartialEq)]
pub enum RunningCost {
    /// `(α/2) ∫ |x − mean(ψ)|² dψ`.
    Variance { weight: f64 },
    /// `(α/2) ∫ |x − c|² dψ`.
    Target { weight: f64, center: Vec<f64> },
    /// `(α/2) ∬ exp(−|x − y|² / σ²) dψ dψ`.
    GaussianPair { weight: f64, width: f64 },
}

/// Terminal cost `g(ψ_T)`.
#[derive(Clone, Debug, PartialEq)]
pub enum TerminalCost {
    /// `−(w/2) ∫ |x − mean(ψ)|² dψ`: rewards spreading.
    NegativeVariance { weight: f64 },
}

/// Initial datum `Ψ₀^N`.
#[derive(Clone, Debug, PartialEq)]
pub enum Sampler {
    /// Quantile midpoints of Uniform[−1, 1]: `xᵢ = −1 + (2i − 1)/N`.
    /// One-dimensional, seed-independent.
    SymmetricQuantile,
    /// Independent uniform points in `[−a, a]^d` from a seeded ChaCha8 stream.
    UniformBox { half_width: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub id: String,
    pub dim: usize,
    pub horizon: f64,
    pub control_set: ControlSet,
    /// `λ` in `φ(u) = (λ/2)|u|²`.
    pub control_weight: f64,
    pub drift: KernelField,
    pub activation: Activation,
    pub running: Vec<RunningCost>,
    pub terminal: Option<TerminalCost>,
    pub sampler: Sampler,
}

#[inline]
fn bump(z: &[f64]) -> f64 {
    1.0 / (1.0 + vec::norm2(z))
}

/// `∇b(z) = −2z / (1 + |z|²)²`, added with `scale` into `out`.
#[inline]
fn add_bump_grad(z: &[f64], scale: f64, out: &mut [f64]) {
    let s = 1.0 + vec::norm2(z);
    let c = -2.0 * scale / (s * s);
    vec::axpy(c, z, out);
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter {
                name: name.into(),
                reason: reason.into(),
            })
        };
        if self.dim == 0 {
            return bad("dim", "must be at least 1");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon", "must be positive and finite");
        }
        if !(self.control_weight > 0.0 && self.control_weight.is_finite()) {
            return bad("lambda", "control cost weight must be positive");
        }
        if !(self.control_set.half_width() > 0.0 && self.control_set.half_width().is_finite()) {
            return bad("bound", "control set must have positive finite size");
        }
        if self.drift.decay < 0.0 {
            return bad("decay", "must be nonnegative");
        }
        for term in &self.running {
            match term {
                RunningCost::Target { center, .. } if center.len() != self.dim => {
                    return bad("target", "center dimension differs from the state dimension")
                }
                RunningCost::GaussianPair { width, .. } if !(*width > 0.0) => {
                    return bad("width", "must be positive")
                }
                _ => {}
            }
        }
        if self.sampler == Sampler::SymmetricQuantile && self.dim != 1 {
            return bad("dim", "the quantile sampler is one-dimensional");
        }
        Ok(())
    }

    // ---- point evaluators -------------------------------------------------

    fn psi_atoms<'a>(&self, psi: &'a EmpiricalMeasure) -> &'a [f64] {
        debug_assert_eq!(psi.dim(), self.dim);
        psi.coords()
    }

    pub fn eval_v(&self, x: &[f64], psi: &EmpiricalMeasure) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_at(x, self.psi_atoms(psi), &mut out);
        out
    }

    /// `∇ₓv(x, ψ)`, row-major `d × d` (`[a][b] = ∂vₐ/∂x_b`).
    pub fn eval_grad_x_v(&self, x: &[f64], psi: &EmpiricalMeasure) -> Vec<f64> {
        let d = self.dim;
        let atoms = self.psi_atoms(psi);
        let n = atoms.len() / d;
        let mut m = vec![0.0; d * d];
        for a in 0..d {
            m[a * d + a] = -self.drift.confinement;
        }
        for y in atoms.chunks_exact(d) {
            self.drift.add_grad_y(x, y, -1.0 / n as f64, &mut m);
        }
        m
    }

    /// `∇_ψ v(x, ψ)(x̃) = ∇₂W(x, x̃)`.
    pub fn eval_grad_psi_v(&self, x: &[f64], _psi: &EmpiricalMeasure, xt: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.dim * self.dim];
        self.drift.add_grad_y(x, xt, 1.0, &mut m);
        m
    }

    pub fn eval_h(&self, x: &[f64], psi: &EmpiricalMeasure) -> f64 {
        let mean = psi.mean();
        self.activation_at(x, &mean)
    }

    pub fn eval_grad_x_h(&self, x: &[f64], psi: &EmpiricalMeasure) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        if let Activation::Bump { shift } = self.activation {
            let z = self.bump_arg(x, &psi.mean(), shift);
            add_bump_grad(&z, 1.0, &mut g);
        }
        g
    }

    /// `∇_ψ h(x, ψ)(x̃) = −β ∇b(x − β mean(ψ))`, independent of `x̃`.
    pub fn eval_grad_psi_h(&self, x: &[f64], psi: &EmpiricalMeasure, _xt: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        if let Activation::Bump { shift } = self.activation {
            let z = self.bump_arg(x, &psi.mean(), shift);
            add_bump_grad(&z, -shift, &mut g);
        }
        g
    }

    pub fn eval_l(&self, psi: &EmpiricalMeasure) -> f64 {
        self.running_cost(self.psi_atoms(psi))
    }

    pub fn eval_grad_psi_l(&self, psi: &EmpiricalMeasure, xt: &[f64]) -> Vec<f64> {
        let atoms = self.psi_atoms(psi);
        let mean = vec::mean(atoms, self.dim);
        let mut g = vec![0.0; self.dim];
        self.running_grad_at(xt, atoms, &mean, &mut g);
        g
    }

    pub fn eval_g(&self, psi: &EmpiricalMeasure) -> f64 {
        self.terminal_cost(self.psi_atoms(psi))
    }

    pub fn eval_grad_psi_g(&self, psi: &EmpiricalMeasure, xt: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        if let Some(TerminalCost::NegativeVariance { weight }) = self.terminal {
            let mean = psi.mean();
            for a in 0..self.dim {
                g[a] = -weight * (xt[a] - mean[a]);
            }
        }
        g
    }

    pub fn eval_phi(&self, u: &[f64]) -> f64 {
        0.5 * self.control_weight * vec::norm2(u)
    }

    /// `argmax_{u ∈ K} ⟨r, u⟩ − φ(u) = Π_K(r / λ)`.
    pub fn eval_phi_conjugate_argmax(&self, r_scaled: &[f64]) -> Vec<f64> {
        let mut u: Vec<f64> = r_scaled.iter().map(|c| c / self.control_weight).collect();
        self.control_set.project(&mut u);
        u
    }

    pub fn sample_initial(&self, n: usize, seed: u64) -> Vec<f64> {
        match self.sampler {
            Sampler::SymmetricQuantile => (1..=n)
                .map(|i| -1.0 + (2 * i - 1) as f64 / n as f64)
                .collect(),
            Sampler::UniformBox { half_width } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n * self.dim)
                    .map(|_| rng.random_range(-half_width..=half_width))
                    .collect()
            }
        }
    }

    /// Radius of a ball containing the support of every sampled `Ψ₀^N`.
    pub fn initial_support_radius(&self) -> f64 {
        match self.sampler {
            Sampler::SymmetricQuantile => 1.0,
            Sampler::UniformBox { half_width } => half_width * (self.dim as f64).sqrt(),
        }
    }

    /// `(M_v, M_h)` with `|v(x, ψ)| ≤ M_v (1 + |x| + m₁(ψ))` and `|h| ≤ M_h`.
    pub fn growth_constants(&self) -> (f64, f64) {
        let mh = match self.activation {
            Activation::Constant(c) => c.abs(),
            Activation::Bump { .. } => 1.0,
        };
        (self.drift.growth(), mh)
    }

    /// Radius of a ball in `R^{2d}` containing every generated phase atom
    /// `(xᵢ(t), rᵢ(t))`, for problems where it is available in closed form:
    /// no drift, constant activation, no running cost. Then `|ẋ| ≤ M_h·|K|`
    /// and the costate is frozen at its terminal value.
    pub fn phase_support_bound(&self, initial_radius: f64) -> Option<f64> {
        let Activation::Constant(h) = self.activation else {
            return None;
        };
        if !self.drift.is_zero() || !self.running.is_empty() {
            return None;
        }
        let x = initial_radius + h.abs() * self.control_set.max_norm(self.dim) * self.horizon;
        let r = match self.terminal {
            Some(TerminalCost::NegativeVariance { weight }) => 2.0 * weight.abs() * x,
            None => 0.0,
        };
        Some((x * x + r * r).sqrt())
    }

    // ---- shared point kernels ---------------------------------------------

    fn bump_arg(&self, x: &[f64], mean: &[f64], shift: f64) -> Vec<f64> {
        x.iter().zip(mean).map(|(a, m)| a - shift * m).collect()
    }

    fn activation_at(&self, x: &[f64], mean: &[f64]) -> f64 {
        match self.activation {
            Activation::Constant(c) => c,
            Activation::Bump { shift } => bump(&self.bump_arg(x, mean, shift)),
        }
    }

    fn drift_at(&self, x: &[f64], atoms: &[f64], out: &mut [f64]) {
        let d = self.dim;
        vec::axpy(-self.drift.confinement, x, out);
        if self.drift.strength != 0.0 {
            let w = 1.0 / (atoms.len() / d) as f64;
            for y in atoms.chunks_exact(d) {
                self.drift.add_kernel(x, y, w, out);
            }
        }
    }

    /// Adds `∇_ψ L(ψ)(x̃)` into `out`.
    fn running_grad_at(&self, xt: &[f64], atoms: &[f64], mean: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for term in &self.running {
            match term {
                RunningCost::Variance { weight } => {
                    for a in 0..d {
                        out[a] += weight * (xt[a] - mean[a]);
                    }
                }
                RunningCost::Target { weight, center } => {
                    for a in 0..d {
                        out[a] += weight * (xt[a] - center[a]);
                    }
                }
                RunningCost::GaussianPair { weight, width } => {
                    let n = atoms.len() / d;
                    let s2 = width * width;
                    let c = -2.0 * weight / (s2 * n as f64);
                    for y in atoms.chunks_exact(d) {
                        let e = (-vec::dist(xt, y).powi(2) / s2).exp();
                        for a in 0..d {
                            out[a] += c * (xt[a] - y[a]) * e;
                        }
                    }
                }
            }
        }
    }

    // ---- bulk routines on a full configuration ----------------------------

    pub(crate) fn activations(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        match self.activation {
            Activation::Constant(c) => vec![c; x.len() / d],
            Activation::Bump { .. } => {
                let mean = vec::mean(x, d);
                x.chunks_exact(d).map(|p| self.activation_at(p, &mean)).collect()
            }
        }
    }

    /// `outᵢ = v(xᵢ, ψ) + h(xᵢ, ψ) uᵢ` for the configuration `x` (`N·d`).
    pub fn velocity(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let h = self.activations(x);
        par::fill_chunks(out, d, |i, o| {
            o.iter_mut().for_each(|c| *c = 0.0);
            let xi = &x[i * d..(i + 1) * d];
            self.drift_at(xi, x, o);
            vec::axpy(h[i], &u[i * d..(i + 1) * d], o);
        });
    }

    /// Vector–Jacobian product of the particle velocity field with respect to
    /// the state: `out_j = Σᵢ (∂Fᵢ/∂x_j)ᵀ wᵢ` where `Fᵢ = v(xᵢ, ψ) + h(xᵢ, ψ) uᵢ`.
    ///
    /// Expanded, `out_j = ∇ₓvᵀ(x_j) w_j + ∇ₓh(x_j)⟨w_j, u_j⟩
    /// + (1/N) Σᵢ [∇_ψvᵀ(xᵢ)(x_j) wᵢ + ∇_ψh(xᵢ)(x_j)⟨wᵢ, uᵢ⟩]`.
    pub fn velocity_vjp(&self, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let n = x.len() / d;
        let inv_n = 1.0 / n as f64;

        // Activation terms. The measure part does not depend on j.
        let mut own_h: Vec<f64> = vec![0.0; x.len()];
        let mut shared_h = vec![0.0; d];
        if let Activation::Bump { shift } = self.activation {
            let mean = vec::mean(x, d);
            for i in 0..n {
                let xi = &x[i * d..(i + 1) * d];
                let wu = vec::dot(&w[i * d..(i + 1) * d], &u[i * d..(i + 1) * d]);
                if wu == 0.0 {
                    continue;
                }
                let z = self.bump_arg(xi, &mean, shift);
                add_bump_grad(&z, wu, &mut own_h[i * d..(i + 1) * d]);
                add_bump_grad(&z, -shift * wu * inv_n, &mut shared_h);
            }
        }

        let kernel = &self.drift;
        par::fill_chunks(out, d, |j, o| {
            let xj = &x[j * d..(j + 1) * d];
            let wj = &w[j * d..(j + 1) * d];
            for a in 0..d {
                o[a] = -kernel.confinement * wj[a] + own_h[j * d + a] + shared_h[a];
            }
            if kernel.strength != 0.0 {
                for k in 0..n {
                    let xk = &x[k * d..(k + 1) * d];
                    // ∇₁W(x_j, x_k)ᵀ w_j from the local Jacobian of v at x_j.
                    kernel.add_grad_y_t_vec(xj, xk, wj, -inv_n, o);
                    // ∇₂W(x_k, x_j)ᵀ w_k from the measure dependence.
                    kernel.add_grad_y_t_vec(xk, xj, &w[k * d..(k + 1) * d], inv_n, o);
                }
            }
        });
    }

    /// `L(ψ)` for the configuration `x`.
    pub fn running_cost(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let n = x.len() / d;
        let mut total = 0.0;
        for term in &self.running {
            total += match term {
                RunningCost::Variance { weight } => {
                    let m = vec::mean(x, d);
                    0.5 * weight * x.chunks_exact(d).map(|p| vec::dist(p, &m).powi(2)).sum::<f64>()
                        / n as f64
                }
                RunningCost::Target { weight, center } => {
                    0.5 * weight
                        * x.chunks_exact(d).map(|p| vec::dist(p, center).powi(2)).sum::<f64>()
                        / n as f64
                }
                RunningCost::GaussianPair { weight, width } => {
                    let s2 = width * width;
                    let rows = par::map_range(n, |i| {
                        let p = &x[i * d..(i + 1) * d];
                        x.chunks_exact(d)
                            .map(|q| (-vec::dist(p, q).powi(2) / s2).exp())
                            .sum::<f64>()
                    });
                    0.5 * weight * rows.iter().sum::<f64>() / (n * n) as f64
                }
            };
        }
        total
    }

    /// `out_j = ∇_ψ L(ψ)(x_j)` for every particle.
    pub fn running_cost_gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        if self.running.is_empty() {
            out.iter_mut().for_each(|c| *c = 0.0);
            return;
        }
        let mean = vec::mean(x, d);
        par::fill_chunks(out, d, |j, o| {
            o.iter_mut().for_each(|c| *c = 0.0);
            self.running_grad_at(&x[j * d..(j + 1) * d], x, &mean, o);
        });
    }

    pub fn has_running_cost(&self) -> bool {
        !self.running.is_empty()
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        match self.terminal {
            Some(TerminalCost::NegativeVariance { weight }) => {
                let d = self.dim;
                let m = vec::mean(x, d);
                let var = x.chunks_exact(d).map(|p| vec::dist(p, &m).powi(2)).sum::<f64>()
                    / (x.len() / d) as f64;
                -0.5 * weight * var
            }
            None => 0.0,
        }
    }

    /// Terminal costate `rᵢ(T) = −∇_ψ g(Ψ_T)(xᵢ(T))`; zero without a
    /// terminal cost.
    pub fn terminal_costate(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        match self.terminal {
            Some(TerminalCost::NegativeVariance { weight }) => {
                let m = vec::mean(x, d);
                x.chunks_exact(d)
                    .flat_map(|p| p.iter().zip(&m).map(|(a, b)| weight * (a - b)).collect::<Vec<_>>())
                    .collect()
            }
            None => vec![0.0; x.len()],
        }
    }

    /// Per-particle maximiser of `⟨r, h(x, ψ) u⟩ − φ(u)` over `K`.
    pub fn maximizing_controls(&self, x: &[f64], r: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let h = self.activations(x);
        let mut u = vec![0.0; x.len()];
        par::fill_chunks(&mut u, d, |i, o| {
            for a in 0..d {
                o[a] = h[i] * r[i * d + a] / self.control_weight;
            }
            self.control_set.project(o);
        });
        u
    }
}
