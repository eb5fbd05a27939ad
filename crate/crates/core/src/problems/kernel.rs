//! Kernel-structured drift `v(x, ψ) = v₀(x) + ∫ W(x, y) dψ(y)`.
//!
//! `v₀(x) = −a·x` is a linear confinement and
//! `W(x, y) = κ (y − x) / (1 + |y − x|²)^γ` an alignment kernel; `γ = 0`
//! is the linear kernel `κ (y − x)`. With this structure the Wasserstein
//! differential is `∇_ψ v(x, ψ)(x̃) = ∇₂W(x, x̃)`.

#[derive(Clone, Debug, PartialEq)]
pub struct KernelField {
    pub confinement: f64,
    pub strength: f64,
    pub decay: f64,
}

impl KernelField {
    pub fn zero() -> Self {
        KernelField {
            confinement: 0.0,
            strength: 0.0,
            decay: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.confinement == 0.0 && self.strength == 0.0
    }

    /// Adds `W(x, y)` to `out`.
    #[inline]
    pub fn add_kernel(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        if self.strength == 0.0 {
            return;
        }
        let (s, _) = self.weight(x, y);
        let c = scale * self.strength * s;
        for a in 0..x.len() {
            out[a] += c * (y[a] - x[a]);
        }
    }

    /// `s^{−γ}` and `|y − x|²`, with `s = 1 + |y − x|²`.
    #[inline]
    fn weight(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        let z2: f64 = x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum();
        let s = if self.decay == 0.0 {
            1.0
        } else {
            (1.0 + z2).powf(-self.decay)
        };
        (s, z2)
    }

    /// Adds `scale · ∇₂W(x, y)` (row-major d×d) to `out`. `∇₁W = −∇₂W`.
    #[inline]
    pub fn add_grad_y(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        if self.strength == 0.0 {
            return;
        }
        let d = x.len();
        let (s, z2) = self.weight(x, y);
        let c = scale * self.strength * s;
        let q = if self.decay == 0.0 {
            0.0
        } else {
            2.0 * self.decay / (1.0 + z2)
        };
        for a in 0..d {
            out[a * d + a] += c;
            if q != 0.0 {
                let za = y[a] - x[a];
                for b in 0..d {
                    out[a * d + b] -= c * q * za * (y[b] - x[b]);
                }
            }
        }
    }

    /// Adds `scale · ∇₂W(x, y)ᵀ w` to `out` without forming the matrix.
    /// `∇₂W` is symmetric, so this is also `∇₂W · w`.
    #[inline]
    pub fn add_grad_y_t_vec(&self, x: &[f64], y: &[f64], w: &[f64], scale: f64, out: &mut [f64]) {
        if self.strength == 0.0 {
            return;
        }
        let (s, z2) = self.weight(x, y);
        let c = scale * self.strength * s;
        if self.decay == 0.0 {
            for a in 0..x.len() {
                out[a] += c * w[a];
            }
            return;
        }
        let q = 2.0 * self.decay / (1.0 + z2);
        let zw: f64 = (0..x.len()).map(|a| (y[a] - x[a]) * w[a]).sum();
        for a in 0..x.len() {
            out[a] += c * (w[a] - q * (y[a] - x[a]) * zw);
        }
    }

    /// Growth constant: `|v(x, ψ)| ≤ M (1 + |x| + m₁(ψ))`.
    pub fn growth(&self) -> f64 {
        self.confinement.abs() + self.strength.abs()
    }
}
