//! Small dense helpers on `&[f64]` points and row-major d×d matrices.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out += Aᵀ w` for a row-major d×d matrix `a`.
#[cfg(test)]
pub fn add_mat_t_vec(a: &[f64], w: &[f64], out: &mut [f64]) {
    let d = w.len();
    for row in 0..d {
        let wr = w[row];
        if wr == 0.0 {
            continue;
        }
        for col in 0..d {
            out[col] += a[row * d + col] * wr;
        }
    }
}

/// Mean of `n` points of dimension `d` stored contiguously.
pub fn mean(atoms: &[f64], d: usize) -> Vec<f64> {
    let n = atoms.len() / d;
    let mut m = vec![0.0; d];
    for p in atoms.chunks_exact(d) {
        axpy(1.0, p, &mut m);
    }
    m.iter_mut().for_each(|v| *v /= n as f64);
    m
}
