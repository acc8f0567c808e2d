//! Brute-force Fock-space oracles built without the crate's closed forms.
#![allow(dead_code)]

pub const N_MAX: usize = 40;

/// ⟨n|α⟩ for a real coherent amplitude α = √N̄, n = 0..=N_MAX.
pub fn coherent_amplitudes(nbar: f64) -> Vec<f64> {
    let alpha = nbar.sqrt();
    let mut amps = Vec::with_capacity(N_MAX + 1);
    let mut term = (-nbar / 2.0).exp();
    for n in 0..=N_MAX {
        if n > 0 {
            term *= alpha / (n as f64).sqrt();
        }
        amps.push(term);
    }
    amps
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rotates `v` by angle θ inside the plane spanned by the orthonormal pair
/// (a, b), taking a toward −b: R = I + (cos θ − 1)(aaᵀ + bbᵀ) + sin θ (abᵀ − baᵀ).
fn rotate_in_plane(v: &[f64], a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    let (va, vb) = (dot(a, v), dot(b, v));
    let (c, s) = (theta.cos(), theta.sin());
    (0..v.len())
        .map(|i| v[i] + (c - 1.0) * (a[i] * va + b[i] * vb) + s * (a[i] * vb - b[i] * va))
        .collect()
}

/// Fock amplitudes of the vacuum (codeword 0) and the pulse (codeword 1)
/// after the unitary that rotates the plane they span by θ.
pub fn rotated_states(theta: f64, nbar: f64) -> [Vec<f64>; 2] {
    let pulse = coherent_amplitudes(nbar);
    let mut vacuum = vec![0.0; N_MAX + 1];
    vacuum[0] = 1.0;
    let overlap = dot(&vacuum, &pulse);
    let mut e: Vec<f64> = pulse
        .iter()
        .zip(&vacuum)
        .map(|(p, v)| p - overlap * v)
        .collect();
    let norm = dot(&e, &e).sqrt();
    e.iter_mut().for_each(|x| *x /= norm);
    [
        rotate_in_plane(&vacuum, &vacuum, &e, theta),
        rotate_in_plane(&pulse, &vacuum, &e, theta),
    ]
}

/// C(n, k) ηᵏ (1 − η)ⁿ⁻ᵏ by the multiplicative recurrence.
pub fn binomial(n: usize, k: usize, eta: f64) -> f64 {
    let mut c = 1.0;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c * eta.powi(k as i32) * (1.0 - eta).powi((n - k) as i32)
}

/// Σₙ Σ_{k≥1} p(n, k) |amplitudeₙ|².
pub fn click_probability(amplitudes: &[f64], eta: f64) -> f64 {
    amplitudes
        .iter()
        .enumerate()
        .map(|(n, a)| a * a * (1..=n).map(|k| binomial(n, k, eta)).sum::<f64>())
        .sum()
}

/// Kennedy error ξ1·P(no click | pulse) by direct summation over n and k = 0.
pub fn kennedy_error_by_sum(xi1: f64, nbar: f64, eta: f64) -> f64 {
    let amps = coherent_amplitudes(nbar);
    xi1 * amps
        .iter()
        .enumerate()
        .map(|(n, a)| a * a * binomial(n, 0, eta))
        .sum::<f64>()
}

/// Minimises a unimodal function on [lo, hi] by golden-section search.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}
