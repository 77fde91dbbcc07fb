//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's numerical code: each oracle is a
//! deliberately naive restatement of the quantity under test.

#![allow(dead_code)]

use std::collections::HashSet;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shared distinct character n-grams of `a` and `b`, summed over
/// `min_n..=max_n`, by materializing every substring.
pub fn naive_kernel(a: &str, b: &str, min_n: usize, max_n: usize) -> u64 {
    let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let grams = |chars: &[char], n: usize| -> HashSet<String> {
        if chars.len() < n {
            return HashSet::new();
        }
        (0..=chars.len() - n)
            .map(|i| chars[i..i + n].iter().collect())
            .collect()
    };
    (min_n..=max_n)
        .map(|n| grams(&ca, n).intersection(&grams(&cb, n)).count() as u64)
        .sum()
}

/// Random string of `len` characters drawn from the first `alphabet` letters
/// of a mixed ASCII/umlaut alphabet.
pub fn random_text(rng: &mut ChaCha8Rng, len: usize, alphabet: usize) -> String {
    const LETTERS: &[char] = &[
        'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r',
        's', 't', 'u', 'v', 'w', 'x', 'y', 'z', 'ä', 'ö', 'ü', ' ',
    ];
    let alphabet = alphabet.clamp(1, LETTERS.len());
    (0..len)
        .map(|_| LETTERS[rng.random_range(0..alphabet)])
        .collect()
}

/// Great-circle distance via the angle between unit vectors,
/// `atan2(|u×v|, u·v)`, on a 6371 km sphere.
pub fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let unit = |lat: f64, lon: f64| {
        let (p, l) = (lat.to_radians(), lon.to_radians());
        [p.cos() * l.cos(), p.cos() * l.sin(), p.sin()]
    };
    let (u, v) = (unit(lat1, lon1), unit(lat2, lon2));
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let norm = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    6371.0 * norm.atan2(dot)
}

pub fn min_eigenvalue(values: &[f64], n: usize) -> f64 {
    let m = DMatrix::from_row_slice(n, n, values);
    SymmetricEigen::new(m).eigenvalues.min()
}

/// Euclidean projection of `v` onto `{x : 0 <= x_i <= cap, Σx = total}` by
/// bisection on the shift `τ` in `x_i = clamp(v_i − τ, 0, cap)`.
pub fn project_capped_simplex(v: &[f64], cap: f64, total: f64) -> Vec<f64> {
    let sum_at = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, cap)).sum::<f64>();
    let lo_v = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_v = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo_v - cap - 1.0, hi_v + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|x| (x - tau).clamp(0.0, cap)).collect()
}

/// The ν-SVR dual objective `yᵀβ − ½βᵀKβ` for a row-major `m×m` kernel.
pub fn dual_value(k: &[f64], y: &[f64], beta: &[f64]) -> f64 {
    let m = y.len();
    let mut quad = 0.0;
    for i in 0..m {
        for j in 0..m {
            quad += beta[i] * beta[j] * k[i * m + j];
        }
    }
    y.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() - 0.5 * quad
}

/// Long-run accelerated projected gradient on the ν-SVR dual in the
/// `(α, α*)` form: `0 <= α, α* <= C`, `Σα = Σα* = Cνm/2`, maximizing
/// `yᵀ(α − α*) − ½(α − α*)ᵀK(α − α*)`. Returns `β = α − α*`.
pub fn qp_oracle(k: &[f64], y: &[f64], c: f64, nu: f64, iterations: usize) -> Vec<f64> {
    let m = y.len();
    let half = c * nu * m as f64 / 2.0;
    // The Hessian in (α, α*) is [[K, −K], [−K, K]] with top eigenvalue 2·λmax(K).
    let lmax = SymmetricEigen::new(DMatrix::from_row_slice(m, m, k))
        .eigenvalues
        .max();
    let step = 1.0 / (2.0 * lmax.max(1e-12));

    let beta_of =
        |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, z)| x - z).collect() };
    let grad_beta = |beta: &[f64]| -> Vec<f64> {
        // Gradient of the maximized objective with respect to β.
        (0..m)
            .map(|i| y[i] - (0..m).map(|j| k[i * m + j] * beta[j]).sum::<f64>())
            .collect()
    };

    let start = project_capped_simplex(&vec![0.0; m], c, half);
    let (mut a, mut b) = (start.clone(), start);
    let (mut za, mut zb) = (a.clone(), b.clone());
    let mut t = 1.0f64;
    let mut best = dual_value(k, y, &beta_of(&a, &b));
    for _ in 0..iterations {
        let g = grad_beta(&beta_of(&za, &zb));
        let na: Vec<f64> = za.iter().zip(&g).map(|(x, gi)| x + step * gi).collect();
        let nb: Vec<f64> = zb.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
        let na = project_capped_simplex(&na, c, half);
        let nb = project_capped_simplex(&nb, c, half);
        let value = dual_value(k, y, &beta_of(&na, &nb));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if value < best {
            // Adaptive restart whenever momentum overshoots.
            za = a.clone();
            zb = b.clone();
            t = 1.0;
            continue;
        }
        let w = (t - 1.0) / t_next;
        za = na.iter().zip(&a).map(|(n, o)| n + w * (n - o)).collect();
        zb = nb.iter().zip(&b).map(|(n, o)| n + w * (n - o)).collect();
        a = na;
        b = nb;
        t = t_next;
        best = value;
    }
    beta_of(&a, &b)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
