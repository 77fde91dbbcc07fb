//! SMO-style solver for the ν-SVR dual over a precomputed kernel.
//!
//! The dual is posed over `2m` variables `a = (α, α*)`, each in `[0, C]`,
//! minimizing `½ aᵀQa + pᵀa` with `Q_tu = s_t s_u K(t mod m, u mod m)`,
//! `s = (+1…, −1…)`, `p = (−y, y)`, and the two equalities
//! `Σα = Σα* = Cνm/2`. The pair-equality form is equivalent to
//! `Σβ = 0, Σ|β| ≤ Cνm` for `β = α − α*`, and every pair update stays within
//! one sign class so both equalities hold throughout.

use crate::string_kernel::KernelMatrix;

const TAU: f64 = 1e-12;

pub(crate) struct SolverOutput {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective `−½βᵀKβ + yᵀβ` after every sweep of `m` pair updates,
    /// plus the final value.
    pub objective_trace: Vec<f64>,
}

struct State<'a> {
    k: &'a KernelMatrix,
    m: usize,
    ub: f64,
    a: Vec<f64>,
    grad: Vec<f64>,
}

impl State<'_> {
    #[inline]
    fn sign(&self, t: usize) -> f64 {
        if t < self.m {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn q(&self, t: usize, u: usize) -> f64 {
        self.sign(t) * self.sign(u) * self.k.get(t % self.m, u % self.m)
    }

    #[inline]
    fn at_upper(&self, t: usize) -> bool {
        self.a[t] >= self.ub
    }

    #[inline]
    fn at_lower(&self, t: usize) -> bool {
        self.a[t] <= 0.0
    }

    fn beta(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| self.a[i] - self.a[i + self.m])
            .collect()
    }

    /// Maximal-violation first index per sign class, second index by
    /// second-order gain within the same class. `None` once the largest
    /// violation falls below `tol`.
    fn select_pair(&self, tol: f64) -> Option<(usize, usize)> {
        let n = 2 * self.m;
        let (mut gmaxp, mut gmaxp_idx) = (f64::NEG_INFINITY, None);
        let (mut gmaxn, mut gmaxn_idx) = (f64::NEG_INFINITY, None);
        for t in 0..n {
            if t < self.m {
                if !self.at_upper(t) && -self.grad[t] >= gmaxp {
                    gmaxp = -self.grad[t];
                    gmaxp_idx = Some(t);
                }
            } else if !self.at_lower(t) && self.grad[t] >= gmaxn {
                gmaxn = self.grad[t];
                gmaxn_idx = Some(t);
            }
        }

        let (mut gmaxp2, mut gmaxn2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut best: Option<usize> = None;
        let mut best_obj = f64::INFINITY;
        for j in 0..n {
            let (first, grad_diff) = if j < self.m {
                if self.at_lower(j) {
                    continue;
                }
                gmaxp2 = gmaxp2.max(self.grad[j]);
                (gmaxp_idx, gmaxp + self.grad[j])
            } else {
                if self.at_upper(j) {
                    continue;
                }
                gmaxn2 = gmaxn2.max(-self.grad[j]);
                (gmaxn_idx, gmaxn - self.grad[j])
            };
            let Some(i) = first else { continue };
            if grad_diff > 0.0 {
                let quad = self.q(i, i) + self.q(j, j) - 2.0 * self.q(i, j);
                let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best_obj {
                    best = Some(j);
                    best_obj = obj;
                }
            }
        }

        let violation = (gmaxp + gmaxp2).max(gmaxn + gmaxn2);
        let j = best?;
        if violation < tol {
            return None;
        }
        let i = if j < self.m { gmaxp_idx? } else { gmaxn_idx? };
        Some((i, j))
    }

    /// Optimizes `a_i, a_j` (same sign class) with their sum fixed.
    fn update_pair(&mut self, i: usize, j: usize) {
        let (old_i, old_j) = (self.a[i], self.a[j]);
        let mut quad = self.q(i, i) + self.q(j, j) - 2.0 * self.q(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (self.grad[i] - self.grad[j]) / quad;
        let sum = old_i + old_j;
        let ub = self.ub;
        let (mut ai, mut aj) = (old_i - delta, old_j + delta);
        if sum > ub {
            if ai > ub {
                ai = ub;
                aj = sum - ub;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > ub {
            if aj > ub {
                aj = ub;
                ai = sum - ub;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
        self.a[i] = ai;
        self.a[j] = aj;

        let (di, dj) = (ai - old_i, aj - old_j);
        let (si, sj) = (self.sign(i), self.sign(j));
        let (ri, rj) = (self.k.row(i % self.m), self.k.row(j % self.m));
        let m = self.m;
        for r in 0..m {
            let w = si * ri[r] * di + sj * rj[r] * dj;
            self.grad[r] += w;
            self.grad[r + m] -= w;
        }
    }

    /// Returns `(rho, r)`: the decision function is `Σβ K − rho` and the tube
    /// half-width is `−r`. Free variables average their gradients; with none
    /// free, the midpoint of the feasible interval is used.
    fn rho_and_r(&self) -> (f64, f64) {
        let mut r = [0.0; 2];
        for (class, slot) in r.iter_mut().enumerate() {
            let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut free, mut sum) = (0usize, 0.0);
            for t in class * self.m..(class + 1) * self.m {
                let g = self.grad[t];
                if self.at_upper(t) {
                    lb = lb.max(g);
                } else if self.at_lower(t) {
                    ub = ub.min(g);
                } else {
                    free += 1;
                    sum += g;
                }
            }
            *slot = if free > 0 {
                sum / free as f64
            } else {
                (ub + lb) / 2.0
            };
        }
        ((r[0] - r[1]) / 2.0, (r[0] + r[1]) / 2.0)
    }
}

pub(crate) fn dual_objective(k: &KernelMatrix, y: &[f64], beta: &[f64]) -> f64 {
    let mut quad = 0.0;
    for (i, &bi) in beta.iter().enumerate() {
        if bi == 0.0 {
            continue;
        }
        let row = k.row(i);
        let kb: f64 = row.iter().zip(beta).map(|(kv, b)| kv * b).sum();
        quad += bi * kb;
    }
    let lin: f64 = y.iter().zip(beta).map(|(a, b)| a * b).sum();
    lin - 0.5 * quad
}

pub(crate) fn solve(
    k: &KernelMatrix,
    y: &[f64],
    c: f64,
    nu: f64,
    tol: f64,
    max_passes: usize,
) -> SolverOutput {
    let m = y.len();
    let ub = c;
    let mut a = vec![0.0; 2 * m];
    let mut budget = c * nu * m as f64 / 2.0;
    for i in 0..m {
        let v = budget.min(ub);
        a[i] = v;
        a[i + m] = v;
        budget -= v;
    }
    // β = 0 initially, so the gradient is just the linear term.
    let grad: Vec<f64> = y.iter().map(|v| -v).chain(y.iter().copied()).collect();
    let mut st = State { k, m, ub, a, grad };

    let max_iter = max_passes.saturating_mul(m);
    let mut trace = vec![dual_objective(k, y, &st.beta())];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let Some((i, j)) = st.select_pair(tol) else {
            converged = true;
            break;
        };
        st.update_pair(i, j);
        iterations += 1;
        if iterations % m == 0 {
            trace.push(dual_objective(k, y, &st.beta()));
        }
    }
    if !converged {
        converged = st.select_pair(tol).is_none();
    }

    let beta = st.beta();
    if iterations % m != 0 {
        trace.push(dual_objective(k, y, &beta));
    }
    let (rho, r) = st.rho_and_r();
    SolverOutput {
        beta,
        bias: -rho,
        epsilon: -r,
        converged,
        iterations,
        objective_trace: trace,
    }
}
