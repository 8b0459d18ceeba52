//! Shared helpers for the integration suites: statistics, an independent
//! matrix exponential for chain-occupancy expectations, and an independent
//! one-dimensional finite-difference solver for the single-regime payout
//! problem. These deliberately re-derive everything from scratch — none of
//! the production numerics are reused — so agreement is evidence, not
//! circularity.
#![allow(dead_code)]

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt() / (xs.len() as f64).sqrt()
}

/// Dense matrix product for small square matrices.
fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// `exp(A)` by scaling and squaring with a Taylor series on the scaled
/// matrix; plenty for the tiny generators used in tests.
pub fn expm(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let norm: f64 = a
        .iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = norm.log2().ceil().max(0.0) as u32 + 1;
    let scale = 1.0 / f64::powi(2.0, s as i32);
    let scaled: Vec<Vec<f64>> = a
        .iter()
        .map(|row| row.iter().map(|x| x * scale).collect())
        .collect();
    // exp(scaled) via Taylor until terms vanish.
    let mut result = vec![vec![0.0; n]; n];
    for (i, row) in result.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut term = result.clone();
    for k in 1..200 {
        term = matmul(&term, &scaled);
        for row in term.iter_mut() {
            for x in row.iter_mut() {
                *x /= k as f64;
            }
        }
        let mut biggest: f64 = 0.0;
        for (i, row) in term.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                result[i][j] += x;
                biggest = biggest.max(x.abs());
            }
        }
        if biggest < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result);
    }
    result
}

/// State distribution at time `t` for a chain with generator `q` (rows sum
/// to zero, `q[i][j]` the rate i→j) started from `p0`: `exp(Q^T t) p0`.
pub fn chain_distribution(q: &[Vec<f64>], p0: &[f64], t: f64) -> Vec<f64> {
    let n = p0.len();
    let qt_t: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| q[j][i] * t).collect())
        .collect();
    let e = expm(&qt_t);
    (0..n)
        .map(|i| (0..n).map(|j| e[i][j] * p0[j]).sum())
        .collect()
}

/// Independent single-regime solve on a uniform grid: policy iteration
/// between tridiagonal Thomas solves of
/// `delta V = (mu - u) V' + sigma^2/2 V'' + u` with upwinded first
/// derivatives, `V(0) = 0`, `V(H) = K/delta`.
pub struct Oracle1D {
    pub xs: Vec<f64>,
    pub v: Vec<f64>,
    /// First grid point whose converged action is to pay.
    pub threshold: f64,
    pub iterations: usize,
}

pub fn solve_single_regime_fd(
    mu: f64,
    sigma: f64,
    delta: f64,
    k: f64,
    h_domain: f64,
    n: usize,
) -> Oracle1D {
    let h = h_domain / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let a = 0.5 * sigma * sigma;
    // pay[i]: action at node i. Start by paying everywhere.
    let mut pay = vec![true; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut iterations = 0;
    for sweep in 0..200 {
        iterations = sweep + 1;
        // Assemble tridiagonal rows (sub, diag, super, rhs).
        let mut sub = vec![0.0; n + 1];
        let mut diag = vec![0.0; n + 1];
        let mut sup = vec![0.0; n + 1];
        let mut rhs = vec![0.0; n + 1];
        diag[0] = 1.0;
        rhs[0] = 0.0;
        diag[n] = 1.0;
        rhs[n] = k / delta;
        for i in 1..n {
            let u = if pay[i] { k } else { 0.0 };
            let beta = mu - u;
            let up = a / (h * h) + beta.max(0.0) / h;
            let dn = a / (h * h) + (-beta).max(0.0) / h;
            sup[i] = -up;
            sub[i] = -dn;
            diag[i] = delta + up + dn;
            rhs[i] = u;
        }
        // Thomas algorithm.
        let mut c = vec![0.0; n + 1];
        let mut d = vec![0.0; n + 1];
        c[0] = sup[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for i in 1..=n {
            let m = diag[i] - sub[i] * c[i - 1];
            c[i] = sup[i] / m;
            d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
        }
        v[n] = d[n];
        for i in (0..n).rev() {
            v[i] = d[i] - c[i] * v[i + 1];
        }
        // Greedy improvement with the same upwind differences.
        let mut changed = false;
        for i in 0..=n {
            let fwd = if i < n {
                (v[i + 1] - v[i]) / h
            } else {
                (v[i] - v[i - 1]) / h
            };
            let bwd = if i > 0 { (v[i] - v[i - 1]) / h } else { fwd };
            let d0 = if mu >= 0.0 { fwd } else { bwd };
            let dk = if mu - k >= 0.0 { fwd } else { bwd };
            let gain = (mu - k) * dk + k - mu * d0;
            let next = gain >= 0.0;
            if next != pay[i] {
                pay[i] = next;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let threshold = xs
        .iter()
        .zip(&pay)
        .find(|(_, &p)| p)
        .map(|(&x, _)| x)
        .unwrap_or(f64::INFINITY);
    Oracle1D {
        xs,
        v,
        threshold,
        iterations,
    }
}
