//! Dense banded matrix storage with LU factorization.
//!
//! The discretized operator couples node `(i, j)` to at most its eight
//! stencil neighbours, all of which live within `n_u + 2` positions in the
//! flat ordering, so a banded direct solve is exact and cheap:
//! factorization costs `O(n * bw^2)` and each back-solve `O(n * bw)`.
//!
//! No pivoting is performed. Every system assembled by this crate is
//! strictly diagonally dominant by columns and rows with a positive diagonal
//! (an M-matrix), for which LU without pivoting is numerically stable; the
//! caller additionally verifies the residual of every solve.

use super::SolveError;

/// Square banded matrix with equal lower and upper bandwidth.
///
/// Entry `(i, j)` with `|i - j| <= bw` lives at `data[i * (2*bw+1) + (j - i + bw)]`.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Banded {
    /// Zero matrix of dimension `n` with bandwidth `bw`.
    pub fn new(n: usize, bw: usize) -> Self {
        Banded {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    /// Matrix dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Bandwidth on each side of the diagonal.
    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(j + self.bw >= i && j <= i + self.bw, "({i},{j}) off band");
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    /// Reads entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.bw < i || j > i + self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Overwrites entry `(i, j)` (must be inside the band).
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    /// Adds `v` to entry `(i, j)` (must be inside the band).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// Dense row iteration inside the band: calls `f(j, a_ij)` for the
    /// stored entries of row `i`.
    pub fn for_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        let j_lo = i.saturating_sub(self.bw);
        let j_hi = (i + self.bw).min(self.n - 1);
        for j in j_lo..=j_hi {
            f(j, self.data[self.slot(i, j)]);
        }
    }

    /// Infinity norm: the largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.n {
            let j_lo = i.saturating_sub(self.bw);
            let j_hi = (i + self.bw).min(self.n - 1);
            let base = i * (2 * self.bw + 1) + self.bw;
            let mut acc = 0.0;
            for j in j_lo..=j_hi {
                acc += self.data[base + j - i].abs();
            }
            best = best.max(acc);
        }
        best
    }

    /// `out = A * v`.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.n);
        assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let j_lo = i.saturating_sub(self.bw);
            let j_hi = (i + self.bw).min(self.n - 1);
            let mut acc = 0.0;
            let base = i * (2 * self.bw + 1) + self.bw;
            for j in j_lo..=j_hi {
                acc += self.data[base + j - i] * v[j];
            }
            out[i] = acc;
        }
    }

    /// LU factorization in place, without pivoting. Fails with the row index
    /// if a pivot collapses relative to its row scale.
    pub fn factor(mut self) -> Result<BandedLu, SolveError> {
        let n = self.n;
        let bw = self.bw;
        // Row scales for the relative pivot check.
        let mut scale = vec![0.0_f64; n];
        for i in 0..n {
            let mut s = 0.0_f64;
            self.for_row(i, |_, v| s = s.max(v.abs()));
            scale[i] = s.max(f64::MIN_POSITIVE);
        }
        for k in 0..n {
            let piv = self.data[self.slot(k, k)];
            if piv.abs() < 1e-13 * scale[k] {
                return Err(SolveError::SingularRow { row: k, pivot: piv });
            }
            let i_hi = (k + bw).min(n - 1);
            for i in (k + 1)..=i_hi {
                let s_ik = self.slot(i, k);
                let lik = self.data[s_ik] / piv;
                self.data[s_ik] = lik;
                if lik != 0.0 {
                    let j_hi = (k + bw).min(n - 1);
                    for j in (k + 1)..=j_hi {
                        let ukj = self.data[self.slot(k, j)];
                        if ukj != 0.0 {
                            let s = self.slot(i, j);
                            self.data[s] -= lik * ukj;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { lu: self })
    }
}

/// Factored form of a [`Banded`] matrix; solves `A x = b` by forward and
/// backward substitution.
#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: Banded,
}

impl BandedLu {
    /// Solves `A x = b` for one right-hand side.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let bw = self.lu.bw;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // Forward: L y = b (unit diagonal).
        for i in 0..n {
            let j_lo = i.saturating_sub(bw);
            let mut acc = x[i];
            for j in j_lo..i {
                acc -= self.lu.data[self.lu.slot(i, j)] * x[j];
            }
            x[i] = acc;
        }
        // Backward: U x = y.
        for i in (0..n).rev() {
            let j_hi = (i + bw).min(n - 1);
            let mut acc = x[i];
            for j in (i + 1)..=j_hi {
                acc -= self.lu.data[self.lu.slot(i, j)] * x[j];
            }
            x[i] = acc / self.lu.data[self.lu.slot(i, i)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_small_diagonally_dominant_system() {
        // Tridiagonal -1, 4, -1 with known action.
        let n = 12;
        let mut a = Banded::new(n, 1);
        for i in 0..n {
            a.set(i, i, 4.0);
            if i > 0 {
                a.set(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.set(i, i + 1, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let x = a.clone().factor().unwrap().solve(&b);
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() <= 1e-13, "{i}");
        }
    }

    #[test]
    fn wider_band_round_trip() {
        let n = 40;
        let bw = 7;
        let mut a = Banded::new(n, bw);
        for i in 0..n {
            a.set(i, i, 10.0 + (i % 3) as f64);
            for off in 1..=bw {
                if i >= off {
                    a.set(i, i - off, -0.3 / off as f64);
                }
                if i + off < n {
                    a.set(i, i + off, -0.2 / off as f64);
                }
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let lu = a.clone().factor().unwrap();
        let x = lu.solve(&b);
        let mut r = vec![0.0; n];
        a.matvec(&x, &mut r);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() <= 1e-12);
            assert!((x[i] - x_true[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn singular_pivot_is_reported_with_its_row() {
        let mut a = Banded::new(3, 1);
        a.set(0, 0, 1.0);
        a.set(1, 1, 0.0);
        a.set(1, 0, 1.0);
        a.set(2, 2, 1.0);
        match a.factor() {
            Err(SolveError::SingularRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected singular row, got {other:?}"),
        }
    }
}
