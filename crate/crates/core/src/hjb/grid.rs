//! Node-indexed fields on a [`Mesh`]: values and payout policies.

use super::mesh::Mesh;

/// A scalar field sampled at every mesh node (flat, drift-index fastest).
#[derive(Debug, Clone)]
pub struct ValueGrid {
    pub mesh: Mesh,
    /// `v[mesh.idx(i, j)]` is the value at `(xs[i], us[j])`.
    pub v: Vec<f64>,
}

impl ValueGrid {
    /// Constant field on a mesh.
    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        ValueGrid {
            mesh: mesh.clone(),
            v: vec![value; mesh.n_nodes()],
        }
    }

    /// Value at node `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.v[self.mesh.idx(i, j)]
    }

    /// Bilinear interpolation at `(x, u)`, clamped to the domain.
    pub fn interp(&self, x: f64, u: f64) -> f64 {
        let i = self.mesh.x_cell(x);
        let j = self.mesh.u_cell(u);
        let (x0, x1) = (self.mesh.xs[i], self.mesh.xs[i + 1]);
        let (u0, u1) = (self.mesh.us[j], self.mesh.us[j + 1]);
        let tx = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        let tu = ((u - u0) / (u1 - u0)).clamp(0.0, 1.0);
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        (1.0 - tx) * ((1.0 - tu) * v00 + tu * v01) + tx * ((1.0 - tu) * v10 + tu * v11)
    }

    /// The column `V(., us[j])` as a dense vector over the surplus nodes.
    pub fn slice_at_u(&self, j: usize) -> Vec<f64> {
        (0..self.mesh.xs.len()).map(|i| self.at(i, j)).collect()
    }

    /// Sup-norm distance to another field on the same mesh.
    pub fn sup_diff(&self, other: &ValueGrid) -> f64 {
        assert_eq!(self.v.len(), other.v.len(), "fields on different meshes");
        self.v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest pointwise increment `other - self` (negative if the other
    /// field dips below this one anywhere).
    pub fn min_increment_to(&self, other: &ValueGrid) -> f64 {
        self.v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min)
    }
}

/// A bang-bang payout policy: rate `0` or the cap at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid {
    pub mesh: Mesh,
    /// `rates[mesh.idx(i, j)]` is the payout rate used at `(xs[i], us[j])`.
    pub rates: Vec<f64>,
}

impl PolicyGrid {
    /// Constant-rate policy.
    pub fn constant(mesh: &Mesh, rate: f64) -> Self {
        PolicyGrid {
            mesh: mesh.clone(),
            rates: vec![rate; mesh.n_nodes()],
        }
    }

    /// Rate at node `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.rates[self.mesh.idx(i, j)]
    }

    /// Number of nodes where two policies prescribe different rates.
    pub fn count_changes(&self, other: &PolicyGrid) -> usize {
        assert_eq!(self.rates.len(), other.rates.len());
        self.rates
            .iter()
            .zip(&other.rates)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Node coordinates where two policies disagree (for diagnostics).
    pub fn changed_nodes(&self, other: &PolicyGrid, cap: usize) -> Vec<(usize, usize)> {
        let n_u1 = self.mesh.us.len();
        self.rates
            .iter()
            .zip(&other.rates)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .take(cap)
            .map(|(k, _)| (k / n_u1, k % n_u1))
            .collect()
    }
}
