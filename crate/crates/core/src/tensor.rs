//! Dense complex tensors `t(x_1..x_m; y_1..y_m̄)` over the site set.

use serde::Serialize;

use crate::model::{permutation_sign, permutations};
use crate::scalar::{cabs, czero, to_pair, CMatrix, Cx, Real};

/// Row-major dense tensor with an x-block of `m` indices followed by a
/// y-block of `mbar` indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor<T: Real> {
    n_sites: usize,
    m: usize,
    mbar: usize,
    data: Vec<Cx<T>>,
}

impl<T: Real> SiteTensor<T> {
    pub fn zeros(n_sites: usize, m: usize, mbar: usize) -> Self {
        Self {
            n_sites,
            m,
            mbar,
            data: vec![czero(); n_sites.pow((m + mbar) as u32)],
        }
    }

    /// Fills a tensor that is antisymmetric in both blocks from its values
    /// on strictly increasing index tuples.
    pub fn antisymmetric_from_sorted(
        n_sites: usize,
        m: usize,
        mbar: usize,
        mut f: impl FnMut(&[usize], &[usize]) -> Cx<T>,
    ) -> Self {
        let mut out = Self::zeros(n_sites, m, mbar);
        let xs = increasing_tuples(n_sites, m);
        let ys = increasing_tuples(n_sites, mbar);
        let px = permutations(m);
        let py = permutations(mbar);
        for x in &xs {
            for y in &ys {
                let value = f(x, y);
                if value == czero() {
                    continue;
                }
                for (perm_x, sx) in &px {
                    let xp: Vec<usize> = perm_x.iter().map(|&i| x[i]).collect();
                    for (perm_y, sy) in &py {
                        let yp: Vec<usize> = perm_y.iter().map(|&i| y[i]).collect();
                        let v = if sx * sy > 0 { value } else { -value };
                        out.set(&xp, &yp, v);
                    }
                }
            }
        }
        out
    }

    pub fn from_fn(
        n_sites: usize,
        m: usize,
        mbar: usize,
        mut f: impl FnMut(&[usize], &[usize]) -> Cx<T>,
    ) -> Self {
        let mut out = Self::zeros(n_sites, m, mbar);
        for flat in 0..out.data.len() {
            let idx = out.unflatten(flat);
            out.data[flat] = f(&idx[..m], &idx[m..]);
        }
        out
    }

    pub fn from_matrix(matrix: &CMatrix<T>) -> Self {
        let n = matrix.nrows();
        Self::from_fn(n, 1, 1, |x, y| matrix[(x[0], y[0])])
    }

    pub fn to_matrix(&self) -> Option<CMatrix<T>> {
        if self.m != 1 || self.mbar != 1 {
            return None;
        }
        let n = self.n_sites;
        Some(CMatrix::from_fn(n, n, |r, c| self.data[r * n + c]))
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mbar(&self) -> usize {
        self.mbar
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Cx<T>] {
        &self.data
    }

    fn flatten(&self, x: &[usize], y: &[usize]) -> usize {
        debug_assert_eq!(x.len(), self.m);
        debug_assert_eq!(y.len(), self.mbar);
        x.iter()
            .chain(y)
            .fold(0, |acc, &i| acc * self.n_sites + i)
    }

    /// Index tuple (x-block then y-block) of a flat position.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let k = self.m + self.mbar;
        let mut idx = vec![0; k];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.n_sites;
            flat /= self.n_sites;
        }
        idx
    }

    pub fn get(&self, x: &[usize], y: &[usize]) -> Cx<T> {
        self.data[self.flatten(x, y)]
    }

    pub fn set(&mut self, x: &[usize], y: &[usize], value: Cx<T>) {
        let i = self.flatten(x, y);
        self.data[i] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, Cx<T>)> + '_ {
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.unflatten(i), *v))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |a, v| a.max(cabs(*v)))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.n_sites, self.m, self.mbar), (other.n_sites, other.m, other.mbar));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |a, (u, v)| a.max(cabs(*u - *v)))
    }

    pub fn map(&self, f: impl Fn(Cx<T>) -> Cx<T>) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(Cx<T>, Cx<T>) -> Cx<T>) -> Self {
        assert_eq!((self.n_sites, self.m, self.mbar), (other.n_sites, other.m, other.mbar));
        let mut out = self.clone();
        for (u, v) in out.data.iter_mut().zip(&other.data) {
            *u = f(*u, *v);
        }
        out
    }

    /// Largest violation of antisymmetry under any permutation of either block.
    pub fn antisymmetry_deviation(&self) -> T {
        let px = permutations(self.m);
        let py = permutations(self.mbar);
        let mut dev = T::zero();
        for (idx, v) in self.iter() {
            let (x, y) = idx.split_at(self.m);
            for (perm_x, sx) in &px {
                let xp: Vec<usize> = perm_x.iter().map(|&i| x[i]).collect();
                for (perm_y, sy) in &py {
                    let yp: Vec<usize> = perm_y.iter().map(|&i| y[i]).collect();
                    let w = self.get(&xp, &yp);
                    let expected = if sx * sy > 0 { v } else { -v };
                    dev = dev.max(cabs(w - expected));
                }
            }
        }
        dev
    }

    /// `|t|_{1,∞}`: the larger of the sup over each single slot of the
    /// ε-weighted sum over all remaining slots.
    pub fn one_inf_norm(&self, epsilon: T) -> T {
        let k = self.m + self.mbar;
        if k == 0 {
            return self.data.first().map(|v| cabs(*v)).unwrap_or_else(T::zero);
        }
        let weight = epsilon.powi((k - 1) as i32);
        let mut best = T::zero();
        for slot in 0..k {
            let mut marginal = vec![T::zero(); self.n_sites];
            for (idx, v) in self.iter() {
                marginal[idx[slot]] += cabs(v);
            }
            for s in marginal {
                best = best.max(s * weight);
            }
        }
        best
    }

    /// Flat rows `(indices, re, im)` in row-major order.
    pub fn rows(&self) -> Vec<TensorRow> {
        self.iter()
            .map(|(idx, v)| {
                let [re, im] = to_pair(v);
                TensorRow { index: idx, re, im }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorRow {
    pub index: Vec<usize>,
    pub re: f64,
    pub im: f64,
}

/// Strictly increasing `k`-tuples from `0..n` in lexicographic order.
pub fn increasing_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Sorts `seq` and returns the permutation sign, or `None` on a repeated entry.
pub fn sort_with_sign(seq: &[usize]) -> Option<(Vec<usize>, i32)> {
    let mut sorted = seq.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((sorted, permutation_sign(seq)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;

    #[test]
    fn antisymmetric_fill_round_trips() {
        let t = SiteTensor::<f64>::antisymmetric_from_sorted(4, 2, 2, |x, y| {
            cx((x[0] + 3 * x[1]) as f64, (y[0] * y[1]) as f64 + 0.5)
        });
        assert!(t.antisymmetry_deviation() < 1e-15);
        assert_eq!(t.get(&[1, 0], &[2, 3]), -t.get(&[0, 1], &[2, 3]));
        assert_eq!(t.get(&[1, 1], &[2, 3]), czero());
    }

    #[test]
    fn one_inf_norm_of_single_entry() {
        let mut t = SiteTensor::<f64>::zeros(3, 1, 1);
        t.set(&[0], &[2], cx(0.0, 2.0));
        assert_eq!(t.one_inf_norm(1.0), 2.0);
        assert_eq!(t.one_inf_norm(0.5), 1.0);
    }

    #[test]
    fn tuples_and_sorting() {
        assert_eq!(increasing_tuples(4, 2).len(), 6);
        assert_eq!(increasing_tuples(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(sort_with_sign(&[2, 0, 1]), Some((vec![0, 1, 2], 1)));
        assert_eq!(sort_with_sign(&[1, 0]), Some((vec![0, 1], -1)));
        assert_eq!(sort_with_sign(&[1, 1]), None);
    }
}
