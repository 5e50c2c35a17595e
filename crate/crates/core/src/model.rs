//! One-particle data `(ε, A, B, Q)` and even interaction vertices.
//!
//! Quadratic forms `(a*, K a)` in continuum notation act as `c† (εK) c` on
//! canonical fermions `c_x = ε^{1/2} a(x)`. Every routine that needs a
//! one-particle operator therefore works with the ε-scaled kernel `εK`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, commutator, hermitian_deviation, max_abs};
use crate::scalar::{cabs, ci, czero, CMatrix, Cx, Real};

/// Relative tolerance for Hermiticity and positivity checks.
pub const MODEL_TOLERANCE: f64 = 1.0e-10;

/// Symmetric nonnegative site distance with vanishing diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric<T: Real> {
    n_sites: usize,
    distances: Vec<T>,
}

impl<T: Real> Metric<T> {
    pub fn from_fn(n_sites: usize, d: impl Fn(usize, usize) -> T) -> Result<Self> {
        let mut distances = Vec::with_capacity(n_sites * n_sites);
        for x in 0..n_sites {
            for y in 0..n_sites {
                distances.push(d(x, y));
            }
        }
        let metric = Self { n_sites, distances };
        metric.validate()?;
        Ok(metric)
    }

    /// Open chain, `d(x, y) = |x - y|`.
    pub fn chain(n_sites: usize) -> Self {
        Self::from_fn(n_sites, |x, y| T::of_usize(x.abs_diff(y))).expect("chain metric is valid")
    }

    /// Periodic ring, `d(x, y) = min(|x - y|, n - |x - y|)`.
    pub fn ring(n_sites: usize) -> Self {
        Self::from_fn(n_sites, |x, y| {
            let d = x.abs_diff(y);
            T::of_usize(d.min(n_sites - d))
        })
        .expect("ring metric is valid")
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_sites;
        for x in 0..n {
            if self.get(x, x) != T::zero() {
                return Err(Error::Metric(format!("d({x},{x}) != 0")));
            }
            for y in 0..n {
                let d = self.get(x, y);
                if !d.is_finite() || d < T::zero() {
                    return Err(Error::Metric(format!("d({x},{y}) is negative or non-finite")));
                }
                if d != self.get(y, x) {
                    return Err(Error::Metric(format!("d({x},{y}) != d({y},{x})")));
                }
            }
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.distances[x * self.n_sites + y]
    }
}

/// Free data of the system: `H₀ = (a*, (A - iB) a)` and `ρ₀ = exp(-β (a*, Q a))`.
#[derive(Debug, Clone)]
pub struct OneParticleModel<T: Real> {
    n_sites: usize,
    epsilon: T,
    a: CMatrix<T>,
    b: CMatrix<T>,
    q: CMatrix<T>,
    metric: Option<Metric<T>>,
}

impl<T: Real> OneParticleModel<T> {
    pub fn new(epsilon: T, a: CMatrix<T>, b: CMatrix<T>, q: CMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Invalid("model needs at least one site".into()));
        }
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::Invalid("epsilon must be a positive finite real".into()));
        }
        for (name, m) in [("A", &a), ("B", &b), ("Q", &q)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Shape {
                    what: name,
                    expected: format!("{n}x{n}"),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            let dev = hermitian_deviation(m);
            if dev > T::of(MODEL_TOLERANCE) * (T::one() + max_abs(m)) {
                return Err(Error::NotHermitian {
                    name: match name {
                        "A" => "A",
                        "B" => "B",
                        _ => "Q",
                    },
                    deviation: dev.as_f64(),
                });
            }
        }
        let min_b = linalg::min_hermitian_eigenvalue(&b);
        if min_b < -T::of(MODEL_TOLERANCE) * (T::one() + max_abs(&b)) {
            return Err(Error::NotPositive(min_b.as_f64()));
        }
        Ok(Self {
            n_sites: n,
            epsilon,
            a,
            b,
            q,
            metric: None,
        })
    }

    pub fn with_metric(mut self, metric: Metric<T>) -> Result<Self> {
        if metric.n_sites() != self.n_sites {
            return Err(Error::Shape {
                what: "metric",
                expected: self.n_sites.to_string(),
                got: metric.n_sites().to_string(),
            });
        }
        self.metric = Some(metric);
        Ok(self)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn a(&self) -> &CMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &CMatrix<T> {
        &self.b
    }

    pub fn q(&self) -> &CMatrix<T> {
        &self.q
    }

    pub fn metric(&self) -> Option<&Metric<T>> {
        self.metric.as_ref()
    }

    /// Metric if present, otherwise the open-chain distance.
    pub fn metric_or_chain(&self) -> Metric<T> {
        self.metric
            .clone()
            .unwrap_or_else(|| Metric::chain(self.n_sites))
    }

    /// ε-scaled kernel `εK` of a one-particle operator.
    pub fn scaled(&self, k: &CMatrix<T>) -> CMatrix<T> {
        linalg::scale(k, self.epsilon)
    }

    pub fn scaled_a(&self) -> CMatrix<T> {
        self.scaled(&self.a)
    }

    pub fn scaled_b(&self) -> CMatrix<T> {
        self.scaled(&self.b)
    }

    pub fn scaled_q(&self) -> CMatrix<T> {
        self.scaled(&self.q)
    }

    /// `ε(A + iB)`.
    pub fn scaled_a_plus(&self) -> CMatrix<T> {
        self.scaled(&(&self.a + self.b.map(|z| z * ci())))
    }

    /// `ε(A - iB)`.
    pub fn scaled_a_minus(&self) -> CMatrix<T> {
        self.scaled(&(&self.a - self.b.map(|z| z * ci())))
    }

    /// `(max|[A,B]|, max|[B,Q]|)`.
    pub fn commutator_norms(&self) -> (T, T) {
        (
            max_abs(&commutator(&self.a, &self.b)),
            max_abs(&commutator(&self.b, &self.q)),
        )
    }

    /// True when `[A,B] = [B,Q] = 0` within the relative model tolerance.
    pub fn commuting(&self) -> bool {
        let (ab, bq) = self.commutator_norms();
        let s = T::one() + max_abs(&self.a).max(max_abs(&self.b)).max(max_abs(&self.q));
        let tol = T::of(MODEL_TOLERANCE) * s * s;
        ab <= tol && bq <= tol
    }

    /// True when `B` vanishes within tolerance.
    pub fn is_unitary(&self) -> bool {
        max_abs(&self.b) <= T::of(MODEL_TOLERANCE)
    }

    /// Decoupled model on the disjoint union of both site sets.
    pub fn direct_sum(&self, other: &Self) -> Result<Self> {
        if self.epsilon != other.epsilon {
            return Err(Error::Invalid("direct sum needs equal epsilon".into()));
        }
        Self::new(
            self.epsilon,
            linalg::direct_sum(&self.a, &other.a),
            linalg::direct_sum(&self.b, &other.b),
            linalg::direct_sum(&self.q, &other.q),
        )
    }
}

/// One homogeneous vertex `v_{m,m̄}(x_1..x_m; y_1..y_m̄)` multiplying
/// `a*(y_1)…a*(y_m̄) a(x_1)…a(x_m)`.
///
/// Keys are the annihilator indices `x` followed by the creator indices `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex<T: Real> {
    m: usize,
    mbar: usize,
    entries: BTreeMap<Vec<usize>, Cx<T>>,
}

impl<T: Real> Vertex<T> {
    pub fn new(m: usize, mbar: usize) -> Self {
        Self {
            m,
            mbar,
            entries: BTreeMap::new(),
        }
    }

    /// Number of annihilators.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of creators.
    pub fn mbar(&self) -> usize {
        self.mbar
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[usize], &[usize], Cx<T>)> + '_ {
        self.entries
            .iter()
            .map(move |(k, v)| (&k[..self.m], &k[self.m..], *v))
    }

    pub fn get(&self, x: &[usize], y: &[usize]) -> Cx<T> {
        let key: Vec<usize> = x.iter().chain(y).copied().collect();
        self.entries.get(&key).copied().unwrap_or_else(czero)
    }

    /// Adds `value` to a single entry without symmetrizing.
    pub fn add_raw(&mut self, x: &[usize], y: &[usize], value: Cx<T>) {
        assert_eq!(x.len(), self.m);
        assert_eq!(y.len(), self.mbar);
        let key: Vec<usize> = x.iter().chain(y).copied().collect();
        let slot = self.entries.entry(key).or_insert_with(czero);
        *slot += value;
    }

    /// Adds the antisymmetrization of a single monomial coefficient so the
    /// resulting operator gains exactly `value · a*(y) a(x)`.
    pub fn add_antisymmetrized(&mut self, x: &[usize], y: &[usize], value: Cx<T>) {
        let px = permutations(self.m);
        let py = permutations(self.mbar);
        let norm = T::one() / T::of_usize(px.len() * py.len());
        for (perm_x, sx) in &px {
            let xs: Vec<usize> = perm_x.iter().map(|&i| x[i]).collect();
            for (perm_y, sy) in &py {
                let ys: Vec<usize> = perm_y.iter().map(|&i| y[i]).collect();
                let sign = if sx * sy > 0 { T::one() } else { -T::one() };
                self.add_raw(&xs, &ys, value * sign * norm);
            }
        }
        self.prune();
    }

    fn prune(&mut self) {
        self.entries.retain(|_, v| cabs(*v) > T::zero());
    }

    /// Maximal violation of antisymmetry within the x-block and the y-block.
    pub fn antisymmetry_deviation(&self) -> T {
        let mut dev = T::zero();
        for (key, value) in &self.entries {
            for a in 0..key.len() {
                for b in (a + 1)..key.len() {
                    let same_block = (a < self.m) == (b < self.m);
                    if !same_block {
                        continue;
                    }
                    let mut swapped = key.clone();
                    swapped.swap(a, b);
                    let other = self.entries.get(&swapped).copied().unwrap_or_else(czero);
                    dev = dev.max(cabs(*value + other));
                }
            }
        }
        dev
    }

    pub fn scaled(&self, s: Cx<T>) -> Self {
        let mut out = self.clone();
        out.entries.values_mut().for_each(|v| *v *= s);
        out.prune();
        out
    }

    /// Vertex of the adjoint operator: `(a*(y) a(x))† = a*(x_m..x_1) a(y_m̄..y_1)`,
    /// so the roles of `x` and `y` swap and each reversal contributes
    /// `(-1)^{k(k-1)/2}`.
    pub fn adjoint(&self) -> Self {
        let rev = |k: usize| if (k * k.saturating_sub(1) / 2) % 2 == 0 { 1i32 } else { -1 };
        let sign = rev(self.m) * rev(self.mbar);
        let mut out = Vertex::new(self.mbar, self.m);
        for (x, y, v) in self.entries() {
            let value = if sign > 0 { v.conj() } else { -v.conj() };
            out.add_raw(y, x, value);
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_abs(&self) -> T {
        self.entries.values().fold(T::zero(), |a, v| a.max(cabs(*v)))
    }
}

/// Even interaction `V = λ Σ_{m,m̄} ∫ v_{m,m̄}(x;y) (a*)^{m̄}(y) a^m(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction<T: Real> {
    n_sites: usize,
    vertices: BTreeMap<(usize, usize), Vertex<T>>,
    coupling: T,
}

impl<T: Real> Interaction<T> {
    pub fn zero(n_sites: usize) -> Self {
        Self {
            n_sites,
            vertices: BTreeMap::new(),
            coupling: T::one(),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn coupling(&self) -> T {
        self.coupling
    }

    pub fn with_coupling(mut self, coupling: T) -> Self {
        self.coupling = coupling;
        self
    }

    /// Inserts or merges a vertex; site indices are checked, parity is not
    /// (see [`Interaction::validate`]).
    pub fn add_vertex(&mut self, vertex: Vertex<T>) -> Result<()> {
        for (x, y, _) in vertex.entries() {
            for &i in x.iter().chain(y) {
                if i >= self.n_sites {
                    return Err(Error::SiteIndex {
                        index: i,
                        n_sites: self.n_sites,
                    });
                }
            }
        }
        let key = (vertex.m, vertex.mbar);
        match self.vertices.get_mut(&key) {
            Some(existing) => {
                for (x, y, v) in vertex.entries() {
                    existing.add_raw(x, y, v);
                }
                existing.prune();
            }
            None => {
                self.vertices.insert(key, vertex);
            }
        }
        Ok(())
    }

    /// `λ Σ w n_x n_y` over the given site pairs (`x != y`).
    pub fn density_density(n_sites: usize, pairs: &[(usize, usize, T)]) -> Result<Self> {
        let mut vertex = Vertex::new(2, 2);
        for &(x, y, w) in pairs {
            if x == y {
                return Err(Error::Invalid("density-density pair needs distinct sites".into()));
            }
            // n_x n_y = a*(x) a*(y) a(y) a(x)
            vertex.add_antisymmetrized(&[y, x], &[x, y], Cx::new(w, T::zero()));
        }
        let mut out = Self::zero(n_sites);
        out.add_vertex(vertex)?;
        Ok(out)
    }

    /// Nearest-neighbour density-density interaction on an open chain.
    pub fn chain_density_density(n_sites: usize, coupling: T) -> Result<Self> {
        let pairs: Vec<_> = (0..n_sites.saturating_sub(1))
            .map(|x| (x, x + 1, T::one()))
            .collect();
        Ok(Self::density_density(n_sites, &pairs)?.with_coupling(coupling))
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex<T>> {
        self.vertices.values()
    }

    /// Vertices with the coupling folded in.
    pub fn effective_vertices(&self) -> Vec<Vertex<T>> {
        let s = Cx::new(self.coupling, T::zero());
        self.vertices
            .values()
            .map(|v| v.scaled(s))
            .filter(|v| !v.is_empty())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coupling == T::zero() || self.vertices.values().all(|v| v.is_empty())
    }

    /// Checks evenness, `v_{0,0} = 0` and antisymmetry.
    pub fn validate(&self) -> Result<()> {
        for (&(m, mbar), vertex) in &self.vertices {
            if vertex.is_empty() {
                continue;
            }
            if (m + mbar) % 2 == 1 {
                return Err(Error::OddInteraction { m, mbar });
            }
            if m + mbar == 0 {
                return Err(Error::ConstantVertex);
            }
            let dev = vertex.antisymmetry_deviation();
            if dev > T::of(MODEL_TOLERANCE) * (T::one() + vertex.max_abs()) {
                return Err(Error::NotAntisymmetric {
                    m,
                    mbar,
                    deviation: dev.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Interaction of `V†` with the same coupling.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.n_sites).with_coupling(self.coupling);
        for v in self.vertices.values() {
            out.add_vertex(v.adjoint()).expect("indices already validated");
        }
        out
    }
}

/// All permutations of `0..k` with their signs.
pub(crate) fn permutations(k: usize) -> Vec<(Vec<usize>, i32)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut perms = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut perms);
    perms
        .into_iter()
        .map(|p| {
            let s = permutation_sign(&p);
            (p, s)
        })
        .collect()
}

/// Sign of the permutation sorting `seq` (entries must be distinct).
pub(crate) fn permutation_sign(seq: &[usize]) -> i32 {
    let mut inversions = 0usize;
    for i in 0..seq.len() {
        for j in (i + 1)..seq.len() {
            if seq[i] > seq[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{cx, creal};
    use nalgebra::DMatrix;

    fn diag(values: &[f64]) -> CMatrix<f64> {
        DMatrix::from_fn(values.len(), values.len(), |r, c| {
            if r == c {
                creal(values[r])
            } else {
                czero()
            }
        })
    }

    #[test]
    fn rejects_non_hermitian_and_negative_b() {
        let mut a = diag(&[1.0, 2.0]);
        a[(0, 1)] = cx(1.0, 0.0);
        let err = OneParticleModel::new(1.0, a, diag(&[0.0, 0.0]), diag(&[1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::NotHermitian { name: "A", .. }));

        let err = OneParticleModel::new(1.0, diag(&[1.0, 1.0]), diag(&[0.1, -0.2]), diag(&[1.0, 1.0]))
            .unwrap_err();
        assert!(matches!(err, Error::NotPositive(_)));
    }

    #[test]
    fn metric_validation() {
        assert!(Metric::<f64>::from_fn(2, |x, y| if x == y { 0.0 } else { (x + 2 * y) as f64 }).is_err());
        let ring = Metric::<f64>::ring(6);
        assert_eq!(ring.get(0, 5), 1.0);
        assert_eq!(ring.get(1, 4), 3.0);
    }

    #[test]
    fn density_density_vertex_is_antisymmetric() {
        let v = Interaction::<f64>::density_density(3, &[(0, 1, 1.0), (1, 2, 0.5)]).unwrap();
        v.validate().unwrap();
        let vertex = v.vertices().next().unwrap();
        assert!((vertex.get(&[1, 0], &[0, 1]) - cx(0.25, 0.0)).norm() < 1e-15);
        assert!((vertex.get(&[0, 1], &[0, 1]) + cx(0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn odd_and_constant_vertices_are_rejected() {
        let mut v = Interaction::<f64>::zero(2);
        let mut odd = Vertex::new(1, 0);
        odd.add_raw(&[0], &[], cx(1.0, 0.0));
        v.add_vertex(odd).unwrap();
        assert!(matches!(v.validate(), Err(Error::OddInteraction { m: 1, mbar: 0 })));

        let mut v = Interaction::<f64>::zero(2);
        let mut constant = Vertex::new(0, 0);
        constant.add_raw(&[], &[], cx(1.0, 0.0));
        v.add_vertex(constant).unwrap();
        assert!(matches!(v.validate(), Err(Error::ConstantVertex)));
    }

    #[test]
    fn adjoint_of_hermitian_interaction_is_itself() {
        let v = Interaction::<f64>::chain_density_density(3, 0.7).unwrap();
        assert_eq!(v.adjoint(), v);
    }

    #[test]
    fn permutation_signs() {
        let perms = permutations(3);
        assert_eq!(perms.len(), 6);
        assert_eq!(perms.iter().map(|(_, s)| s).sum::<i32>(), 0);
        assert_eq!(permutation_sign(&[2, 0, 1]), 1);
        assert_eq!(permutation_sign(&[1, 0, 2]), -1);
    }
}
