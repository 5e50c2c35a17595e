//! Exact Fock-space representation and time evolution.
//!
//! Occupation basis states are bitstrings with site 0 as the least
//! significant bit. The canonical annihilator `c_x` picks up the
//! Jordan–Wigner sign `(-1)^{#occupied sites below x}`; the continuum
//! operator is `a(x) = ε^{-1/2} c_x`, so `{a(x), a*(y)} = ε^{-1} δ_{xy}`.
//!
//! Ladder operators are stored as signed partial permutations of the basis;
//! dense matrices are produced on demand.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{self, hermitian_deviation, max_abs, ExpGenerator};
use crate::model::{Interaction, OneParticleModel};
use crate::scalar::{ci, cone, creal, cscale, czero, CMatrix, Cx, Real};
use crate::tensor::SiteTensor;

/// Default largest number of sites for the dense Fock representation.
pub const FOCK_SITE_CAP: usize = 10;

/// A canonical ladder operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ladder {
    Create(usize),
    Annihilate(usize),
}

/// Applies a product of canonical ladder operators (rightmost acts first) to
/// a basis state. Returns the image state and its sign, or `None` if the
/// product annihilates the state.
#[inline]
pub fn apply_ladders(ops: &[Ladder], state: usize) -> Option<(usize, bool)> {
    let mut u = state;
    let mut negative = false;
    for op in ops.iter().rev() {
        let (x, create) = match *op {
            Ladder::Create(x) => (x, true),
            Ladder::Annihilate(x) => (x, false),
        };
        let bit = 1usize << x;
        if (u & bit != 0) == create {
            return None;
        }
        if (u & (bit - 1)).count_ones() % 2 == 1 {
            negative = !negative;
        }
        u ^= bit;
    }
    Some((u, negative))
}

/// `Tr(O M)` where `O` is the ladder product `ops`.
pub fn trace_ladders<T: Real>(ops: &[Ladder], m: &CMatrix<T>) -> Cx<T> {
    let mut acc = czero();
    for w in 0..m.nrows() {
        if let Some((u, negative)) = apply_ladders(ops, w) {
            // O|w> = ±|u>, so O[u, w] = ±1 and Tr(O M) = Σ_w O[u,w] M[w,u].
            let v = m[(w, u)];
            if negative {
                acc -= v;
            } else {
                acc += v;
            }
        }
    }
    acc
}

/// Dense matrix of a ladder product.
pub fn ladder_matrix<T: Real>(ops: &[Ladder], dim: usize) -> CMatrix<T> {
    let mut out = linalg::zeros(dim);
    for w in 0..dim {
        if let Some((u, negative)) = apply_ladders(ops, w) {
            out[(u, w)] = if negative { -cone::<T>() } else { cone() };
        }
    }
    out
}

/// Fock space of `n_sites` fermionic modes with basis normalization `ε`.
#[derive(Debug, Clone)]
pub struct FockSpace<T: Real> {
    n_sites: usize,
    epsilon: T,
}

impl<T: Real> FockSpace<T> {
    pub fn new(model: &OneParticleModel<T>) -> Result<Self> {
        Self::with_cap(model.n_sites(), model.epsilon(), FOCK_SITE_CAP)
    }

    pub fn with_cap(n_sites: usize, epsilon: T, cap: usize) -> Result<Self> {
        if n_sites > cap {
            return Err(Error::CapExceeded {
                what: "Fock sites",
                size: n_sites,
                cap,
            });
        }
        if n_sites == 0 {
            return Err(Error::Invalid("Fock space needs at least one site".into()));
        }
        Ok(Self { n_sites, epsilon })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    fn check_site(&self, x: usize) -> Result<()> {
        if x >= self.n_sites {
            return Err(Error::SiteIndex {
                index: x,
                n_sites: self.n_sites,
            });
        }
        Ok(())
    }

    /// Dense `a(x) = ε^{-1/2} c_x`.
    pub fn annihilator(&self, x: usize) -> Result<CMatrix<T>> {
        self.check_site(x)?;
        let s = T::one() / self.epsilon.sqrt();
        Ok(linalg::scale(&ladder_matrix(&[Ladder::Annihilate(x)], self.dim()), s))
    }

    /// Dense `a*(x)`.
    pub fn creator(&self, x: usize) -> Result<CMatrix<T>> {
        Ok(self.annihilator(x)?.adjoint())
    }

    /// Dense `a*(x) a(y)`.
    pub fn hopping(&self, x: usize, y: usize) -> Result<CMatrix<T>> {
        self.check_site(x)?;
        self.check_site(y)?;
        let ops = [Ladder::Create(x), Ladder::Annihilate(y)];
        Ok(linalg::scale(&ladder_matrix(&ops, self.dim()), T::one() / self.epsilon))
    }

    /// `(a*, K a)_X = ε² Σ a*(x) K_{xy} a(y) = c† (εK) c`.
    pub fn quadratic_operator(&self, kernel: &CMatrix<T>) -> Result<CMatrix<T>> {
        let n = self.n_sites;
        if kernel.nrows() != n || kernel.ncols() != n {
            return Err(Error::Shape {
                what: "quadratic kernel",
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", kernel.nrows(), kernel.ncols()),
            });
        }
        let dim = self.dim();
        let mut out = linalg::zeros(dim);
        for x in 0..n {
            for y in 0..n {
                let k = cscale(kernel[(x, y)], self.epsilon);
                if k == czero() {
                    continue;
                }
                let ops = [Ladder::Create(x), Ladder::Annihilate(y)];
                for w in 0..dim {
                    if let Some((u, negative)) = apply_ladders(&ops, w) {
                        out[(u, w)] += if negative { -k } else { k };
                    }
                }
            }
        }
        Ok(out)
    }

    /// `V = λ Σ ε^{m+m̄} v(x;y) a*(y_1)…a*(y_m̄) a(x_1)…a(x_m)`.
    pub fn interaction_operator(&self, interaction: &Interaction<T>) -> Result<CMatrix<T>> {
        interaction.validate()?;
        if interaction.n_sites() != self.n_sites {
            return Err(Error::Shape {
                what: "interaction sites",
                expected: self.n_sites.to_string(),
                got: interaction.n_sites().to_string(),
            });
        }
        let dim = self.dim();
        let mut out = linalg::zeros(dim);
        for vertex in interaction.effective_vertices() {
            let degree = (vertex.m() + vertex.mbar()) as i32;
            let measure = self.epsilon.powi(degree).sqrt();
            let mut ops = Vec::with_capacity(degree as usize);
            for (x, y, v) in vertex.entries() {
                ops.clear();
                ops.extend(y.iter().map(|&i| Ladder::Create(i)));
                ops.extend(x.iter().map(|&i| Ladder::Annihilate(i)));
                let value = cscale(v, measure);
                for w in 0..dim {
                    if let Some((u, negative)) = apply_ladders(&ops, w) {
                        out[(u, w)] += if negative { -value } else { value };
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Which partition function divides raw moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Normalization {
    /// `Z₀ = Tr ρ₀`.
    Initial,
    /// `Z(0,0) = Tr(e^{-iHT} ρ₀ e^{iH†T})`.
    Evolved,
}

/// Hamiltonian, initial state and the evolved density `M = e^{-iHT} ρ₀ e^{iH†T}`.
#[derive(Debug, Clone)]
pub struct EvolutionState<T: Real> {
    n_sites: usize,
    epsilon: T,
    beta: T,
    time: T,
    h0: CMatrix<T>,
    v: CMatrix<T>,
    h: CMatrix<T>,
    rho0: CMatrix<T>,
    z0: T,
    evolved: CMatrix<T>,
}

impl<T: Real> EvolutionState<T> {
    pub fn new(
        fock: &FockSpace<T>,
        model: &OneParticleModel<T>,
        interaction: &Interaction<T>,
        beta: T,
        time: T,
    ) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(Error::Invalid("beta must be positive and finite".into()));
        }
        if !(time >= T::zero()) || !time.is_finite() {
            return Err(Error::Invalid("total time must be nonnegative and finite".into()));
        }
        if fock.n_sites() != model.n_sites() || fock.epsilon() != model.epsilon() {
            return Err(Error::Shape {
                what: "Fock space",
                expected: model.n_sites().to_string(),
                got: fock.n_sites().to_string(),
            });
        }
        let a_minus = model.a() - model.b().map(|z| z * ci::<T>());
        let h0 = fock.quadratic_operator(&a_minus)?;
        let v = fock.interaction_operator(interaction)?;
        let h = &h0 + &v;
        let q_op = fock.quadratic_operator(model.q())?;
        let rho0 = linalg::hermitian_function(&q_op, |e| creal((-beta * e).exp()));
        let z0 = linalg::trace(&rho0).re;

        // Closed form of the free partition function.
        let q_hat = model.scaled_q();
        let (q_eigs, _) = linalg::hermitian_eigen(&q_hat);
        let z0_closed = q_eigs
            .iter()
            .fold(T::one(), |acc, &e| acc * (T::one() + (-beta * e).exp()));
        if !(z0 > T::zero()) || !z0.is_finite() {
            return Err(Error::NonFinite("initial partition function"));
        }
        let rel = (z0 - z0_closed).abs() / z0_closed;
        if rel > T::of(1.0e-8).max(T::eps() * T::of(1.0e3)) {
            return Err(Error::Invalid(format!(
                "initial partition function {z0} disagrees with closed form {z0_closed}"
            )));
        }

        let u = evolution_operator(&h, time)?;
        let evolved = &u * &rho0 * u.adjoint();
        if !linalg::is_finite(&evolved) {
            return Err(Error::NonFinite("evolved density"));
        }
        Ok(Self {
            n_sites: fock.n_sites(),
            epsilon: fock.epsilon(),
            beta,
            time,
            h0,
            v,
            h,
            rho0,
            z0,
            evolved,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn hamiltonian(&self) -> &CMatrix<T> {
        &self.h
    }

    pub fn free_hamiltonian(&self) -> &CMatrix<T> {
        &self.h0
    }

    pub fn interaction_matrix(&self) -> &CMatrix<T> {
        &self.v
    }

    pub fn rho0(&self) -> &CMatrix<T> {
        &self.rho0
    }

    /// `Z₀ = Tr ρ₀`.
    pub fn z0(&self) -> T {
        self.z0
    }

    /// `M = e^{-iHT} ρ₀ e^{iH†T}`.
    pub fn evolved(&self) -> &CMatrix<T> {
        &self.evolved
    }

    /// `Z(0,0) = Tr M`.
    pub fn z_evolved(&self) -> Cx<T> {
        linalg::trace(&self.evolved)
    }

    fn normalizer(&self, normalization: Normalization) -> Cx<T> {
        match normalization {
            Normalization::Initial => creal(self.z0),
            Normalization::Evolved => self.z_evolved(),
        }
    }

    /// `⟨O⟩_T = Z₀⁻¹ Tr(e^{iH†T} O e^{-iHT} ρ₀)`.
    pub fn expectation(&self, o: &CMatrix<T>) -> Result<Cx<T>> {
        let dim = self.evolved.nrows();
        if o.nrows() != dim || o.ncols() != dim {
            return Err(Error::Shape {
                what: "observable",
                expected: format!("{dim}x{dim}"),
                got: format!("{}x{}", o.nrows(), o.ncols()),
            });
        }
        let value = linalg::trace_product(o, &self.evolved) / creal(self.z0);
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::NonFinite("expectation"));
        }
        Ok(value)
    }

    /// `Tr(a*(x_1)…a*(x_m) a(y_m̄)…a(y_1) M)` divided by the chosen normalization.
    pub fn moment(&self, x: &[usize], y: &[usize], normalization: Normalization) -> Cx<T> {
        moment_of(&self.evolved, self.epsilon, x, y) / self.normalizer(normalization)
    }

    /// Moment tensors `γ_{m,m̄}` for all `0 < m + m̄ ≤ cap`.
    pub fn moments(&self, cap: usize, normalization: Normalization) -> Result<MomentTable<T>> {
        moments_of(&self.evolved, self.n_sites, self.epsilon, cap, self.normalizer(normalization))
    }
}

/// Largest total degree for moment tables.
pub const MOMENT_DEGREE_CAP: usize = 6;

/// Moment tensors keyed by `(m, m̄)` = (creators, annihilators).
pub type MomentTable<T> = BTreeMap<(usize, usize), SiteTensor<T>>;

fn moment_of<T: Real>(m_op: &CMatrix<T>, epsilon: T, x: &[usize], y: &[usize]) -> Cx<T> {
    let mut ops: Vec<Ladder> = x.iter().map(|&i| Ladder::Create(i)).collect();
    ops.extend(y.iter().rev().map(|&i| Ladder::Annihilate(i)));
    let scale = T::one() / epsilon.powi((x.len() + y.len()) as i32).sqrt();
    cscale(trace_ladders(&ops, m_op), scale)
}

fn moments_of<T: Real>(
    m_op: &CMatrix<T>,
    n_sites: usize,
    epsilon: T,
    cap: usize,
    normalizer: Cx<T>,
) -> Result<MomentTable<T>> {
    if cap > MOMENT_DEGREE_CAP {
        return Err(Error::CapExceeded {
            what: "moment degree",
            size: cap,
            cap: MOMENT_DEGREE_CAP,
        });
    }
    let mut table = BTreeMap::new();
    for total in 1..=cap {
        for m in 0..=total {
            let mbar = total - m;
            if m > n_sites || mbar > n_sites {
                continue;
            }
            let tensor = SiteTensor::antisymmetric_from_sorted(n_sites, m, mbar, |x, y| {
                moment_of(m_op, epsilon, x, y) / normalizer
            });
            table.insert((m, mbar), tensor);
        }
    }
    Ok(table)
}

/// `e^{-iHT}`, using the Hermitian eigensolver when `H` is Hermitian.
pub fn evolution_operator<T: Real>(h: &CMatrix<T>, time: T) -> Result<CMatrix<T>> {
    let tol = T::of(1.0e-12) * (T::one() + max_abs(h));
    if hermitian_deviation(h) <= tol {
        let phase = -ci::<T>() * creal(time);
        return Ok(linalg::hermitian_function(h, |e| {
            crate::scalar::cexp(phase * creal(e))
        }));
    }
    ExpGenerator::new(h.map(|z| -ci::<T>() * z)).at(time)
}

/// Result of a Trotterized evaluation at a fixed step count.
#[derive(Debug, Clone)]
pub struct TrotterValue<T: Real> {
    pub steps: usize,
    /// `Z_N(0,0)`.
    pub z: Cx<T>,
    /// `γ^{(N)}_{1,1}`, normalized by `Z₀`.
    pub gamma11: CMatrix<T>,
}

/// Lie-product approximant with `C_N = e^{-iτH₀}`, `D_N = 1 - iτV`, `τ = T/N`:
/// `Tr((C_N† D_N†)^N O (C_N D_N)^N ρ₀)` for `O = 1` and `O = a*(x) a(y)`.
pub fn trotter_generating<T: Real>(state: &EvolutionState<T>, steps: usize) -> Result<TrotterValue<T>> {
    if steps == 0 {
        return Err(Error::Invalid("Trotter step count must be positive".into()));
    }
    let dim = state.h0.nrows();
    let tau = state.time / T::of_usize(steps);
    let c = evolution_operator(&state.h0, tau)?;
    let d = linalg::identity::<T>(dim) - state.v.map(|z| ci::<T>() * cscale(z, tau));
    let right_step = &c * &d;
    let left_step = c.adjoint() * d.adjoint();
    let mut right = linalg::identity::<T>(dim);
    let mut left = linalg::identity::<T>(dim);
    for _ in 0..steps {
        right = &right * &right_step;
        left = &left * &left_step;
    }
    // Tr(L O R ρ₀) = Tr(O R ρ₀ L).
    let w = right * &state.rho0 * left;
    if !linalg::is_finite(&w) {
        return Err(Error::NonFinite("Trotter product"));
    }
    let z = linalg::trace(&w);
    let n = state.n_sites;
    let z0 = creal(state.z0);
    let gamma11 = CMatrix::from_fn(n, n, |x, y| moment_of(&w, state.epsilon, &[x], &[y]) / z0);
    Ok(TrotterValue {
        steps,
        z,
        gamma11,
    })
}

/// Fermi function `f_β(E) = (1 + e^{βE})⁻¹`, evaluated without overflow.
pub fn fermi<T: Real>(beta: T, e: T) -> T {
    let x = beta * e;
    if x > T::zero() {
        let t = (-x).exp();
        t / (T::one() + t)
    } else {
        T::one() / (T::one() + x.exp())
    }
}

/// `f_β(εK)` for a Hermitian kernel `K` (already ε-scaled by the caller).
pub fn fermi_matrix<T: Real>(beta: T, scaled_kernel: &CMatrix<T>) -> CMatrix<T> {
    linalg::hermitian_function(scaled_kernel, |e| creal(fermi(beta, e)))
}

/// Largest deviation from the canonical anticommutation relations.
pub fn car_deviation<T: Real>(fock: &FockSpace<T>) -> Result<T> {
    let n = fock.n_sites();
    let dim = fock.dim();
    let inv_eps = T::one() / fock.epsilon();
    let id = linalg::identity::<T>(dim);
    let mut dev = T::zero();
    let a: Vec<_> = (0..n).map(|x| fock.annihilator(x)).collect::<Result<_>>()?;
    for x in 0..n {
        for y in 0..n {
            let aa = &a[x] * &a[y] + &a[y] * &a[x];
            dev = dev.max(max_abs(&aa));
            let ad = a[y].adjoint();
            let anti = &a[x] * &ad + &ad * &a[x];
            let expected = if x == y { linalg::scale(&id, inv_eps) } else { linalg::zeros(dim) };
            dev = dev.max(linalg::max_abs_diff(&anti, &expected));
        }
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vertex;
    use crate::scalar::cx;
    use nalgebra::DMatrix;

    fn real_matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> CMatrix<f64> {
        DMatrix::from_fn(n, n, |r, c| cx(f(r, c), 0.0))
    }

    fn diag_model(eps: f64, a: &[f64], b: &[f64], q: &[f64]) -> OneParticleModel<f64> {
        let n = a.len();
        let d = |v: &[f64]| real_matrix(n, |r, c| if r == c { v[r] } else { 0.0 });
        OneParticleModel::new(eps, d(a), d(b), d(q)).unwrap()
    }

    #[test]
    fn single_mode_ladder() {
        let fock = FockSpace::<f64>::with_cap(1, 1.0, 10).unwrap();
        let a = fock.annihilator(0).unwrap();
        assert_eq!(a, real_matrix(2, |r, c| if (r, c) == (0, 1) { 1.0 } else { 0.0 }));
    }

    #[test]
    fn car_relations_with_normalization() {
        for (n, eps) in [(2, 1.0), (3, 4.0)] {
            let fock = FockSpace::<f64>::with_cap(n, eps, 10).unwrap();
            assert!(car_deviation(&fock).unwrap() < 1e-14);
        }
        let fock = FockSpace::<f64>::with_cap(3, 4.0, 10).unwrap();
        let a = fock.annihilator(1).unwrap();
        let anti = &a * a.adjoint() + a.adjoint() * &a;
        assert!((anti[(5, 5)] - cx(0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            FockSpace::<f64>::with_cap(11, 1.0, 10),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn number_operator_and_zero_kernel() {
        let fock = FockSpace::<f64>::with_cap(1, 1.0, 10).unwrap();
        let op = fock.quadratic_operator(&real_matrix(1, |_, _| 0.7)).unwrap();
        assert_eq!(op, real_matrix(2, |r, c| if r == 1 && c == 1 { 0.7 } else { 0.0 }));
        let fock = FockSpace::<f64>::with_cap(3, 2.0, 10).unwrap();
        assert_eq!(max_abs(&fock.quadratic_operator(&linalg::zeros(3)).unwrap()), 0.0);
        assert!(fock.quadratic_operator(&linalg::zeros(2)).is_err());
    }

    #[test]
    fn density_density_is_diagonal_quartic() {
        let fock = FockSpace::<f64>::with_cap(2, 1.0, 10).unwrap();
        let v = Interaction::density_density(2, &[(0, 1, 1.0)]).unwrap().with_coupling(0.3);
        let op = fock.interaction_operator(&v).unwrap();
        assert!(linalg::max_abs_diff(&op, &real_matrix(4, |r, c| if r == 3 && c == 3 { 0.3 } else { 0.0 })) < 1e-15);
    }

    #[test]
    fn odd_vertex_is_rejected() {
        let fock = FockSpace::<f64>::with_cap(2, 1.0, 10).unwrap();
        let mut v = Interaction::zero(2);
        let mut odd = Vertex::new(2, 1);
        odd.add_antisymmetrized(&[0, 1], &[0], cx(1.0, 0.0));
        v.add_vertex(odd).unwrap();
        let err = fock.interaction_operator(&v).unwrap_err();
        assert!(err.to_string().contains("odd interaction"));
    }

    #[test]
    fn static_expectation_is_fermi_matrix() {
        let model = diag_model(1.0, &[0.3, -0.2], &[0.0, 0.0], &[0.3, -0.2]);
        let fock = FockSpace::new(&model).unwrap();
        let state = EvolutionState::new(&fock, &model, &Interaction::zero(2), 1.5, 0.0).unwrap();
        for x in 0..2 {
            let value = state.expectation(&fock.hopping(x, x).unwrap()).unwrap();
            assert!((value.re - fermi(1.5, [0.3, -0.2][x])).abs() < 1e-12);
        }
    }

    #[test]
    fn dissipative_single_mode_occupation_decays() {
        let (q, b, beta, t) = (0.4, 0.3, 2.0, 1.7);
        let model = diag_model(1.0, &[q], &[b], &[q]);
        let fock = FockSpace::new(&model).unwrap();
        let state = EvolutionState::new(&fock, &model, &Interaction::zero(1), beta, t).unwrap();
        let n = state.expectation(&fock.hopping(0, 0).unwrap()).unwrap();
        let expected = fermi(beta, q) * (-2.0 * b * t).exp();
        assert!((n.re - expected).abs() < 1e-12 && n.im.abs() < 1e-12);
    }

    #[test]
    fn trotter_at_t_zero_is_z0() {
        let model = diag_model(1.0, &[0.3, -0.2], &[0.0, 0.1], &[0.5, 0.1]);
        let fock = FockSpace::new(&model).unwrap();
        let v = Interaction::chain_density_density(2, 0.4).unwrap();
        let state = EvolutionState::new(&fock, &model, &v, 1.0, 0.0).unwrap();
        let z1 = trotter_generating(&state, 1).unwrap().z;
        assert!((z1 - cx(state.z0(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fermi_is_stable() {
        assert_eq!(fermi(1.0, 1.0e4), 0.0);
        assert_eq!(fermi(1.0, -1.0e4), 1.0);
        assert!((fermi(2.0f64, 0.0) - 0.5).abs() < 1e-16);
    }
}
