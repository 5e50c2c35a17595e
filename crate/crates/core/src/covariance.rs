//! Keldysh covariance: continuum blocks, the commuting specialization and
//! the time-discretized inverse matrix.
//!
//! Blocks are computed in canonical form (operators acting on `c`), with
//! `Â_± = ε(A ± iB)`, `Q̂ = εQ`, `E_±(s) = e^{iÂ_± s}` and
//! `K = e^{-βQ̂} E_+(T) E_-(-T)`, `f_- = (1 + K)⁻¹`, `f_+ = f_- K`.
//! The covariance kernel on `𝕏` is `ε⁻¹` times the canonical block entry.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, ExpGenerator};
use crate::model::OneParticleModel;
use crate::scalar::{cexp, ci, creal, Cx, CMatrix, Real};

/// Contour branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Plus, Branch::Minus];

    pub fn index(self) -> usize {
        match self {
            Branch::Plus => 0,
            Branch::Minus => 1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Branch::Plus => '+',
            Branch::Minus => '-',
        }
    }
}

/// A point `(σ, t, x)` of the Keldysh index set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeldyshPoint<T: Real> {
    pub branch: Branch,
    pub time: T,
    pub site: usize,
}

impl<T: Real> KeldyshPoint<T> {
    pub fn new(branch: Branch, time: T, site: usize) -> Self {
        Self { branch, time, site }
    }
}

/// Resolution of coinciding times in the same-branch blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimeOrder {
    /// Indicators as written: `t ≥ t'` on `++`, `t ≤ t'` on `--`, both inclusive.
    Inclusive,
    /// Treat the first argument as strictly later.
    Later,
    /// Treat the first argument as strictly earlier.
    Earlier,
}

/// Common interface of the continuum covariances.
pub trait Covariance<T: Real>: Sync {
    fn n_sites(&self) -> usize;
    fn epsilon(&self) -> T;
    fn beta(&self) -> T;
    fn total_time(&self) -> T;

    /// Canonical `|X|×|X|` block `C_{σσ'}(t, t')`.
    fn canonical_block(&self, s: Branch, t: T, s2: Branch, t2: T, order: TimeOrder) -> Result<CMatrix<T>>;

    /// Kernel block `ε⁻¹ C_{σσ'}(t, t')`.
    fn block(&self, s: Branch, t: T, s2: Branch, t2: T, order: TimeOrder) -> Result<CMatrix<T>> {
        Ok(linalg::scale(
            &self.canonical_block(s, t, s2, t2, order)?,
            T::one() / self.epsilon(),
        ))
    }

    /// Kernel value `C(X, Y)`.
    fn entry(&self, x: &KeldyshPoint<T>, y: &KeldyshPoint<T>, order: TimeOrder) -> Result<Cx<T>> {
        let b = self.block(x.branch, x.time, y.branch, y.time, order)?;
        Ok(b[(x.site, y.site)])
    }
}

fn check_times<T: Real>(total: T, times: [T; 2]) -> Result<()> {
    let slack = T::of(1.0e-12) * (T::one() + total);
    for t in times {
        if !(t >= -slack && t <= total + slack) {
            return Err(Error::Invalid(format!("time {t} outside [0, {total}]")));
        }
    }
    Ok(())
}

fn check_parameters<T: Real>(beta: T, total: T) -> Result<()> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::Invalid("beta must be positive and finite".into()));
    }
    if !(total >= T::zero()) || !total.is_finite() {
        return Err(Error::Invalid("total time must be nonnegative and finite".into()));
    }
    Ok(())
}

/// `t ≥ t'` with the requested coincidence rule.
fn later_or_equal<T: Real>(t: T, t2: T, order: TimeOrder) -> bool {
    if t == t2 {
        !matches!(order, TimeOrder::Earlier)
    } else {
        t > t2
    }
}

/// `t ≤ t'` with the requested coincidence rule.
fn earlier_or_equal<T: Real>(t: T, t2: T, order: TimeOrder) -> bool {
    if t == t2 {
        !matches!(order, TimeOrder::Later)
    } else {
        t < t2
    }
}

/// General Keldysh covariance for arbitrary `A`, `B ≥ 0`, `Q`.
#[derive(Debug, Clone)]
pub struct ContinuumCovariance<T: Real> {
    n_sites: usize,
    epsilon: T,
    beta: T,
    total: T,
    plus: ExpGenerator<T>,
    minus: ExpGenerator<T>,
    exp_beta_q: CMatrix<T>,
    f_minus: CMatrix<T>,
    f_plus: CMatrix<T>,
    // Time-independent middle factors of the six cases.
    mp_mid: CMatrix<T>,
    pm_mid: CMatrix<T>,
    mm_leq_mid: CMatrix<T>,
    mm_gt_mid: CMatrix<T>,
}

impl<T: Real> ContinuumCovariance<T> {
    pub fn new(model: &OneParticleModel<T>, beta: T, total: T) -> Result<Self> {
        check_parameters(beta, total)?;
        let n = model.n_sites();
        let plus = ExpGenerator::new(model.scaled_a_plus().map(|z| ci::<T>() * z));
        let minus = ExpGenerator::new(model.scaled_a_minus().map(|z| ci::<T>() * z));
        let exp_beta_q = linalg::hermitian_function(&model.scaled_q(), |e| creal((-beta * e).exp()));
        let em_neg_t = minus.at(-total)?;
        let em_t = minus.at(total)?;
        let k = &exp_beta_q * plus.at(total)? * &em_neg_t;
        let one_plus_k = linalg::identity::<T>(n) + &k;
        // f_- = (1 + K)⁻¹ and f_+ = f_- K = 1 - f_-, both via a linear solve.
        let f_minus = linalg::solve(&one_plus_k, &linalg::identity(n), "1 + e^{-βQ}E_+(T)E_-(-T)")?;
        let f_plus = linalg::solve(&one_plus_k, &k, "1 + e^{-βQ}E_+(T)E_-(-T)")?;
        let mp_mid = &em_neg_t * &f_minus;
        let pm_mid = -(&f_minus * &exp_beta_q);
        let mm_leq_mid = &mp_mid * &em_t;
        let mm_gt_mid = -(&mp_mid * &exp_beta_q);
        Ok(Self {
            n_sites: n,
            epsilon: model.epsilon(),
            beta,
            total,
            plus,
            minus,
            exp_beta_q,
            f_minus,
            f_plus,
            mp_mid,
            pm_mid,
            mm_leq_mid,
            mm_gt_mid,
        })
    }

    /// `f_- = (1 + e^{-βQ̂}E_+(T)E_-(-T))⁻¹`.
    pub fn f_minus(&self) -> &CMatrix<T> {
        &self.f_minus
    }

    /// `f_+ = f_- e^{-βQ̂}E_+(T)E_-(-T)`.
    pub fn f_plus(&self) -> &CMatrix<T> {
        &self.f_plus
    }

    pub fn exp_beta_q(&self) -> &CMatrix<T> {
        &self.exp_beta_q
    }

    /// `E_+(s) = e^{iÂ_+ s}`.
    pub fn exp_plus(&self, s: T) -> Result<CMatrix<T>> {
        self.plus.at(s)
    }

    /// `E_-(s) = e^{iÂ_- s}`.
    pub fn exp_minus(&self, s: T) -> Result<CMatrix<T>> {
        self.minus.at(s)
    }

    /// `(1 + K)` as used in the determinant identity.
    pub fn one_plus_k(&self) -> Result<CMatrix<T>> {
        let k = &self.exp_beta_q * self.plus.at(self.total)? * self.minus.at(-self.total)?;
        Ok(linalg::identity::<T>(self.n_sites) + k)
    }

    /// `det(1 + e^{-βQ̂} E_+(T) E_-(-T))`.
    pub fn determinant(&self) -> Result<Cx<T>> {
        Ok(linalg::determinant(&self.one_plus_k()?))
    }
}

impl<T: Real> Covariance<T> for ContinuumCovariance<T> {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn epsilon(&self) -> T {
        self.epsilon
    }

    fn beta(&self) -> T {
        self.beta
    }

    fn total_time(&self) -> T {
        self.total
    }

    fn canonical_block(&self, s: Branch, t: T, s2: Branch, t2: T, order: TimeOrder) -> Result<CMatrix<T>> {
        check_times(self.total, [t, t2])?;
        let big_t = self.total;
        let out = match (s, s2) {
            (Branch::Minus, Branch::Plus) => self.plus.at(big_t - t)? * &self.mp_mid * self.minus.at(t2)?,
            (Branch::Plus, Branch::Minus) => self.minus.at(-t)? * &self.pm_mid * self.plus.at(t2)?,
            (Branch::Plus, Branch::Plus) => {
                if later_or_equal(t, t2, order) {
                    self.minus.at(-t)? * &self.f_minus * self.minus.at(t2)?
                } else {
                    -(self.minus.at(-t)? * &self.f_plus * self.minus.at(t2)?)
                }
            }
            (Branch::Minus, Branch::Minus) => {
                if earlier_or_equal(t, t2, order) {
                    self.plus.at(big_t - t)? * &self.mm_leq_mid * self.plus.at(t2 - big_t)?
                } else {
                    self.plus.at(big_t - t)? * &self.mm_gt_mid * self.plus.at(t2)?
                }
            }
        };
        if !linalg::is_finite(&out) {
            return Err(Error::NonFinite("covariance block"));
        }
        Ok(out)
    }
}

/// The six closed forms a block can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Case {
    MinusPlus,
    PlusMinus,
    PlusPlusLater,
    PlusPlusEarlier,
    MinusMinusEarlier,
    MinusMinusLater,
}

impl Case {
    const ALL: [Case; 6] = [
        Case::MinusPlus,
        Case::PlusMinus,
        Case::PlusPlusLater,
        Case::PlusPlusEarlier,
        Case::MinusMinusEarlier,
        Case::MinusMinusLater,
    ];

    fn select<T: Real>(s: Branch, t: T, s2: Branch, t2: T, order: TimeOrder) -> Self {
        match (s, s2) {
            (Branch::Minus, Branch::Plus) => Case::MinusPlus,
            (Branch::Plus, Branch::Minus) => Case::PlusMinus,
            (Branch::Plus, Branch::Plus) => {
                if later_or_equal(t, t2, order) {
                    Case::PlusPlusLater
                } else {
                    Case::PlusPlusEarlier
                }
            }
            (Branch::Minus, Branch::Minus) => {
                if earlier_or_equal(t, t2, order) {
                    Case::MinusMinusEarlier
                } else {
                    Case::MinusMinusLater
                }
            }
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Canonical blocks on a fixed list of times, stored as per-time left and
/// right factors so each block costs a single matrix product.
#[derive(Debug, Clone)]
pub struct GridBlocks<T: Real> {
    times: Vec<T>,
    left: Vec<Vec<CMatrix<T>>>,
    right: Vec<Vec<CMatrix<T>>>,
}

impl<T: Real> GridBlocks<T> {
    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Canonical `C_{σσ'}(t_i, t_j)`.
    pub fn block(&self, s: Branch, i: usize, s2: Branch, j: usize, order: TimeOrder) -> CMatrix<T> {
        let case = Case::select(s, self.times[i], s2, self.times[j], order).index();
        &self.left[case][i] * &self.right[case][j]
    }
}

impl<T: Real> ContinuumCovariance<T> {
    /// Factorizes all blocks on the given times.
    pub fn grid_blocks(&self, times: &[T]) -> Result<GridBlocks<T>> {
        let big_t = self.total;
        let mut left = vec![Vec::with_capacity(times.len()); 6];
        let mut right = vec![Vec::with_capacity(times.len()); 6];
        for &t in times {
            check_times(self.total, [t, t])?;
            let ep_rest = self.plus.at(big_t - t)?;
            let em_back = self.minus.at(-t)?;
            let em = self.minus.at(t)?;
            let ep = self.plus.at(t)?;
            let ep_shift = self.plus.at(t - big_t)?;
            for case in Case::ALL {
                let (l, r) = match case {
                    Case::MinusPlus => (&ep_rest * &self.mp_mid, em.clone()),
                    Case::PlusMinus => (&em_back * &self.pm_mid, ep.clone()),
                    Case::PlusPlusLater => (&em_back * &self.f_minus, em.clone()),
                    Case::PlusPlusEarlier => (-(&em_back * &self.f_plus), em.clone()),
                    Case::MinusMinusEarlier => (&ep_rest * &self.mm_leq_mid, ep_shift.clone()),
                    Case::MinusMinusLater => (&ep_rest * &self.mm_gt_mid, ep.clone()),
                };
                left[case.index()].push(l);
                right[case.index()].push(r);
            }
        }
        Ok(GridBlocks {
            times: times.to_vec(),
            left,
            right,
        })
    }
}

/// Simplified covariance valid when `[A,B] = [B,Q] = 0`.
#[derive(Debug, Clone)]
pub struct CommutingCovariance<T: Real> {
    n_sites: usize,
    epsilon: T,
    beta: T,
    total: T,
    a_hat: CMatrix<T>,
    b_hat: CMatrix<T>,
    f_tilde: CMatrix<T>,
    f_tilde_exp_beta_q: CMatrix<T>,
}

impl<T: Real> CommutingCovariance<T> {
    pub fn new(model: &OneParticleModel<T>, beta: T, total: T) -> Result<Self> {
        check_parameters(beta, total)?;
        if !model.commuting() {
            let (ab, bq) = model.commutator_norms();
            return Err(Error::Hypothesis(format!(
                "commuting covariance needs [A,B] = [B,Q] = 0 (got {ab:e}, {bq:e})"
            )));
        }
        let n = model.n_sites();
        let a_hat = model.scaled_a();
        let b_hat = model.scaled_b();
        let exp_beta_q = linalg::hermitian_function(&model.scaled_q(), |e| creal((-beta * e).exp()));
        let damping = linalg::hermitian_function(&b_hat, |e| creal((-T::of(2.0) * total * e).exp()));
        let denom = linalg::identity::<T>(n) + &exp_beta_q * damping;
        let f_tilde = linalg::solve(&denom, &linalg::identity(n), "1 + e^{-βQ}e^{-2TB}")?;
        let f_tilde_exp_beta_q = &f_tilde * &exp_beta_q;
        Ok(Self {
            n_sites: n,
            epsilon: model.epsilon(),
            beta,
            total,
            a_hat,
            b_hat,
            f_tilde,
            f_tilde_exp_beta_q,
        })
    }

    fn rotation(&self, s: T) -> CMatrix<T> {
        let phase = ci::<T>() * creal(s);
        linalg::hermitian_function(&self.a_hat, |e| cexp(phase * creal(e)))
    }

    fn damping(&self, s: T) -> CMatrix<T> {
        linalg::hermitian_function(&self.b_hat, |e| creal((s * e).exp()))
    }

    /// `f̃ = (1 + e^{-βQ̂} e^{-2TB̂})⁻¹`.
    pub fn f_tilde(&self) -> &CMatrix<T> {
        &self.f_tilde
    }
}

impl<T: Real> Covariance<T> for CommutingCovariance<T> {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn epsilon(&self) -> T {
        self.epsilon
    }

    fn beta(&self) -> T {
        self.beta
    }

    fn total_time(&self) -> T {
        self.total
    }

    fn canonical_block(&self, s: Branch, t: T, s2: Branch, t2: T, order: TimeOrder) -> Result<CMatrix<T>> {
        check_times(self.total, [t, t2])?;
        let two_t = T::of(2.0) * self.total;
        let left = self.rotation(-t);
        let right = self.rotation(t2);
        let (mid, exponent, negative) = match (s, s2) {
            (Branch::Minus, Branch::Plus) => (&self.f_tilde, t + t2 - two_t, false),
            (Branch::Plus, Branch::Minus) => (&self.f_tilde_exp_beta_q, -(t + t2), true),
            (Branch::Plus, Branch::Plus) => {
                if later_or_equal(t, t2, order) {
                    (&self.f_tilde, t2 - t, false)
                } else {
                    (&self.f_tilde_exp_beta_q, t2 - t - two_t, true)
                }
            }
            (Branch::Minus, Branch::Minus) => {
                if earlier_or_equal(t, t2, order) {
                    (&self.f_tilde, t - t2, false)
                } else {
                    (&self.f_tilde_exp_beta_q, t - t2 - two_t, true)
                }
            }
        };
        let out = left * mid * right * self.damping(exponent);
        Ok(if negative { -out } else { out })
    }
}

/// Builds the commuting specialization, refusing when the hypotheses fail.
pub fn commuting_covariance<T: Real>(
    model: &OneParticleModel<T>,
    beta: T,
    total: T,
) -> Result<CommutingCovariance<T>> {
    CommutingCovariance::new(model, beta, total)
}

/// Largest flat dimension of the discrete system.
pub const DISCRETE_DIM_CAP: usize = 4096;

/// Time-discretized inverse covariance on the grid `t_m = mT/N`, `m = 0..N`.
///
/// Flat index: branch-major (`+` first), then time index, then site.
#[derive(Debug, Clone)]
pub struct DiscreteKeldyshSystem<T: Real> {
    n_sites: usize,
    steps: usize,
    total: T,
    epsilon: T,
    step_operator: CMatrix<T>,
    inverse_matrix: CMatrix<T>,
    covariance: Option<CMatrix<T>>,
    residual: Option<T>,
    expected_determinant: Cx<T>,
}

impl<T: Real> DiscreteKeldyshSystem<T> {
    pub fn new(model: &OneParticleModel<T>, beta: T, total: T, steps: usize) -> Result<Self> {
        Self::with_cap(model, beta, total, steps, DISCRETE_DIM_CAP)
    }

    pub fn with_cap(model: &OneParticleModel<T>, beta: T, total: T, steps: usize, cap: usize) -> Result<Self> {
        check_parameters(beta, total)?;
        if steps == 0 {
            return Err(Error::Invalid("discretization needs N >= 1".into()));
        }
        let n = model.n_sites();
        let dim = 2 * (steps + 1) * n;
        if dim > cap {
            return Err(Error::CapExceeded {
                what: "discrete Keldysh dimension",
                size: dim,
                cap,
            });
        }
        let plus = ExpGenerator::new(model.scaled_a_plus().map(|z| ci::<T>() * z));
        let minus = ExpGenerator::new(model.scaled_a_minus().map(|z| ci::<T>() * z));
        let u = plus.at(total / T::of_usize(steps))?;
        let u_dag = u.adjoint();
        let exp_beta_q = linalg::hermitian_function(&model.scaled_q(), |e| creal((-beta * e).exp()));
        let k = &exp_beta_q * plus.at(total)? * minus.at(-total)?;
        let expected_determinant = linalg::determinant(&(linalg::identity::<T>(n) + k));

        let idx = |b: Branch, m: usize| (b.index() * (steps + 1) + m) * n;
        let mut minv = linalg::identity::<T>(dim);
        let mut add = |row: usize, col: usize, block: &CMatrix<T>, sign: T| {
            for i in 0..n {
                for j in 0..n {
                    minv[(row + i, col + j)] += block[(i, j)] * creal(sign);
                }
            }
        };
        let id = linalg::identity::<T>(n);
        for m in 1..=steps {
            add(idx(Branch::Plus, m), idx(Branch::Plus, m - 1), &u_dag, -T::one());
        }
        for m in 0..steps {
            add(idx(Branch::Minus, m), idx(Branch::Minus, m + 1), &u, -T::one());
        }
        add(idx(Branch::Minus, steps), idx(Branch::Plus, steps), &id, -T::one());
        add(idx(Branch::Plus, 0), idx(Branch::Minus, 0), &exp_beta_q, T::one());

        Ok(Self {
            n_sites: n,
            steps,
            total,
            epsilon: model.epsilon(),
            step_operator: u,
            inverse_matrix: minv,
            covariance: None,
            residual: None,
            expected_determinant,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.inverse_matrix.nrows()
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// `U_N = e^{iÂ_+ T/N}`.
    pub fn step_operator(&self) -> &CMatrix<T> {
        &self.step_operator
    }

    /// The assembled inverse covariance `(G^{(N)})⁻¹`.
    pub fn inverse_matrix(&self) -> &CMatrix<T> {
        &self.inverse_matrix
    }

    /// Time of grid index `m`.
    pub fn grid_time(&self, m: usize) -> T {
        self.total * T::of_usize(m) / T::of_usize(self.steps)
    }

    /// Flat row of `(σ, m, x)`.
    pub fn flat_index(&self, branch: Branch, m: usize, x: usize) -> usize {
        (branch.index() * (self.steps + 1) + m) * self.n_sites + x
    }

    /// Inverse of [`Self::flat_index`].
    pub fn unflatten(&self, row: usize) -> (Branch, usize, usize) {
        let x = row % self.n_sites;
        let rest = row / self.n_sites;
        let m = rest % (self.steps + 1);
        let b = if rest / (self.steps + 1) == 0 { Branch::Plus } else { Branch::Minus };
        (b, m, x)
    }

    pub fn determinant(&self) -> Cx<T> {
        linalg::determinant(&self.inverse_matrix)
    }

    /// Closed form `det(1 + e^{-βQ̂} E_+(T) E_-(-T))`.
    pub fn expected_determinant(&self) -> Cx<T> {
        self.expected_determinant
    }

    /// Inverts the system; returns `‖Minv·G - I‖_max`.
    pub fn invert(&mut self) -> Result<T> {
        if let Some(r) = self.residual {
            return Ok(r);
        }
        let g = linalg::inverse(&self.inverse_matrix, "discrete Keldysh matrix")?;
        let residual = linalg::max_abs_diff(
            &(&self.inverse_matrix * &g),
            &linalg::identity(self.dim()),
        );
        self.covariance = Some(g);
        self.residual = Some(residual);
        Ok(residual)
    }

    /// Canonical `G^{(N)}`; inverts on first use.
    pub fn covariance(&mut self) -> Result<&CMatrix<T>> {
        self.invert()?;
        Ok(self.covariance.as_ref().expect("inverted"))
    }

    pub fn residual(&self) -> Option<T> {
        self.residual
    }

    /// Canonical `|X|×|X|` block of `G^{(N)}`.
    pub fn block(&mut self, s: Branch, m: usize, s2: Branch, m2: usize) -> Result<CMatrix<T>> {
        let n = self.n_sites;
        let r = self.flat_index(s, m, 0);
        let c = self.flat_index(s2, m2, 0);
        let g = self.covariance()?;
        Ok(g.view((r, c), (n, n)).into_owned())
    }

    /// `(G^{(N)}_{+-})` at the final grid point on both branches.
    pub fn equiv_block(&mut self) -> Result<CMatrix<T>> {
        let steps = self.steps;
        self.block(Branch::Plus, steps, Branch::Minus, steps)
    }
}

/// Grid comparison of the discrete and continuum covariances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConsistency {
    pub steps: usize,
    pub max_deviation: f64,
    pub max_entry: f64,
    pub relative: f64,
    pub inversion_residual: f64,
}

/// `max |G^{(N)} - C(grid)|` over all branches, grid times and sites.
pub fn grid_consistency<T: Real>(
    system: &mut DiscreteKeldyshSystem<T>,
    continuum: &dyn Covariance<T>,
) -> Result<GridConsistency> {
    let residual = system.invert()?;
    let steps = system.steps;
    let mut dev = T::zero();
    let mut largest = T::zero();
    for s in Branch::BOTH {
        for s2 in Branch::BOTH {
            for m in 0..=steps {
                for m2 in 0..=steps {
                    let c = continuum.canonical_block(
                        s,
                        system.grid_time(m),
                        s2,
                        system.grid_time(m2),
                        TimeOrder::Inclusive,
                    )?;
                    let g = system.block(s, m, s2, m2)?;
                    dev = dev.max(linalg::max_abs_diff(&g, &c));
                    largest = largest.max(linalg::max_abs(&c));
                }
            }
        }
    }
    Ok(GridConsistency {
        steps,
        max_deviation: dev.as_f64(),
        max_entry: largest.as_f64(),
        relative: dev.as_f64() / (1.0 + largest.as_f64()),
        inversion_residual: residual.as_f64(),
    })
}

/// One row of a `|C_{σσ'}(t,t')|` dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsRow {
    pub branch: char,
    pub branch2: char,
    pub t: f64,
    pub t2: f64,
    pub x: usize,
    pub y: usize,
    pub abs: f64,
}

/// `|C|` on a uniform grid of `points + 1` times per branch.
pub fn abs_grid<T: Real>(cov: &dyn Covariance<T>, points: usize) -> Result<Vec<AbsRow>> {
    let points = points.max(1);
    let total = cov.total_time();
    let n = cov.n_sites();
    let mut rows = Vec::new();
    for s in Branch::BOTH {
        for s2 in Branch::BOTH {
            for i in 0..=points {
                let t = total * T::of_usize(i) / T::of_usize(points);
                for j in 0..=points {
                    let t2 = total * T::of_usize(j) / T::of_usize(points);
                    let b = cov.block(s, t, s2, t2, TimeOrder::Inclusive)?;
                    for x in 0..n {
                        for y in 0..n {
                            rows.push(AbsRow {
                                branch: s.symbol(),
                                branch2: s2.symbol(),
                                t: t.as_f64(),
                                t2: t2.as_f64(),
                                x,
                                y,
                                abs: crate::scalar::cabs(b[(x, y)]).as_f64(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fermi_matrix;
    use crate::scalar::cx;
    use nalgebra::DMatrix;

    fn model(eps: f64, a: &[[f64; 2]; 2], b: &[[f64; 2]; 2], q: &[[f64; 2]; 2]) -> OneParticleModel<f64> {
        let m = |v: &[[f64; 2]; 2]| DMatrix::from_fn(2, 2, |r, c| cx(v[r][c], 0.0));
        OneParticleModel::new(eps, m(a), m(b), m(q)).unwrap()
    }

    fn hermitian_model() -> OneParticleModel<f64> {
        model(
            1.0,
            &[[0.4, -0.7], [-0.7, -0.1]],
            &[[0.0, 0.0], [0.0, 0.0]],
            &[[0.2, 0.3], [0.3, 0.5]],
        )
    }

    fn dissipative_model() -> OneParticleModel<f64> {
        model(
            0.5,
            &[[0.4, -0.7], [-0.7, -0.1]],
            &[[0.5, 0.1], [0.1, 0.3]],
            &[[0.2, 0.3], [0.3, 0.5]],
        )
    }

    #[test]
    fn fermi_factors_sum_to_identity() {
        let cov = ContinuumCovariance::new(&dissipative_model(), 1.3, 0.8).unwrap();
        let sum = cov.f_minus() + cov.f_plus();
        assert!(linalg::max_abs_diff(&sum, &linalg::identity(2)) < 1e-13);
    }

    #[test]
    fn equal_time_sum_rule_without_dissipation() {
        let cov = ContinuumCovariance::new(&hermitian_model(), 1.1, 1.5).unwrap();
        for t in [0.0, 0.3, 1.5] {
            let mp = cov.canonical_block(Branch::Minus, t, Branch::Plus, t, TimeOrder::Inclusive).unwrap();
            let pm = cov.canonical_block(Branch::Plus, t, Branch::Minus, t, TimeOrder::Inclusive).unwrap();
            assert!(linalg::max_abs_diff(&(&mp - &pm), &linalg::identity(2)) < 1e-12);
            assert!(linalg::hermitian_deviation(&mp) < 1e-12);
            let pp = cov.canonical_block(Branch::Plus, t, Branch::Plus, t, TimeOrder::Inclusive).unwrap();
            assert!(linalg::max_abs_diff(&pp, &mp) < 1e-12);
        }
    }

    #[test]
    fn unitary_case_has_fermi_blocks() {
        let m = hermitian_model();
        let cov = ContinuumCovariance::new(&m, 0.9, 0.0).unwrap();
        let f = fermi_matrix(0.9, &m.q().map(|z| -z));
        let mp = cov.canonical_block(Branch::Minus, 0.0, Branch::Plus, 0.0, TimeOrder::Inclusive).unwrap();
        assert!(linalg::max_abs_diff(&mp, &f) < 1e-13);
    }

    #[test]
    fn commuting_form_matches_general_form() {
        let a = [[0.3, 0.0], [0.0, -0.4]];
        let m = model(2.0, &a, &[[0.2, 0.0], [0.0, 0.6]], &[[0.5, 0.0], [0.0, 0.1]]);
        let general = ContinuumCovariance::new(&m, 1.2, 1.0).unwrap();
        let special = commuting_covariance(&m, 1.2, 1.0).unwrap();
        let times = [0.0, 0.25, 0.5, 0.75, 1.0];
        for s in Branch::BOTH {
            for s2 in Branch::BOTH {
                for &t in &times {
                    for &t2 in &times {
                        for order in [TimeOrder::Inclusive, TimeOrder::Later, TimeOrder::Earlier] {
                            let g = general.block(s, t, s2, t2, order).unwrap();
                            let c = special.block(s, t, s2, t2, order).unwrap();
                            assert!(linalg::max_abs_diff(&g, &c) < 1e-10, "{s:?}{s2:?} {t} {t2}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn commuting_form_refuses_noncommuting_model() {
        assert!(matches!(
            commuting_covariance(&dissipative_model(), 1.0, 1.0),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn single_step_single_mode_matrix_by_hand() {
        let (a, b, q, beta, t): (f64, f64, f64, f64, f64) = (0.3, 0.2, 0.7, 1.1, 0.9);
        let m = OneParticleModel::new(
            1.0,
            DMatrix::from_element(1, 1, cx(a, 0.0)),
            DMatrix::from_element(1, 1, cx(b, 0.0)),
            DMatrix::from_element(1, 1, cx(q, 0.0)),
        )
        .unwrap();
        let sys = DiscreteKeldyshSystem::new(&m, beta, t, 1).unwrap();
        let u = (cx(0.0, 1.0) * cx(a, b) * t).exp();
        let e = cx((-beta * q).exp(), 0.0);
        let one = cx(1.0, 0.0);
        let zero = cx(0.0, 0.0);
        // Rows/cols: (+,0), (+,1), (-,0), (-,1).
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                one, zero, e, zero,
                -u.conj(), one, zero, zero,
                zero, zero, one, -u,
                zero, -one, zero, one,
            ],
        );
        assert!(linalg::max_abs_diff(sys.inverse_matrix(), &expected) < 1e-15);
    }

    #[test]
    fn grid_consistency_and_determinant() {
        for m in [hermitian_model(), dissipative_model()] {
            let cov = ContinuumCovariance::new(&m, 0.8, 1.3).unwrap();
            for steps in [1, 4, 8] {
                let mut sys = DiscreteKeldyshSystem::new(&m, 0.8, 1.3, steps).unwrap();
                let report = grid_consistency(&mut sys, &cov).unwrap();
                assert!(report.relative < 1e-10, "{report:?}");
                let det = sys.determinant();
                let expected = cov.determinant().unwrap();
                assert!((det - expected).norm() < 1e-10 * expected.norm());
            }
        }
    }

    #[test]
    fn trivial_determinant() {
        let z = [[0.0, 0.0], [0.0, 0.0]];
        let m = model(1.0, &[[0.3, 0.1], [0.1, 0.0]], &z, &z);
        let sys = DiscreteKeldyshSystem::new(&m, 1.0, 1.0, 3).unwrap();
        assert!((sys.determinant() - cx(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn equiv_block_is_step_independent() {
        let m = dissipative_model();
        let mut coarse = DiscreteKeldyshSystem::new(&m, 0.7, 1.1, 4).unwrap();
        let mut fine = DiscreteKeldyshSystem::new(&m, 0.7, 1.1, 32).unwrap();
        let a = coarse.equiv_block().unwrap();
        let b = fine.equiv_block().unwrap();
        assert!(linalg::max_abs_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn grid_blocks_match_direct_evaluation() {
        let m = dissipative_model();
        let cov = ContinuumCovariance::new(&m, 0.9, 1.2).unwrap();
        let times = [0.0, 0.4, 0.4, 1.2];
        let grid = cov.grid_blocks(&times).unwrap();
        for s in Branch::BOTH {
            for s2 in Branch::BOTH {
                for i in 0..times.len() {
                    for j in 0..times.len() {
                        for order in [TimeOrder::Inclusive, TimeOrder::Later, TimeOrder::Earlier] {
                            let a = grid.block(s, i, s2, j, order);
                            let b = cov.canonical_block(s, times[i], s2, times[j], order).unwrap();
                            assert!(linalg::max_abs_diff(&a, &b) < 1e-13);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let m = hermitian_model();
        assert!(matches!(
            DiscreteKeldyshSystem::with_cap(&m, 1.0, 1.0, 100, 64),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn flat_index_round_trip() {
        let sys = DiscreteKeldyshSystem::new(&hermitian_model(), 1.0, 1.0, 3).unwrap();
        for row in 0..sys.dim() {
            let (b, m, x) = sys.unflatten(row);
            assert_eq!(sys.flat_index(b, m, x), row);
        }
    }
}
