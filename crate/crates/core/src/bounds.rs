//! Interaction norms, determinant and decay constants, the Combes–Thomas
//! uniform bound and the cumulant-bound verifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{Branch, ContinuumCovariance, Covariance, KeldyshPoint, TimeOrder};
use crate::cumulants::CumulantTable;
use crate::error::{Error, Result};
use crate::linalg::{self, max_abs};
use crate::model::{Interaction, Metric, OneParticleModel, Vertex, MODEL_TOLERANCE};
use crate::quadrature::uniform_weights;
use crate::scalar::{cabs, cx, CMatrix, Real};

/// Tolerance deciding `b̃ = 0` against `b̃ > 0`.
pub const SPECTRAL_TOLERANCE: f64 = 1.0e-10;

/// `|v|_{1,∞}` of a vertex with ε-weighted sums over all slots but one.
pub fn one_inf_norm<T: Real>(vertex: &Vertex<T>, epsilon: T) -> T {
    let k = vertex.m() + vertex.mbar();
    if k == 0 {
        return T::zero();
    }
    let mut marginals: Vec<std::collections::BTreeMap<usize, T>> = vec![Default::default(); k];
    for (x, y, v) in vertex.entries() {
        for (slot, &site) in x.iter().chain(y).enumerate() {
            *marginals[slot].entry(site).or_insert_with(T::zero) += cabs(v);
        }
    }
    let weight = epsilon.powi((k - 1) as i32);
    marginals
        .iter()
        .flat_map(|m| m.values())
        .fold(T::zero(), |a, &s| a.max(s * weight))
}

/// `‖V‖_h = Σ |λ v_{m,m̄}|_{1,∞} h^{m+m̄}`.
pub fn interaction_norm<T: Real>(interaction: &Interaction<T>, h: T, epsilon: T) -> Result<T> {
    if !(h > T::zero()) {
        return Err(Error::Invalid("interaction norm needs h > 0".into()));
    }
    Ok(interaction
        .effective_vertices()
        .iter()
        .map(|v| one_inf_norm(v, epsilon) * h.powi((v.m() + v.mbar()) as i32))
        .fold(T::zero(), |a, b| a + b))
}

/// Spectral infima of the ε-scaled `Q` and `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spectra {
    pub q_tilde: f64,
    pub b_tilde: f64,
    pub b_norm: f64,
}

impl Spectra {
    pub fn of<T: Real>(model: &OneParticleModel<T>) -> Self {
        Self {
            q_tilde: linalg::min_hermitian_eigenvalue(&model.scaled_q()).as_f64(),
            b_tilde: linalg::min_hermitian_eigenvalue(&model.scaled_b()).as_f64(),
            b_norm: max_abs(&model.scaled_b()).as_f64(),
        }
    }

    /// True when `B` vanishes, false when `B > 0`; mixed cases are refused.
    pub fn unitary(&self) -> Result<bool> {
        if self.b_norm <= SPECTRAL_TOLERANCE {
            Ok(true)
        } else if self.b_tilde > SPECTRAL_TOLERANCE {
            Ok(false)
        } else {
            Err(Error::Hypothesis(format!(
                "B is neither zero nor strictly positive (smallest eigenvalue {:e})",
                self.b_tilde
            )))
        }
    }
}

fn require_commuting<T: Real>(model: &OneParticleModel<T>) -> Result<()> {
    if model.commuting() {
        Ok(())
    } else {
        let (ab, bq) = model.commutator_norms();
        Err(Error::Hypothesis(format!(
            "no analytic δ_C available; use property-test estimate ([A,B] = {ab:e}, [B,Q] = {bq:e})"
        )))
    }
}

/// Determinant constant and the spectral data it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetBound {
    pub delta: f64,
    pub unitary: bool,
    pub spectra: Spectra,
}

/// `δ_C = 12 ε^{-1/2}` for `B = 0`, `6 ε^{-1/2} (1 + e^{-βq̃/2})` for `B > 0`.
pub fn det_bound<T: Real>(model: &OneParticleModel<T>, beta: T) -> Result<DetBound> {
    require_commuting(model)?;
    let spectra = Spectra::of(model);
    let unitary = spectra.unitary()?;
    let inv_sqrt_eps = 1.0 / model.epsilon().as_f64().sqrt();
    let delta = if unitary {
        12.0 * inv_sqrt_eps
    } else {
        6.0 * inv_sqrt_eps * (1.0 + (-0.5 * beta.as_f64() * spectra.q_tilde).exp())
    };
    Ok(DetBound {
        delta,
        unitary,
        spectra,
    })
}

/// Analytic upper bounds for `α_C` and `α̃_C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayBounds {
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub unitary: bool,
    pub spectra: Spectra,
}

pub fn decay_bounds_analytic<T: Real>(model: &OneParticleModel<T>, beta: T, total: T) -> Result<DecayBounds> {
    require_commuting(model)?;
    let spectra = Spectra::of(model);
    let unitary = spectra.unitary()?;
    let volume = model.n_sites() as f64;
    let (beta, total) = (beta.as_f64(), total.as_f64());
    let (alpha, alpha_tilde) = if unitary {
        (2.0 * volume * total, volume)
    } else {
        let b = spectra.b_tilde;
        let thermal = (-beta * spectra.q_tilde).exp();
        // (1 - e^{-Tb})/b without cancellation for small b.
        let growth = -(-total * b).exp_m1() / b;
        (
            2.0 * volume * (1.0 + thermal) * growth,
            volume * (thermal * (-total * b).exp()).max(1.0),
        )
    };
    Ok(DecayBounds {
        alpha,
        alpha_tilde,
        unitary,
        spectra,
    })
}

/// `2|X|(1 + e^{-βq̃})/b̃`, the large-time limit of the dissipative bound.
pub fn alpha_bound_limit<T: Real>(model: &OneParticleModel<T>, beta: T) -> Result<f64> {
    let spectra = Spectra::of(model);
    if spectra.unitary()? {
        return Err(Error::Hypothesis("the large-time limit needs B > 0".into()));
    }
    Ok(2.0 * model.n_sites() as f64 * (1.0 + (-beta.as_f64() * spectra.q_tilde).exp()) / spectra.b_tilde)
}

/// Numeric decay constants with a step-halving error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayConstants {
    pub alpha: f64,
    pub alpha_error: f64,
    pub alpha_tilde: f64,
    pub alpha_tilde_error: f64,
    pub panels: usize,
}

fn row_col_sums<T: Real>(m: &CMatrix<T>) -> (Vec<T>, Vec<T>) {
    let n = m.nrows();
    let mut rows = vec![T::zero(); n];
    let mut cols = vec![T::zero(); n];
    for r in 0..n {
        for c in 0..n {
            let a = cabs(m[(r, c)]);
            rows[r] += a;
            cols[c] += a;
        }
    }
    (rows, cols)
}

/// `(α, α̃)` on a uniform grid with `panels` time steps.
fn decay_on_grid<T: Real>(cov: &ContinuumCovariance<T>, panels: usize) -> Result<(T, T)> {
    let n = cov.n_sites();
    let total = cov.total_time();
    let h = total / T::of_usize(panels);
    let times: Vec<T> = (0..=panels).map(|i| h * T::of_usize(i)).collect();
    let grid = cov.grid_blocks(&times)?;
    // Split weights: integrating over [0, t_i] and [t_i, T].
    let left_w: Vec<Vec<T>> = (0..=panels).map(|i| uniform_weights(i, h)).collect();
    let right_w: Vec<Vec<T>> = (0..=panels).map(|i| uniform_weights(panels - i, h)).collect();

    let slot = |b: Branch, i: usize| (b.index() * (panels + 1) + i) * n;
    let size = 2 * (panels + 1) * n;

    // Each worker handles one row time and accumulates full-length partial sums.
    let partial: Vec<(Vec<T>, Vec<T>)> = (0..=panels)
        .into_par_iter()
        .map(|i| {
            let mut rows = vec![T::zero(); size];
            let mut cols = vec![T::zero(); size];
            for s in Branch::BOTH {
                for s2 in Branch::BOTH {
                    for j in 0..=panels {
                        // (matrix order, weight as row integral over t_j, weight as column integral over t_i)
                        let evaluations: Vec<(TimeOrder, T, T)> = if i == j {
                            vec![
                                (TimeOrder::Later, left_w[i][j], right_w[j][0]),
                                (TimeOrder::Earlier, right_w[i][0], left_w[j][i]),
                            ]
                        } else if j < i {
                            vec![(TimeOrder::Inclusive, left_w[i][j], right_w[j][i - j])]
                        } else {
                            vec![(TimeOrder::Inclusive, right_w[i][j - i], left_w[j][i])]
                        };
                        for (order, w_row, w_col) in evaluations {
                            let block = grid.block(s, i, s2, j, order);
                            let (r, c) = row_col_sums(&block);
                            let (ri, cj) = (slot(s, i), slot(s2, j));
                            for x in 0..n {
                                rows[ri + x] += r[x] * w_row;
                                cols[cj + x] += c[x] * w_col;
                            }
                        }
                    }
                }
            }
            (rows, cols)
        })
        .collect();
    let mut rows = vec![T::zero(); size];
    let mut cols = vec![T::zero(); size];
    for (r, c) in partial {
        for k in 0..size {
            rows[k] += r[k];
            cols[k] += c[k];
        }
    }
    let alpha = rows.iter().chain(&cols).fold(T::zero(), |a, &b| a.max(b));

    // α̃: external point fixed at (+, T, x) in the first slot or (-, T, x) in the second.
    let last = panels;
    let mut alpha_tilde = T::zero();
    for s in Branch::BOTH {
        for j in 0..=panels {
            for order in [TimeOrder::Later, TimeOrder::Earlier] {
                let (_, c) = row_col_sums(&grid.block(Branch::Plus, last, s, j, order));
                let (r, _) = row_col_sums(&grid.block(s, j, Branch::Minus, last, order));
                alpha_tilde = c.iter().chain(&r).fold(alpha_tilde, |a, &b| a.max(b));
            }
        }
    }
    Ok((alpha, alpha_tilde))
}

/// Numeric `α_C` and `α̃_C`; values at `2·panels`, errors from the comparison
/// with `panels`.
pub fn decay_constants_numeric<T: Real>(cov: &ContinuumCovariance<T>, panels: usize) -> Result<DecayConstants> {
    if panels < 16 {
        return Err(Error::Invalid("decay constants need at least 16 time panels".into()));
    }
    if cov.total_time() == T::zero() {
        return Ok(DecayConstants {
            alpha: 0.0,
            alpha_error: 0.0,
            alpha_tilde: decay_on_grid(cov, 1)?.1.as_f64(),
            alpha_tilde_error: 0.0,
            panels,
        });
    }
    let (a1, t1) = decay_on_grid(cov, panels)?;
    let (a2, t2) = decay_on_grid(cov, 2 * panels)?;
    Ok(DecayConstants {
        alpha: a2.as_f64(),
        alpha_error: (a2 - a1).abs().as_f64(),
        alpha_tilde: t2.as_f64(),
        alpha_tilde_error: (t2 - t1).abs().as_f64(),
        panels: 2 * panels,
    })
}

/// Monte-Carlo search for violations of `|det[⟨v_i,q_j⟩ C(X_i,Y_j)]| ≤ δ^{2n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetBoundSampling {
    pub trials: usize,
    pub n_max: usize,
    pub seed: u64,
    pub delta: f64,
    pub max_ratio: f64,
    /// `max |det|^{1/(2n)}`: smallest constant consistent with the samples.
    pub empirical_delta: f64,
    pub pass: bool,
}

pub const DET_SAMPLING_N_CAP: usize = 6;

fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<nalgebra::Complex<f64>> {
    loop {
        let v: Vec<_> = (0..dim)
            .map(|_| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = v.iter().map(|z: &nalgebra::Complex<f64>| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|z| z / norm).collect();
        }
    }
}

pub fn det_bound_property_test<T: Real>(
    cov: &dyn Covariance<T>,
    delta: f64,
    trials: usize,
    n_max: usize,
    seed: u64,
) -> Result<DetBoundSampling> {
    if n_max == 0 || n_max > DET_SAMPLING_N_CAP {
        return Err(Error::Invalid(format!("n_max must be in 1..={DET_SAMPLING_N_CAP}")));
    }
    let sites = cov.n_sites();
    let total = cov.total_time().as_f64();
    let results: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<(f64, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
            let n = rng.random_range(1..=n_max);
            let point = |rng: &mut ChaCha8Rng| {
                let b = if rng.random_bool(0.5) { Branch::Plus } else { Branch::Minus };
                KeldyshPoint::new(b, T::of(rng.random_range(0.0..=total)), rng.random_range(0..sites))
            };
            let xs: Vec<_> = (0..n).map(|_| point(&mut rng)).collect();
            let ys: Vec<_> = (0..n).map(|_| point(&mut rng)).collect();
            let dim = n;
            let vs: Vec<_> = (0..n).map(|_| random_unit_vector(&mut rng, dim)).collect();
            let qs: Vec<_> = (0..n).map(|_| random_unit_vector(&mut rng, dim)).collect();
            let mut m = CMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let gram: nalgebra::Complex<f64> =
                        vs[i].iter().zip(&qs[j]).map(|(a, b)| a.conj() * b).sum();
                    let c = cov.entry(&xs[i], &ys[j], TimeOrder::Inclusive)?;
                    m[(i, j)] = gram * cx(c.re.as_f64(), c.im.as_f64());
                }
            }
            let det = linalg::determinant(&m).norm();
            let two_n = (2 * n) as f64;
            Ok((det / delta.powf(two_n), det.powf(1.0 / two_n)))
        })
        .collect::<Result<_>>()?;
    let max_ratio = results.iter().fold(0.0f64, |a, r| a.max(r.0));
    let empirical_delta = results.iter().fold(0.0f64, |a, r| a.max(r.1));
    Ok(DetBoundSampling {
        trials,
        n_max,
        seed,
        delta,
        max_ratio,
        empirical_delta,
        pass: max_ratio <= 1.0,
    })
}

/// `k(ζ) = sup_x Σ_y (1 + d(x,y))^{-ζ}`.
pub fn k_zeta<T: Real>(metric: &Metric<T>, zeta: f64) -> f64 {
    let n = metric.n_sites();
    (0..n)
        .map(|x| (0..n).map(|y| (1.0 + metric.get(x, y).as_f64()).powf(-zeta)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `k(ζ)` of the infinite chain by direct summation of `terms` shells,
/// with the integral bound on the omitted tail. Needs `ζ > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainSum {
    pub value: f64,
    pub tail_bound: f64,
}

pub fn k_zeta_infinite_chain(zeta: f64, terms: usize) -> Result<ChainSum> {
    if zeta <= 1.0 {
        return Err(Error::Invalid("k(ζ) of the infinite chain diverges for ζ <= 1".into()));
    }
    let partial: f64 = 1.0 + 2.0 * (1..=terms).map(|n| (1.0 + n as f64).powf(-zeta)).sum::<f64>();
    let tail_bound = 2.0 * (1.0 + terms as f64).powf(1.0 - zeta) / (zeta - 1.0);
    Ok(ChainSum {
        value: partial,
        tail_bound,
    })
}

/// Parameters of the Combes–Thomas bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CombesThomasParams {
    pub nu: f64,
    pub n: u32,
    /// Gap; defaults to the smallest eigenvalue (`B > 0`) or `π/(2β)` (`B = 0`).
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombesThomasReport {
    pub nu: f64,
    pub n: u32,
    pub gap: f64,
    pub detected_gap: f64,
    pub k_measured: f64,
    pub k_2n: f64,
    pub k_nu_minus_n: f64,
    pub q_norm: f64,
    pub unitary: bool,
    /// Bounds on `α_C` and `α̃_C` with the unknown constant set to one.
    pub alpha_bound_without_xi: f64,
    pub alpha_tilde_bound_without_xi: f64,
    pub alpha_numeric: f64,
    pub alpha_tilde_numeric: f64,
    /// `α_numeric / alpha_bound_without_xi`.
    pub xi_hat: f64,
}

/// Smallest `K` with `|Q(x,y)| ≤ K (1 + d(x,y))^{-ν}`.
pub fn kernel_decay_constant<T: Real>(q: &CMatrix<T>, metric: &Metric<T>, nu: f64) -> f64 {
    let n = q.nrows();
    let mut k = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            k = k.max(cabs(q[(x, y)]).as_f64() * (1.0 + metric.get(x, y).as_f64()).powf(nu));
        }
    }
    k
}

pub fn combes_thomas_report<T: Real>(
    model: &OneParticleModel<T>,
    beta: T,
    total: T,
    params: CombesThomasParams,
    panels: usize,
) -> Result<CombesThomasReport> {
    let n = params.n;
    if !(params.nu > 0.0) || n < 1 || f64::from(n) >= params.nu {
        return Err(Error::Hypothesis("Combes-Thomas needs 1 <= n < ν".into()));
    }
    let spectra = Spectra::of(model);
    let unitary = spectra.unitary()?;
    let a = model.scaled_a();
    let q = model.scaled_q();
    let tol = MODEL_TOLERANCE * (1.0 + max_abs(&q).as_f64());
    if linalg::max_abs_diff(&a, &q).as_f64() > tol {
        return Err(Error::Hypothesis("Combes-Thomas needs A = Q".into()));
    }
    if !unitary && linalg::max_abs_diff(&model.scaled_b(), &q).as_f64() > tol {
        return Err(Error::Hypothesis("Combes-Thomas with B > 0 needs Q = A = B".into()));
    }
    let beta_f = beta.as_f64();
    let detected_gap = spectra.q_tilde;
    let gap = match params.delta {
        Some(d) => d,
        None if unitary => std::f64::consts::PI / (2.0 * beta_f),
        None => detected_gap,
    };
    if !(gap > 0.0) {
        return Err(Error::Hypothesis("Combes-Thomas needs a positive gap".into()));
    }
    if unitary {
        if gap > std::f64::consts::PI / (2.0 * beta_f) * (1.0 + 1e-12) {
            return Err(Error::Hypothesis("B = 0 needs π/(2β) >= Δ".into()));
        }
    } else if detected_gap < gap * (1.0 - 1e-12) {
        return Err(Error::Hypothesis("σ(Q) intersects [0, Δ)".into()));
    }
    let metric = model.metric_or_chain();
    let k_measured = kernel_decay_constant(&q, &metric, params.nu);
    let k_2n = k_zeta(&metric, 2.0 * f64::from(n));
    let k_rest = k_zeta(&metric, params.nu - f64::from(n));
    let q_norm = linalg::hermitian_norm(&q).as_f64();
    let geometry = k_2n.sqrt() * k_rest.powi(n as i32);
    let total_f = total.as_f64();
    let (alpha_bound, alpha_tilde_bound) = if unitary {
        let common = (gap.powi(-(n as i32 + 1)) + 1.0 / gap) * (q_norm + 2.0 * gap) / gap * geometry;
        (common * (gap * total_f).exp_m1(), common * (gap * total_f).exp())
    } else {
        let quarter = gap / 4.0;
        let thermal = (-beta_f * gap / 2.0).exp();
        let common = geometry
            * (quarter.powi(-(n as i32 + 1)) + 1.0 / quarter)
            * (q_norm + gap)
            / (1.0 - thermal);
        (
            common * (1.0 + thermal) / gap * -(-total_f * gap / 4.0).exp_m1(),
            common,
        )
    };
    let cov = ContinuumCovariance::new(model, beta, total)?;
    let numeric = decay_constants_numeric(&cov, panels)?;
    Ok(CombesThomasReport {
        nu: params.nu,
        n,
        gap,
        detected_gap,
        k_measured,
        k_2n,
        k_nu_minus_n: k_rest,
        q_norm,
        unitary,
        alpha_bound_without_xi: alpha_bound,
        alpha_tilde_bound_without_xi: alpha_tilde_bound,
        alpha_numeric: numeric.alpha,
        alpha_tilde_numeric: numeric.alpha_tilde,
        xi_hat: numeric.alpha / alpha_bound,
    })
}

/// Constants entering the cumulant bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub delta: f64,
    pub alpha: f64,
    pub alpha_tilde: f64,
    /// `‖V‖_{3δ}`.
    pub v_norm: f64,
}

impl BoundConstants {
    /// `ω_C = 2 α δ⁻²`.
    pub fn omega(&self) -> f64 {
        2.0 * self.alpha / (self.delta * self.delta)
    }

    /// `ω_C ‖V‖_{3δ} ≤ 1/2`.
    pub fn condition_ok(&self) -> bool {
        self.omega() * self.v_norm <= 0.5
    }

    /// `2 m! m̄! α̃^{m+m̄-1} α δ^{-m-m̄} ‖V‖_{3δ}`.
    pub fn rhs(&self, m: usize, mbar: usize) -> f64 {
        let k = (m + mbar) as i32;
        2.0 * factorial(m)
            * factorial(mbar)
            * self.alpha_tilde.powi(k - 1)
            * self.alpha
            * self.delta.powi(-k)
            * self.v_norm
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeRecord {
    pub m: usize,
    pub mbar: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Verdict {
    /// The smallness condition fails; nothing is asserted.
    ConditionNotSatisfied { omega_v: f64 },
    Checked { records: Vec<DegreeRecord>, all_pass: bool },
}

impl Verdict {
    pub fn summary(&self) -> String {
        match self {
            Verdict::ConditionNotSatisfied { .. } => "condition not satisfied; bound not asserted".into(),
            Verdict::Checked { all_pass: true, .. } => "all degrees pass".into(),
            Verdict::Checked { .. } => "bound violated".into(),
        }
    }
}

/// Compares `|γ^T - γ^{T,0}|_{1,∞}` with the bound for every common degree.
pub fn verify_cumulant_bound<T: Real>(
    constants: &BoundConstants,
    interacting: &CumulantTable<T>,
    free: &CumulantTable<T>,
) -> Result<Verdict> {
    if interacting.n_sites != free.n_sites
        || interacting.epsilon != free.epsilon
        || interacting.beta != free.beta
        || interacting.time != free.time
    {
        return Err(Error::Invalid("cumulant tables come from different setups".into()));
    }
    let omega_v = constants.omega() * constants.v_norm;
    if !constants.condition_ok() {
        return Ok(Verdict::ConditionNotSatisfied { omega_v });
    }
    let mut records = Vec::new();
    for (&(m, mbar), gamma) in &interacting.gamma_t {
        let Some(gamma0) = free.gamma_t.get(&(m, mbar)) else {
            continue;
        };
        let diff = gamma.zip_with(gamma0, |a, b| a - b);
        let lhs = diff.one_inf_norm(interacting.epsilon).as_f64();
        let rhs = constants.rhs(m, mbar);
        records.push(DegreeRecord {
            m,
            mbar,
            lhs,
            rhs,
            pass: lhs <= rhs,
        });
    }
    let all_pass = records.iter().all(|r| r.pass);
    Ok(Verdict::Checked { records, all_pass })
}
