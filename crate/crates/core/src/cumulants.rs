//! Generating polynomial `Z(c⁻, c⁺)` from Fock traces and extraction of
//! moments and truncated expectation values.
//!
//! Generators: `c⁺(x)` is generator `x`, `c⁻(y)` is generator `|X| + y`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{trace_ladders, EvolutionState, Ladder, MomentTable};
use crate::grassmann::GrassmannPolynomial;
use crate::scalar::{cabs, creal, cscale, Cx, Real};
use crate::tensor::SiteTensor;

/// Largest site count for cumulant extraction.
pub const CUMULANT_SITE_CAP: usize = 6;

/// Largest total degree `m + m̄` extracted.
pub const CUMULANT_DEGREE_CAP: usize = 6;

/// `Z(c⁻,c⁺) = Tr(e^{(c⁺,a*)} e^{(c⁻,a)} M)` with `M = e^{-iHT} ρ₀ e^{iH†T}`.
///
/// Expanding `e^{(c⁺,a*)} = Π_x (1 + ε^{1/2} c⁺(x) c†_x)` and moving every
/// source to the left gives, for a mask with `k` generators,
/// `ε^{k/2} (-1)^{k(k-1)/2} Tr(c†_{S⁺} c_{S⁻} M)` with both sets ascending.
pub fn generating_polynomial<T: Real>(state: &EvolutionState<T>) -> Result<GrassmannPolynomial<T>> {
    let n = state.n_sites();
    if n > CUMULANT_SITE_CAP {
        return Err(Error::CapExceeded {
            what: "cumulant sites",
            size: n,
            cap: CUMULANT_SITE_CAP,
        });
    }
    let eps_sqrt = state.epsilon().sqrt();
    let m = state.evolved();
    let low = (1usize << n) - 1;
    let coeffs: Vec<Cx<T>> = (0..1usize << (2 * n))
        .into_par_iter()
        .map(|mask| {
            let plus = mask & low;
            let minus = mask >> n;
            let mut ops = Vec::with_capacity(mask.count_ones() as usize);
            ops.extend((0..n).filter(|x| plus >> x & 1 == 1).map(Ladder::Create));
            ops.extend((0..n).filter(|y| minus >> y & 1 == 1).map(Ladder::Annihilate));
            let k = ops.len();
            let mut value = cscale(trace_ladders(&ops, m), eps_sqrt.powi(k as i32));
            if (k * k.saturating_sub(1) / 2) % 2 == 1 {
                value = -value;
            }
            value
        })
        .collect();
    GrassmannPolynomial::from_coeffs(2 * n, coeffs)
}

/// Derivative sequence `δ/δc⁺_{x_1}…δ/δc⁺_{x_m} δ/δc⁻_{y_m̄}…δ/δc⁻_{y_1}`,
/// listed in the order the derivatives act (rightmost first).
fn derivative_sequence(n_sites: usize, x: &[usize], y: &[usize]) -> Vec<usize> {
    let mut seq: Vec<usize> = y.iter().map(|&j| n_sites + j).collect();
    seq.extend(x.iter().rev().copied());
    seq
}

/// Reads off the tensor `δ^m/δc⁺… δ^m̄/δc⁻… P |₀` for all index tuples,
/// with one factor `ε⁻¹` per functional derivative.
pub fn extract_tensor<T: Real>(
    p: &GrassmannPolynomial<T>,
    n_sites: usize,
    epsilon: T,
    m: usize,
    mbar: usize,
) -> SiteTensor<T> {
    let weight = T::one() / epsilon.powi((m + mbar) as i32);
    SiteTensor::from_fn(n_sites, m, mbar, |x, y| {
        cscale(p.derivative_body(&derivative_sequence(n_sites, x, y)), weight)
    })
}

/// Moments and truncated expectation values at time `T`.
#[derive(Debug, Clone)]
pub struct CumulantTable<T: Real> {
    pub n_sites: usize,
    pub epsilon: T,
    pub beta: T,
    pub time: T,
    pub coupling: T,
    /// `Z₀ = Tr ρ₀`.
    pub z0: T,
    /// `Z(0,0)`.
    pub z_evolved: Cx<T>,
    /// Truncated expectation values from `F = log(Z/Z₀)`.
    pub gamma_t: BTreeMap<(usize, usize), SiteTensor<T>>,
    /// Raw moments from `Z/Z(0,0)`.
    pub gamma: MomentTable<T>,
}

impl<T: Real> CumulantTable<T> {
    pub fn truncated(&self, m: usize, mbar: usize) -> Option<&SiteTensor<T>> {
        self.gamma_t.get(&(m, mbar))
    }

    pub fn moment(&self, m: usize, mbar: usize) -> Option<&SiteTensor<T>> {
        self.gamma.get(&(m, mbar))
    }

    /// Largest `|γ^T_{m,m̄}|` over all degrees other than `(1,1)`.
    pub fn max_beyond_two_point(&self) -> T {
        self.gamma_t
            .iter()
            .filter(|(k, _)| **k != (1, 1))
            .fold(T::zero(), |a, (_, t)| a.max(t.max_abs()))
    }
}

/// Builds `F = log(Z/Z₀)` and extracts `γ^T_{m,m̄}` for `1 ≤ m + m̄ ≤ cap`;
/// raw moments come from `Z/Z(0,0)`.
pub fn cumulants_from_generating<T: Real>(
    z: &GrassmannPolynomial<T>,
    z0: T,
    n_sites: usize,
    epsilon: T,
    cap: usize,
) -> Result<(BTreeMap<(usize, usize), SiteTensor<T>>, MomentTable<T>)> {
    if cap > CUMULANT_DEGREE_CAP {
        return Err(Error::CapExceeded {
            what: "cumulant degree",
            size: cap,
            cap: CUMULANT_DEGREE_CAP,
        });
    }
    if z.n_generators() != 2 * n_sites {
        return Err(Error::GeneratorMismatch(z.n_generators(), 2 * n_sites));
    }
    let body = z.body();
    if cabs(body) == T::zero() || !(z0 > T::zero()) {
        return Err(Error::ZeroBody);
    }
    let f = z.scale(creal(T::one() / z0)).log()?;
    let normalized = z.scale(Cx::new(T::one(), T::zero()) / body);
    let mut gamma_t = BTreeMap::new();
    let mut gamma = BTreeMap::new();
    for total in 1..=cap {
        for m in 0..=total {
            let mbar = total - m;
            if m > n_sites || mbar > n_sites {
                continue;
            }
            gamma_t.insert((m, mbar), extract_tensor(&f, n_sites, epsilon, m, mbar));
            gamma.insert((m, mbar), extract_tensor(&normalized, n_sites, epsilon, m, mbar));
        }
    }
    Ok((gamma_t, gamma))
}

/// Exact cumulant table of an evolution state.
pub fn exact_cumulants<T: Real>(state: &EvolutionState<T>, coupling: T, cap: usize) -> Result<CumulantTable<T>> {
    let z = generating_polynomial(state)?;
    let (gamma_t, gamma) = cumulants_from_generating(&z, state.z0(), state.n_sites(), state.epsilon(), cap)?;
    Ok(CumulantTable {
        n_sites: state.n_sites(),
        epsilon: state.epsilon(),
        beta: state.beta(),
        time: state.time(),
        coupling,
        z0: state.z0(),
        z_evolved: z.body(),
        gamma_t,
        gamma,
    })
}
