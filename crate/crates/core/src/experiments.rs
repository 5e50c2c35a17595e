//! Composite pipelines: Trotter and parameter scans, the constants report
//! and the cumulant-bound check.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    decay_bounds_analytic, decay_constants_numeric, det_bound, interaction_norm, verify_cumulant_bound, DecayBounds,
    DecayConstants, BoundConstants, Verdict,
};
use crate::covariance::ContinuumCovariance;
use crate::cumulants::{exact_cumulants, CumulantTable};
use crate::error::{Error, Result};
use crate::fock::{trotter_generating, EvolutionState, FockSpace};
use crate::model::{Interaction, OneParticleModel};
use crate::presets::Preset;
use crate::scalar::{cabs, cx, Real};
use crate::wick::first_order_correction;

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Invalid("slope fit needs at least two paired points".into()));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Invalid("slope fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrotterRow {
    pub steps: usize,
    pub error: f64,
    /// `|Z_N - Z_exact|` for the same model with `V = 0`.
    pub free_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrotterScan {
    pub z_exact: [f64; 2],
    pub rows: Vec<TrotterRow>,
    pub slope: f64,
    /// Largest relative deviation of the free `Z_N` from the closed-form determinant.
    pub free_max_relative: f64,
}

pub fn trotter_scan(
    model: &OneParticleModel<f64>,
    interaction: &Interaction<f64>,
    beta: f64,
    total: f64,
    steps: &[usize],
) -> Result<TrotterScan> {
    let fock = FockSpace::new(model)?;
    let state = EvolutionState::new(&fock, model, interaction, beta, total)?;
    let free = EvolutionState::new(&fock, model, &Interaction::zero(model.n_sites()), beta, total)?;
    let closed_form = ContinuumCovariance::new(model, beta, total)?.determinant()?;
    let z_exact = state.z_evolved();
    let rows: Vec<TrotterRow> = steps
        .par_iter()
        .map(|&n| -> Result<TrotterRow> {
            let zn = trotter_generating(&state, n)?.z;
            let z_free = trotter_generating(&free, n)?.z;
            Ok(TrotterRow {
                steps: n,
                error: (zn - z_exact).norm(),
                free_error: (z_free - closed_form).norm() / closed_form.norm(),
            })
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.steps as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let slope = log_log_slope(&x, &y)?;
    let free_max_relative = rows.iter().fold(0.0f64, |a, r| a.max(r.free_error));
    Ok(TrotterScan {
        z_exact: [z_exact.re, z_exact.im],
        rows,
        slope,
        free_max_relative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeRow {
    pub sites: usize,
    pub alpha: f64,
    pub alpha_error: f64,
    pub alpha_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeScan {
    pub rows: Vec<VolumeRow>,
    /// `max α / min α` over the scan.
    pub ratio: f64,
}

pub fn volume_scan(preset: Preset, sizes: &[usize], beta: f64, total: f64, panels: usize) -> Result<VolumeScan> {
    let mut rows: Vec<VolumeRow> = sizes
        .par_iter()
        .map(|&n| -> Result<VolumeRow> {
            let model = preset.with_sites(n).build(1.0)?;
            let cov = ContinuumCovariance::new(&model, beta, total)?;
            let d = decay_constants_numeric(&cov, panels)?;
            Ok(VolumeRow {
                sites: n,
                alpha: d.alpha,
                alpha_error: d.alpha_error,
                alpha_tilde: d.alpha_tilde,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| r.sites);
    let max = rows.iter().fold(f64::NEG_INFINITY, |a, r| a.max(r.alpha));
    let min = rows.iter().fold(f64::INFINITY, |a, r| a.min(r.alpha));
    Ok(VolumeScan { rows, ratio: max / min })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeRow {
    pub time: f64,
    pub alpha: f64,
    pub alpha_error: f64,
    pub alpha_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeScan {
    pub rows: Vec<TimeRow>,
    pub limit: Option<f64>,
    pub monotone: bool,
    pub below_limit: bool,
}

/// Numeric `α_C` against total time, with the analytic bound and its
/// large-time limit for dissipative models.
pub fn time_scan(model: &OneParticleModel<f64>, beta: f64, times: &[f64], panels: usize) -> Result<TimeScan> {
    let mut rows: Vec<TimeRow> = times
        .par_iter()
        .map(|&t| -> Result<TimeRow> {
            let cov = ContinuumCovariance::new(model, beta, t)?;
            let d = decay_constants_numeric(&cov, panels)?;
            let b = decay_bounds_analytic(model, beta, t)?;
            Ok(TimeRow {
                time: t,
                alpha: d.alpha,
                alpha_error: d.alpha_error,
                alpha_bound: b.alpha,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.time.total_cmp(&b.time));
    let limit = crate::bounds::alpha_bound_limit(model, beta).ok();
    let monotone = rows.windows(2).all(|w| w[1].alpha > w[0].alpha);
    let below_limit = limit.is_some_and(|l| rows.iter().all(|r| r.alpha <= l));
    Ok(TimeScan {
        rows,
        limit,
        monotone,
        below_limit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingRow {
    pub coupling: f64,
    pub max_abs_22: f64,
    /// `max |γ^T_{2,2}(λ)/λ - γ^T_{2,2}(λ₀)/λ₀| / max |γ^T_{2,2}(λ₀)/λ₀|`.
    pub relative_nonlinearity: f64,
}

/// `γ^T_{2,2}` along a coupling scan; the first entry is the reference `λ₀`.
pub fn coupling_scan(
    model: &OneParticleModel<f64>,
    interaction: &Interaction<f64>,
    beta: f64,
    total: f64,
    couplings: &[f64],
) -> Result<Vec<CouplingRow>> {
    let Some(&reference) = couplings.first() else {
        return Err(Error::Invalid("coupling scan needs at least one coupling".into()));
    };
    if reference == 0.0 {
        return Err(Error::Invalid("reference coupling must be nonzero".into()));
    }
    let fock = FockSpace::new(model)?;
    let tables: Vec<CumulantTable<f64>> = couplings
        .par_iter()
        .map(|&l| {
            let v = interaction.clone().with_coupling(l);
            let state = EvolutionState::new(&fock, model, &v, beta, total)?;
            exact_cumulants(&state, l, 4)
        })
        .collect::<Result<_>>()?;
    let per_unit = |k: usize| tables[k].gamma_t[&(2, 2)].map(|z| z / couplings[k]);
    let base = per_unit(0);
    let scale = base.max_abs();
    Ok(couplings
        .iter()
        .enumerate()
        .map(|(k, &l)| CouplingRow {
            coupling: l,
            max_abs_22: tables[k].gamma_t[&(2, 2)].max_abs(),
            relative_nonlinearity: if scale > 0.0 && l != 0.0 {
                per_unit(k).max_abs_diff(&base) / scale
            } else {
                0.0
            },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstOrderRow {
    pub m: usize,
    pub mbar: usize,
    pub max_abs_reference: f64,
    pub max_abs_diff: f64,
    pub relative: f64,
    pub quadrature_error: f64,
}

/// Derivatives below this magnitude are compared in absolute terms.
pub const DERIVATIVE_FLOOR: f64 = 1.0e-8;

/// Quadrature first-order corrections against a central difference of the
/// exact cumulants in `λ` with step `h`.
pub fn first_order_check(
    model: &OneParticleModel<f64>,
    interaction: &Interaction<f64>,
    beta: f64,
    total: f64,
    panels: usize,
    h: f64,
) -> Result<Vec<FirstOrderRow>> {
    let fock = FockSpace::new(model)?;
    let table = |l: f64| {
        let v = interaction.clone().with_coupling(l);
        let state = EvolutionState::new(&fock, model, &v, beta, total)?;
        exact_cumulants(&state, l, 4)
    };
    let (up, down) = (table(h)?, table(-h)?);
    let cov = ContinuumCovariance::new(model, beta, total)?;
    let unit = interaction.clone().with_coupling(1.0);
    [(1, 1), (2, 2)]
        .into_iter()
        .map(|degree| {
            let fd = up.gamma_t[&degree].zip_with(&down.gamma_t[&degree], |a, b| (a - b) / cx(2.0 * h, 0.0));
            let first = first_order_correction(&cov, &unit, degree, panels)?;
            let diff = first.tensor.max_abs_diff(&fd);
            let reference = fd.max_abs();
            Ok(FirstOrderRow {
                m: degree.0,
                mbar: degree.1,
                max_abs_reference: reference,
                max_abs_diff: diff,
                relative: diff / reference.max(DERIVATIVE_FLOOR),
                quadrature_error: first.quadrature_error,
            })
        })
        .collect()
}

/// Everything entering and coming out of the cumulant-bound check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub delta: f64,
    pub alpha_numeric: f64,
    pub alpha_numeric_error: f64,
    pub alpha_bound: f64,
    pub alpha_tilde_numeric: f64,
    pub alpha_tilde_numeric_error: f64,
    pub alpha_tilde_bound: f64,
    pub omega: f64,
    pub v_norm_3delta: f64,
    pub condition_ok: bool,
    pub q_tilde: f64,
    pub b_tilde: f64,
    pub unitary: bool,
}

impl ConstantsReport {
    /// Constants of the cumulant bound, with numeric decay constants
    /// enlarged by their discretization error estimates.
    pub fn bound_constants(&self) -> BoundConstants {
        BoundConstants {
            delta: self.delta,
            alpha: self.alpha_numeric + self.alpha_numeric_error,
            alpha_tilde: self.alpha_tilde_numeric + self.alpha_tilde_numeric_error,
            v_norm: self.v_norm_3delta,
        }
    }
}

pub fn constants_report<T: Real>(
    model: &OneParticleModel<T>,
    interaction: &Interaction<T>,
    beta: T,
    total: T,
    panels: usize,
) -> Result<ConstantsReport> {
    let det = det_bound(model, beta)?;
    let DecayBounds {
        alpha: alpha_bound,
        alpha_tilde: alpha_tilde_bound,
        ..
    } = decay_bounds_analytic(model, beta, total)?;
    let cov = ContinuumCovariance::new(model, beta, total)?;
    let DecayConstants {
        alpha,
        alpha_error,
        alpha_tilde,
        alpha_tilde_error,
        ..
    } = decay_constants_numeric(&cov, panels)?;
    let v_norm = interaction_norm(interaction, T::of(3.0 * det.delta), model.epsilon())?.as_f64();
    let mut report = ConstantsReport {
        delta: det.delta,
        alpha_numeric: alpha,
        alpha_numeric_error: alpha_error,
        alpha_bound,
        alpha_tilde_numeric: alpha_tilde,
        alpha_tilde_numeric_error: alpha_tilde_error,
        alpha_tilde_bound,
        omega: 0.0,
        v_norm_3delta: v_norm,
        condition_ok: false,
        q_tilde: det.spectra.q_tilde,
        b_tilde: det.spectra.b_tilde,
        unitary: det.unitary,
    };
    let c = report.bound_constants();
    report.omega = c.omega();
    report.condition_ok = c.condition_ok();
    Ok(report)
}

/// Largest coupling with `ω_C ‖λ V₁‖_{3δ} ≤ target`, `V₁` the interaction at unit coupling.
pub fn admissible_coupling(report: &ConstantsReport, interaction: &Interaction<f64>, epsilon: f64, target: f64) -> Result<f64> {
    let unit = interaction.clone().with_coupling(1.0);
    let norm = interaction_norm(&unit, 3.0 * report.delta, epsilon)?;
    if norm == 0.0 {
        return Err(Error::Invalid("interaction has zero norm".into()));
    }
    Ok(target / (report.bound_constants().omega() * norm))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantBoundRun {
    pub coupling: f64,
    pub report: ConstantsReport,
    pub verdict: Verdict,
    pub summary: String,
}

/// Full pipeline: constants, exact interacting and free cumulants, verdict.
pub fn cumulant_bound_run(
    model: &OneParticleModel<f64>,
    interaction: &Interaction<f64>,
    beta: f64,
    total: f64,
    panels: usize,
    cap: usize,
) -> Result<CumulantBoundRun> {
    let report = constants_report(model, interaction, beta, total, panels)?;
    let fock = FockSpace::new(model)?;
    let state = EvolutionState::new(&fock, model, interaction, beta, total)?;
    let interacting = exact_cumulants(&state, interaction.coupling(), cap)?;
    let free_state = EvolutionState::new(&fock, model, &Interaction::zero(model.n_sites()), beta, total)?;
    let free = exact_cumulants(&free_state, 0.0, cap)?;
    let verdict = verify_cumulant_bound(&report.bound_constants(), &interacting, &free)?;
    Ok(CumulantBoundRun {
        coupling: interaction.coupling(),
        summary: verdict.summary(),
        report,
        verdict,
    })
}

/// Largest relative deviation `|a - b| / max(|a|, |b|, floor)` over paired values.
pub fn max_relative<T: Real>(pairs: impl IntoIterator<Item = (crate::scalar::Cx<T>, crate::scalar::Cx<T>)>, floor: f64) -> f64 {
    pairs
        .into_iter()
        .map(|(a, b)| {
            let scale = cabs(a).as_f64().max(cabs(b).as_f64()).max(floor);
            cabs(a - b).as_f64() / scale
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{chain_hermitian, dissipative_uniform};

    #[test]
    fn slope_of_power_law() {
        let x = [8.0, 16.0, 32.0, 64.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.0)).collect();
        assert!((log_log_slope(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn trotter_first_order_rate() {
        let model = chain_hermitian(3, 1.0, 1.0, 0.3).unwrap();
        let v = Interaction::chain_density_density(3, 0.8).unwrap();
        let scan = trotter_scan(&model, &v, 1.0, 1.0, &[8, 16, 32, 64]).unwrap();
        assert!((-1.3..=-0.7).contains(&scan.slope), "{scan:?}");
        assert!(scan.free_max_relative < 1e-10);
    }

    #[test]
    fn dissipative_alpha_grows_to_limit() {
        let model = dissipative_uniform(3, 1.0, 0.5, 0.5, 0.5).unwrap();
        let scan = time_scan(&model, 1.0, &[1.0, 2.0, 4.0], 32).unwrap();
        assert!(scan.monotone && scan.below_limit, "{scan:?}");
    }

    #[test]
    fn weak_coupling_gate_and_bound() {
        let model = chain_hermitian(2, 1.0, 1.0, 0.5).unwrap();
        let v = Interaction::chain_density_density(2, 1.0).unwrap();
        let report = constants_report(&model, &v, 1.0, 0.5, 16).unwrap();
        assert!(!report.condition_ok);
        let lambda = admissible_coupling(&report, &v, 1.0, 0.5).unwrap();
        let run = cumulant_bound_run(&model, &v.clone().with_coupling(lambda), 1.0, 0.5, 16, 4).unwrap();
        assert!(run.report.condition_ok, "{:?}", run.report);
        assert!(matches!(run.verdict, Verdict::Checked { all_pass: true, .. }));
        let strong = cumulant_bound_run(&model, &v, 1.0, 0.5, 16, 4).unwrap();
        assert_eq!(strong.summary, "condition not satisfied; bound not asserted");
    }
}
