//! Preset one-particle models and interactions.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Interaction, Metric, OneParticleModel};
use crate::scalar::{cx, CMatrix, Cx, Real};

/// Named model families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum Preset {
    /// `A = [a]`, `B = [b]`, `Q = [q]`.
    SingleMode { a: f64, b: f64, q: f64 },
    /// Open chain with hopping on the off-diagonal, `Q = A + μ`, `B = 0`.
    ChainHermitian { sites: usize, hopping: f64, mu: f64 },
    /// `Q = A = B = ΔI + s·K` with `K(x,y) = r^{|x-y|}`.
    DissipativeUniform { sites: usize, gap: f64, strength: f64, ratio: f64 },
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::SingleMode { .. } => "single-mode",
            Preset::ChainHermitian { .. } => "chain-hermitian",
            Preset::DissipativeUniform { .. } => "dissipative-uniform",
        }
    }

    /// Preset with default parameters; `sites` is ignored for `single-mode`.
    pub fn by_name(name: &str, sites: usize) -> Result<Self> {
        match name {
            "single-mode" => Ok(Preset::SingleMode { a: 1.0, b: 0.0, q: 1.0 }),
            "chain-hermitian" => Ok(Preset::ChainHermitian {
                sites,
                hopping: 1.0,
                mu: 2.0,
            }),
            "dissipative-uniform" => Ok(Preset::DissipativeUniform {
                sites,
                gap: 0.5,
                strength: 0.5,
                ratio: 0.5,
            }),
            other => Err(Error::Invalid(format!("unknown preset '{other}'"))),
        }
    }

    pub fn sites(&self) -> usize {
        match *self {
            Preset::SingleMode { .. } => 1,
            Preset::ChainHermitian { sites, .. } | Preset::DissipativeUniform { sites, .. } => sites,
        }
    }

    pub fn with_sites(self, n: usize) -> Self {
        match self {
            Preset::SingleMode { .. } => self,
            Preset::ChainHermitian { hopping, mu, .. } => Preset::ChainHermitian { sites: n, hopping, mu },
            Preset::DissipativeUniform {
                gap, strength, ratio, ..
            } => Preset::DissipativeUniform {
                sites: n,
                gap,
                strength,
                ratio,
            },
        }
    }

    pub fn build<T: Real>(&self, epsilon: T) -> Result<OneParticleModel<T>> {
        match *self {
            Preset::SingleMode { a, b, q } => single_mode(epsilon, T::of(a), T::of(b), T::of(q)),
            Preset::ChainHermitian { sites, hopping, mu } => chain_hermitian(sites, epsilon, T::of(hopping), T::of(mu)),
            Preset::DissipativeUniform {
                sites,
                gap,
                strength,
                ratio,
            } => dissipative_uniform(sites, epsilon, T::of(gap), T::of(strength), T::of(ratio)),
        }
    }
}

fn real_matrix<T: Real>(n: usize, f: impl Fn(usize, usize) -> T) -> CMatrix<T> {
    DMatrix::from_fn(n, n, |r, c| Cx::new(f(r, c), T::zero()))
}

fn require_sites(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::Invalid("a model needs at least one site".into()))
    } else {
        Ok(())
    }
}

pub fn single_mode<T: Real>(epsilon: T, a: T, b: T, q: T) -> Result<OneParticleModel<T>> {
    let m = |v: T| real_matrix(1, |_, _| v);
    OneParticleModel::new(epsilon, m(a), m(b), m(q))?.with_metric(Metric::chain(1))
}

pub fn chain_hermitian<T: Real>(n: usize, epsilon: T, hopping: T, mu: T) -> Result<OneParticleModel<T>> {
    require_sites(n)?;
    let a = real_matrix(n, |r, c| if r.abs_diff(c) == 1 { hopping } else { T::zero() });
    let q = &a + real_matrix(n, |r, c| if r == c { mu } else { T::zero() });
    OneParticleModel::new(epsilon, a, real_matrix(n, |_, _| T::zero()), q)?.with_metric(Metric::chain(n))
}

/// `Q = A = B = ΔI + s·K`, `K(x,y) = r^{|x-y|}` positive definite for `|r| < 1`.
pub fn dissipative_uniform<T: Real>(n: usize, epsilon: T, gap: T, strength: T, ratio: T) -> Result<OneParticleModel<T>> {
    require_sites(n)?;
    if !(gap > T::zero()) || strength < T::zero() || !(ratio.abs() < T::one()) {
        return Err(Error::Invalid("dissipative preset needs Δ > 0, s >= 0 and |r| < 1".into()));
    }
    let k = real_matrix(n, |r, c| {
        let d = r.abs_diff(c);
        strength * ratio.powi(d as i32) + if d == 0 { gap } else { T::zero() }
    });
    OneParticleModel::new(epsilon, k.clone(), k.clone(), k)?.with_metric(Metric::chain(n))
}

/// Random Hermitian model on `n` sites; `B = 0` or a random positive
/// semidefinite `B` scaled by `dissipation`.
pub fn random_model(n: usize, epsilon: f64, dissipation: f64, seed: u64) -> Result<OneParticleModel<f64>> {
    require_sites(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hermitian = |rng: &mut ChaCha8Rng| {
        let g = DMatrix::from_fn(n, n, |_, _| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (&g + g.adjoint()).map(|z| z * 0.5)
    };
    let a = hermitian(&mut rng);
    let q = hermitian(&mut rng);
    let b = if dissipation > 0.0 {
        let g = DMatrix::from_fn(n, n, |_, _| cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        (&g * g.adjoint()).map(|z| z * (dissipation / n as f64))
    } else {
        DMatrix::from_element(n, n, cx(0.0, 0.0))
    };
    OneParticleModel::new(epsilon, a, b, q)?.with_metric(Metric::chain(n))
}

/// Named interactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "interaction", rename_all = "kebab-case")]
pub enum InteractionPreset {
    None,
    /// `λ Σ_x n_x n_{x+1}` on an open chain.
    DensityDensity { coupling: f64 },
}

impl InteractionPreset {
    pub fn build<T: Real>(&self, n_sites: usize) -> Result<Interaction<T>> {
        match *self {
            InteractionPreset::None => Ok(Interaction::zero(n_sites)),
            InteractionPreset::DensityDensity { coupling } => Interaction::chain_density_density(n_sites, T::of(coupling)),
        }
    }

    pub fn coupling(&self) -> f64 {
        match *self {
            InteractionPreset::None => 0.0,
            InteractionPreset::DensityDensity { coupling } => coupling,
        }
    }

    pub fn with_coupling(self, coupling: f64) -> Self {
        match self {
            InteractionPreset::None => self,
            InteractionPreset::DensityDensity { .. } => InteractionPreset::DensityDensity { coupling },
        }
    }
}
