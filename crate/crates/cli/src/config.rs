//! Experiment configuration (TOML) and its translation into core types.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use keldysh_core::model::{Interaction, Metric, Vertex};
use keldysh_core::presets::{chain_hermitian, dissipative_uniform, single_mode, Preset};
use keldysh_core::scalar::cx;
use keldysh_core::{CMatrix, Model};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one", rename = "time")]
    pub total_time: f64,
    #[serde(default = "one")]
    pub epsilon: f64,
    pub output_dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    pub model: ModelSpec,
    #[serde(default)]
    pub interaction: InteractionSpec,
    #[serde(default)]
    pub plan: Plan,
}

fn one() -> f64 {
    1.0
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// A preset by name with optional parameter overrides, or inline matrices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: Option<String>,
    pub sites: Option<usize>,
    // single-mode
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub q: Option<f64>,
    // chain-hermitian
    pub hopping: Option<f64>,
    pub mu: Option<f64>,
    // dissipative-uniform
    pub gap: Option<f64>,
    pub strength: Option<f64>,
    pub ratio: Option<f64>,
    pub matrices: Option<InlineMatrices>,
}

/// Row-major complex matrices as `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InlineMatrices {
    pub a: Vec<Vec<[f64; 2]>>,
    pub b: Vec<Vec<[f64; 2]>>,
    pub q: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InteractionSpec {
    /// `none`, `density-density` or `inline`.
    #[serde(default = "none_kind")]
    pub kind: String,
    pub coupling: Option<f64>,
    /// Chooses `λ` so that `ω_C ‖V‖_{3δ}` equals this value.
    pub admissible_fraction: Option<f64>,
    #[serde(default)]
    pub vertex: Vec<InlineVertex>,
}

fn none_kind() -> String {
    "none".into()
}

impl Default for InteractionSpec {
    fn default() -> Self {
        Self {
            kind: none_kind(),
            coupling: None,
            admissible_fraction: None,
            vertex: Vec::new(),
        }
    }
}

/// One entry `v(x; y)`, antisymmetrized on insertion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InlineVertex {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub value: [f64; 2],
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Assert,
    Report,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    /// Per-check gating; unlisted checks assert.
    #[serde(default)]
    pub modes: BTreeMap<String, Mode>,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: Vec<usize>,
    #[serde(default = "default_trotter_steps")]
    pub trotter_steps: Vec<usize>,
    #[serde(default)]
    pub couplings: Vec<f64>,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_abs_points")]
    pub abs_points: usize,
    pub combes_thomas: Option<CombesThomasSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CombesThomasSpec {
    pub nu: f64,
    pub n: u32,
    pub delta: Option<f64>,
}

fn default_grid_steps() -> Vec<usize> {
    vec![1, 4, 8, 16]
}
fn default_trotter_steps() -> Vec<usize> {
    vec![8, 16, 32, 64]
}
fn default_sizes() -> Vec<usize> {
    (4..=12).collect()
}
fn default_panels() -> usize {
    32
}
fn default_trials() -> usize {
    1000
}
fn default_n_max() -> usize {
    6
}
fn default_cap() -> usize {
    4
}
fn default_abs_points() -> usize {
    8
}

impl Default for Plan {
    fn default() -> Self {
        toml::from_str("").expect("empty plan deserializes")
    }
}

impl Plan {
    pub fn mode(&self, check: &str) -> Mode {
        self.modes.get(check).copied().unwrap_or(Mode::Assert)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("malformed config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if !(v > 0.0) || !v.is_finite() {
                bail!("field `{name}` must be positive and finite, got {v}");
            }
            Ok(())
        };
        positive("beta", self.beta)?;
        positive("epsilon", self.epsilon)?;
        if !(self.total_time >= 0.0) || !self.total_time.is_finite() {
            bail!("field `time` must be nonnegative and finite");
        }
        let plan = &self.plan;
        for (name, empty) in [
            ("plan.grid_steps", plan.grid_steps.is_empty()),
            ("plan.trotter_steps", plan.trotter_steps.is_empty()),
            ("plan.sizes", plan.sizes.is_empty()),
        ] {
            if empty {
                bail!("field `{name}` must be nonempty");
            }
        }
        if plan.trotter_steps.len() < 2 {
            bail!("field `plan.trotter_steps` needs at least two step counts");
        }
        if plan.panels < 16 {
            bail!("field `plan.panels` must be at least 16");
        }
        if self.formats.is_empty() {
            bail!("field `formats` must be nonempty");
        }
        match (&self.model.preset, &self.model.matrices) {
            (Some(_), Some(_)) => bail!("field `model`: give either `preset` or `matrices`, not both"),
            (None, None) => bail!("field `model`: one of `preset` or `matrices` is required"),
            _ => {}
        }
        if let Some(name) = &self.model.preset {
            self.preset().with_context(|| format!("field `model.preset` = {name:?}"))?;
        }
        match self.interaction.kind.as_str() {
            "none" | "density-density" | "inline" => {}
            other => bail!("field `interaction.kind`: unknown kind {other:?}"),
        }
        if self.interaction.coupling.is_some() && self.interaction.admissible_fraction.is_some() {
            bail!("field `interaction`: give either `coupling` or `admissible_fraction`");
        }
        Ok(())
    }

    /// The preset with config overrides, when the model is a preset.
    pub fn preset(&self) -> Result<Preset> {
        let m = &self.model;
        let Some(name) = &m.preset else {
            bail!("field `model.preset` is required here");
        };
        let base = Preset::by_name(name, m.sites.unwrap_or(2))?;
        Ok(match base {
            Preset::SingleMode { a, b, q } => {
                let q = m.q.unwrap_or(q);
                Preset::SingleMode {
                    a: m.a.unwrap_or(if m.q.is_some() { q } else { a }),
                    b: m.b.unwrap_or(b),
                    q,
                }
            }
            Preset::ChainHermitian { sites, hopping, mu } => Preset::ChainHermitian {
                sites,
                hopping: m.hopping.unwrap_or(hopping),
                mu: m.mu.unwrap_or(mu),
            },
            Preset::DissipativeUniform {
                sites,
                gap,
                strength,
                ratio,
            } => Preset::DissipativeUniform {
                sites,
                gap: m.gap.unwrap_or(gap),
                strength: m.strength.unwrap_or(strength),
                ratio: m.ratio.unwrap_or(ratio),
            },
        })
    }

    pub fn build_model(&self) -> Result<Model> {
        if let Some(mats) = &self.model.matrices {
            let n = mats.a.len();
            let convert = |name: &str, rows: &[Vec<[f64; 2]>]| -> Result<CMatrix<f64>> {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    bail!("field `model.matrices.{name}` must be {n}x{n}");
                }
                Ok(CMatrix::from_fn(n, n, |r, c| cx(rows[r][c][0], rows[r][c][1])))
            };
            let model = Model::new(
                self.epsilon,
                convert("a", &mats.a)?,
                convert("b", &mats.b)?,
                convert("q", &mats.q)?,
            )?;
            return Ok(model.with_metric(Metric::chain(n))?);
        }
        Ok(match self.preset()? {
            Preset::SingleMode { a, b, q } => single_mode(self.epsilon, a, b, q)?,
            Preset::ChainHermitian { sites, hopping, mu } => chain_hermitian(sites, self.epsilon, hopping, mu)?,
            Preset::DissipativeUniform {
                sites,
                gap,
                strength,
                ratio,
            } => dissipative_uniform(sites, self.epsilon, gap, strength, ratio)?,
        })
    }

    /// Interaction at unit coupling; the coupling is resolved by the caller.
    pub fn unit_interaction(&self, n_sites: usize) -> Result<Interaction<f64>> {
        match self.interaction.kind.as_str() {
            "none" => Ok(Interaction::zero(n_sites)),
            "density-density" => Ok(Interaction::chain_density_density(n_sites, 1.0)?),
            "inline" => {
                let mut vertices: BTreeMap<(usize, usize), Vertex<f64>> = BTreeMap::new();
                for (k, e) in self.interaction.vertex.iter().enumerate() {
                    if e.x.iter().chain(&e.y).any(|&s| s >= n_sites) {
                        bail!("field `interaction.vertex[{k}]`: site index out of range");
                    }
                    vertices
                        .entry((e.x.len(), e.y.len()))
                        .or_insert_with(|| Vertex::new(e.x.len(), e.y.len()))
                        .add_antisymmetrized(&e.x, &e.y, cx(e.value[0], e.value[1]));
                }
                let mut out = Interaction::zero(n_sites);
                for v in vertices.into_values() {
                    out.add_vertex(v).context("field `interaction.vertex`")?;
                }
                Ok(out)
            }
            other => bail!("field `interaction.kind`: unknown kind {other:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = ExperimentConfig::parse("[model]\npreset = \"single-mode\"\n").unwrap();
        assert_eq!(c.plan.panels, 32);
        assert_eq!(c.plan.mode("grid-consistency"), Mode::Assert);
        let m = c.build_model().unwrap();
        assert_eq!(m.n_sites(), 1);
    }

    #[test]
    fn malformed_fields_are_named() {
        let e = ExperimentConfig::parse("[model]\npreset = \"single-mode\"\nbogus = 1\n").unwrap_err();
        assert!(format!("{e:#}").contains("bogus"));
        let e = ExperimentConfig::parse("beta = -1\n[model]\npreset = \"single-mode\"\n").unwrap_err();
        assert!(format!("{e:#}").contains("beta"));
        let e = ExperimentConfig::parse("[model]\npreset = \"ladder\"\n").unwrap_err();
        assert!(format!("{e:#}").contains("model.preset"));
    }

    #[test]
    fn inline_matrices_and_vertices() {
        let text = r#"
            [model.matrices]
            a = [[[0.5, 0.0], [0.1, 0.2]], [[0.1, -0.2], [0.0, 0.0]]]
            b = [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
            q = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
            [interaction]
            kind = "inline"
            coupling = 0.1
            [[interaction.vertex]]
            x = [0, 1]
            y = [0, 1]
            value = [1.0, 0.0]
        "#;
        let c = ExperimentConfig::parse(text).unwrap();
        let m = c.build_model().unwrap();
        assert_eq!(m.n_sites(), 2);
        let v = c.unit_interaction(2).unwrap();
        assert!(!v.is_zero());
    }
}
