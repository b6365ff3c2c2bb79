//! Experiment configuration read from JSON.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use confdim_core::dimension::RadiusGrid;
use confdim_core::gibbs::{Potential, SampleDepth};
use confdim_core::ConformalSystem;
use confdim_core::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    /// Scale window; the default window of the cloud when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Radii>,
    #[serde(default)]
    pub distortion: DistortionBlock,
    #[serde(default)]
    pub pressure: PressureBlock,
    #[serde(default)]
    pub gibbs: GibbsBlock,
    #[serde(default)]
    pub orbit: OrbitBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub eq: EqBlock,
    #[serde(default)]
    pub distance: DistanceBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    Similarity2d { maps: Vec<MapSpec> },
    Julia { c_re: f64, c_im: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub ratio: f64,
    pub angle_rad: f64,
    pub translation: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSpec {
    Bernoulli { p: Vec<f64> },
    Constant { c: f64 },
    Markov { table: Vec<Vec<f64>> },
    Geometric { s: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    pub n: usize,
    /// Cap on the ball centres used per entropy estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_centers: Option<usize>,
    /// Also write the sampled cloud to cloud.csv.
    #[serde(default)]
    pub export: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Radii {
    pub r_max: f64,
    pub r_min: f64,
    pub count: usize,
    #[serde(default = "yes")]
    pub geometric: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistortionBlock {
    pub words: usize,
    pub pairs: usize,
    pub triples: usize,
}

impl Default for DistortionBlock {
    fn default() -> Self {
        Self { words: 256, pairs: 64, triples: 100_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PressureBlock {
    pub n_max: usize,
    pub bowen_tol: f64,
}

impl Default for PressureBlock {
    fn default() -> Self {
        Self { n_max: 12, bowen_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsBlock {
    pub n_max: usize,
    pub q_max: usize,
}

impl Default for GibbsBlock {
    fn default() -> Self {
        Self { n_max: 10, q_max: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitBlock {
    pub n: usize,
    /// One-based periodic base word; a seeded random word when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<usize>>,
    /// Longest periodic word searched by the sufficient criterion.
    pub max_word: usize,
}

impl Default for OrbitBlock {
    fn default() -> Self {
        Self { n: 10_000, base: None, max_word: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    /// Angles for line projections of the plane, frames otherwise.
    pub directions: usize,
    pub k: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self { directions: 180, k: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EqBlock {
    pub q: Vec<usize>,
    pub rotations: usize,
    pub k: usize,
}

impl Default for EqBlock {
    fn default() -> Self {
        Self { q: vec![2, 3, 4, 5, 6], rotations: 32, k: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pin: Option<Vec<f64>>,
    /// One-based periodic word whose fixed point is the pin.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pin_word: Option<Vec<usize>>,
    pub eps: f64,
}

impl Default for DistanceBlock {
    fn default() -> Self {
        Self { pin: None, pin_word: None, eps: 1e-3 }
    }
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if let Some(s) = &self.sampling {
            if s.depth.is_some() == s.q.is_some() {
                bail!("sampling: give exactly one of `depth` or `q`");
            }
            if s.n == 0 {
                bail!("sampling.n must be positive");
            }
        }
        if self.distance.pin.is_some() && self.distance.pin_word.is_some() {
            bail!("distance: give at most one of `pin` or `pin_word`");
        }
        Ok(())
    }

    /// Key-sorted JSON of the effective configuration.
    pub fn canonical_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    pub fn build_system(&self) -> Result<Arc<ConformalSystem>> {
        let sys = match &self.system {
            SystemSpec::Similarity2d { maps } => {
                let triples: Vec<_> = maps.iter().map(|m| (m.ratio, m.angle_rad, m.translation)).collect();
                ConformalSystem::similarity2d(&triples)?
            }
            SystemSpec::Julia { c_re, c_im } => ConformalSystem::julia(Complex64::new(*c_re, *c_im))?,
        };
        Ok(Arc::new(sys))
    }

    pub fn build_potential(&self, sys: &Arc<ConformalSystem>, task: &str) -> Result<Potential> {
        let Some(spec) = &self.potential else {
            bail!("`{task}` needs a `potential` block");
        };
        let phi = match spec {
            PotentialSpec::Bernoulli { p } => Potential::bernoulli(p.clone())?,
            PotentialSpec::Constant { c } => Potential::constant(*c, sys.maps())?,
            PotentialSpec::Markov { table } => Potential::markov(table.clone())?,
            PotentialSpec::Geometric { s } => Potential::geometric(sys.clone(), *s)?,
        };
        if phi.alphabet_size() != sys.maps() {
            bail!("potential has {} symbols but the system has {} maps", phi.alphabet_size(), sys.maps());
        }
        Ok(phi)
    }

    pub fn sampling(&self, task: &str) -> Result<(&Sampling, SampleDepth)> {
        let Some(s) = &self.sampling else {
            bail!("`{task}` needs a `sampling` block");
        };
        let depth = match (s.depth, s.q) {
            (Some(n), _) => SampleDepth::Level(n),
            (_, Some(q)) => SampleDepth::Refined(q),
            _ => unreachable!("checked at load"),
        };
        Ok((s, depth))
    }

    pub fn radius_grid(&self) -> Option<RadiusGrid> {
        self.radii.as_ref().map(|r| RadiusGrid { r_max: r.r_max, r_min: r.r_min, count: r.count, geometric: r.geometric })
    }
}
