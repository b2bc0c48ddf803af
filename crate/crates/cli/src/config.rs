//! TOML experiment files. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use flowmm::factor::{FactorGrid, McConfig};
use flowmm::flow::{constant_flow, iid_flow, FactorLinks, LinkFn, OuFactor};
use flowmm::io::read_flow;
use flowmm::lattice::ASParams;
use flowmm::{FlowPath, GridSpec, IntensityModel, IntensityPair, PenaltyPath, Truncation};

use crate::CliError;

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
}

fn default_horizon() -> f64 {
    1.0
}

fn default_flow_nodes() -> usize {
    101
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub gamma: f64,
    pub zeta: Option<f64>,
    /// Quote bound; derived from `y_bound` when absent.
    pub xi: Option<f64>,
    #[serde(default = "default_y_bound")]
    pub y_bound: f64,
}

fn default_y_bound() -> f64 {
    10.0
}

impl ModelSection {
    pub fn model(&self) -> Result<IntensityModel, CliError> {
        Ok(match self.kind {
            ModelKind::Linear => {
                let zeta = self.zeta.ok_or_else(|| CliError::Config("model.zeta is required for kind = \"linear\"".into()))?;
                IntensityModel::linear(zeta, self.gamma)?
            }
            ModelKind::Exponential => {
                if self.zeta.is_some() {
                    return Err(CliError::Config("model.zeta only applies to kind = \"linear\"".into()));
                }
                IntensityModel::exponential(self.gamma)?
            }
        })
    }

    pub fn pair(&self) -> Result<(IntensityPair, Truncation), CliError> {
        let model = self.model()?;
        let trunc = match self.xi {
            Some(xi) => Truncation::new(xi)?,
            None => Truncation::default_for(&model, self.y_bound),
        };
        Ok((IntensityPair::symmetric(model), trunc))
    }

    /// `(ζ, γ)` of a linear model.
    pub fn linear_params(&self) -> Result<(f64, f64), CliError> {
        match self.model()? {
            IntensityModel::Linear { zeta, gamma } => Ok((zeta, gamma)),
            IntensityModel::Exponential { .. } => {
                Err(CliError::Config("this command needs model.kind = \"linear\"".into()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Constant,
    Iid,
    File,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub kind: FlowKind,
    #[serde(default = "default_flow_nodes")]
    pub nodes: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub ask: Option<f64>,
    pub bid: Option<f64>,
    pub mean: Option<f64>,
    pub spread: Option<f64>,
    /// CSV with header `t,a,b,phi`; relative paths resolve against the config file.
    pub path: Option<PathBuf>,
}

fn need(v: Option<f64>, key: &str, kind: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Config(format!("flow.{key} is required for kind = \"{kind}\"")))
}

impl FlowSection {
    /// The flow and, for file input, the penalty stored alongside it.
    pub fn build(&self, seed: u64, base_dir: &Path) -> Result<(FlowPath, Option<PenaltyPath>), CliError> {
        let unused = |keys: &[(&str, bool)]| -> Result<(), CliError> {
            match keys.iter().find(|(_, set)| *set) {
                Some((k, _)) => Err(CliError::Config(format!("flow.{k} does not apply to this flow kind"))),
                None => Ok(()),
            }
        };
        match self.kind {
            FlowKind::Constant => {
                unused(&[("mean", self.mean.is_some()), ("spread", self.spread.is_some()), ("path", self.path.is_some())])?;
                let (a, b) = (need(self.ask, "ask", "constant")?, need(self.bid, "bid", "constant")?);
                Ok((constant_flow(a, b, self.nodes, self.horizon)?, None))
            }
            FlowKind::Iid => {
                unused(&[("ask", self.ask.is_some()), ("bid", self.bid.is_some()), ("path", self.path.is_some())])?;
                let (m, s) = (need(self.mean, "mean", "iid")?, need(self.spread, "spread", "iid")?);
                Ok((iid_flow(seed, m, s, self.nodes, self.horizon)?, None))
            }
            FlowKind::File => {
                unused(&[
                    ("ask", self.ask.is_some()),
                    ("bid", self.bid.is_some()),
                    ("mean", self.mean.is_some()),
                    ("spread", self.spread.is_some()),
                ])?;
                let rel = self.path.as_ref().ok_or_else(|| CliError::Config("flow.path is required for kind = \"file\"".into()))?;
                let (flow, pen) = read_flow(&base_dir.join(rel))?;
                Ok((flow, Some(pen)))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    pub phi: f64,
    pub terminal: f64,
}

impl PenaltySection {
    pub fn build(&self, nodes: usize) -> Result<PenaltyPath, CliError> {
        Ok(PenaltyPath::constant(self.phi, self.terminal, nodes)?)
    }
}

/// File flows carry their own penalty, so `[penalty]` must then be absent.
pub fn resolve_penalty(
    section: Option<&PenaltySection>,
    from_file: Option<PenaltyPath>,
    nodes: usize,
) -> Result<PenaltyPath, CliError> {
    match (section, from_file) {
        (Some(_), Some(_)) => Err(CliError::Config("[penalty] conflicts with the penalty stored in the flow file".into())),
        (None, Some(p)) => Ok(p),
        (Some(s), None) => s.build(nodes),
        (None, None) => Err(CliError::Config("missing [penalty] table".into())),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldGridSection {
    #[serde(default = "default_n_q")]
    pub n_q: usize,
    pub n_t: Option<usize>,
    pub half_width: Option<f64>,
    #[serde(default = "default_cfl_target")]
    pub cfl_target: f64,
}

fn default_n_q() -> usize {
    401
}

fn default_cfl_target() -> f64 {
    0.45
}

impl Default for FieldGridSection {
    fn default() -> Self {
        Self { n_q: default_n_q(), n_t: None, half_width: None, cfl_target: default_cfl_target() }
    }
}

impl FieldGridSection {
    pub fn spec(&self) -> Result<GridSpec, CliError> {
        if !(self.cfl_target > 0.0 && self.cfl_target < flowmm::fbsde::CFL_LIMIT) {
            return Err(CliError::Config(format!(
                "grid.cfl_target must lie in (0, {}), got {}",
                flowmm::fbsde::CFL_LIMIT,
                self.cfl_target
            )));
        }
        Ok(GridSpec { n_q: self.n_q, n_t: self.n_t, half_width: self.half_width, cfl_target: self.cfl_target })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiccatiConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub q0: f64,
    pub model: ModelSection,
    pub flow: FlowSection,
    pub penalty: Option<PenaltySection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbsdeConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub q0: f64,
    pub model: ModelSection,
    pub flow: FlowSection,
    pub penalty: Option<PenaltySection>,
    #[serde(default)]
    pub grid: FieldGridSection,
    /// Extra initial inventories for the path-ordering check.
    #[serde(default)]
    pub check_q0: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub intercept: f64,
    #[serde(default)]
    pub slope: f64,
    /// Clamp bounds; both may be omitted for a constant link.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl LinkSection {
    fn build(&self) -> Result<LinkFn, CliError> {
        if self.slope == 0.0 && self.lo.is_none() && self.hi.is_none() {
            return Ok(LinkFn::constant(self.intercept));
        }
        match (self.lo, self.hi) {
            (Some(lo), Some(hi)) => Ok(LinkFn::new(self.intercept, self.slope, lo, hi)?),
            _ => Err(CliError::Config("links with a slope need both lo and hi".into())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSection {
    pub kappa: f64,
    #[serde(default)]
    pub mean: f64,
    pub vol: f64,
    #[serde(default)]
    pub l0: f64,
    pub a: LinkSection,
    pub b: LinkSection,
    pub phi: LinkSection,
    pub terminal: LinkSection,
}

impl FactorSection {
    pub fn build(&self) -> Result<OuFactor, CliError> {
        let links = FactorLinks {
            a: self.a.build()?,
            b: self.b.build()?,
            phi: self.phi.build()?,
            terminal: self.terminal.build()?,
        };
        let f = OuFactor { kappa: self.kappa, mean: self.mean, vol: self.vol, l0: self.l0, links };
        f.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub l_min: f64,
    pub l_max: f64,
    pub n_l: usize,
    pub n_t: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

impl LatticeSection {
    pub fn build(&self) -> Result<FactorGrid, CliError> {
        Ok(FactorGrid::new(self.l_min, self.l_max, self.n_l, self.n_t, self.horizon)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub n_steps: usize,
    pub n_l: usize,
    pub n_t: usize,
}

impl McSection {
    pub fn build(&self, seed: u64, fine: &FactorGrid) -> Result<(McConfig, FactorGrid), CliError> {
        let lattice = FactorGrid::new(fine.l_min, fine.l_max, self.n_l, self.n_t, fine.horizon)?;
        Ok((McConfig { n_paths: self.n_paths, n_steps: self.n_steps, seed }, lattice))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub q: f64,
    pub model: ModelSection,
    pub factor: FactorSection,
    pub lattice: LatticeSection,
    pub mc: Option<McSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsSection {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub sigma: f64,
    pub terminal: f64,
    pub gamma: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub q_bound: f64,
}

impl AsSection {
    pub fn params(&self, delta: f64) -> ASParams {
        ASParams {
            delta,
            lambda_a: self.lambda_a,
            lambda_b: self.lambda_b,
            sigma: self.sigma,
            terminal: self.terminal,
            gamma: self.gamma,
            horizon: self.horizon,
            q_bound: self.q_bound,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub deltas: Vec<f64>,
    pub q_min: f64,
    pub q_max: f64,
    pub n_t: usize,
    pub macro_dq: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default = "one")]
    pub delta: f64,
    pub q0: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub n_t: usize,
    /// Half-width and node count of the macroscopic inventory grid.
    pub macro_q_bound: f64,
    pub macro_n_q: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn one() -> f64 {
    1.0
}

fn default_substeps() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsCompareConfig {
    pub seed: Option<u64>,
    #[serde(rename = "as")]
    pub params: AsSection,
    pub compare: Option<CompareSection>,
    pub paths: Option<PathsSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "one_usize")]
    pub realizations: usize,
}

fn default_step() -> f64 {
    5.0
}

fn default_count() -> usize {
    20
}

fn one_usize() -> usize {
    1
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { step: default_step(), count: default_count(), realizations: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub q0: f64,
    pub model: ModelSection,
    pub flow: FlowSection,
    pub penalty: Option<PenaltySection>,
    #[serde(default)]
    pub grid: FieldGridSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecSection {
    pub n_trials: usize,
    #[serde(default = "default_flow_nodes")]
    pub n_grid: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub flow_mean: f64,
    pub flow_spread: f64,
    pub imbalance: f64,
    #[serde(default)]
    pub q0_mm: f64,
    pub q0_exec: f64,
    /// Trader's running inventory penalty; only 0 is supported.
    #[serde(default)]
    pub trader_phi: f64,
    /// Temporary impact coefficient; only 0 is supported.
    #[serde(default)]
    pub temporary_impact: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecConfig {
    pub seed: Option<u64>,
    pub model: ModelSection,
    pub penalty: PenaltySection,
    pub exec: ExecSection,
    #[serde(default)]
    pub grid: FieldGridSection,
}
