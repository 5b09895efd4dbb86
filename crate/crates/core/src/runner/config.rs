//! Run configuration: one flat JSON document per run with a mandatory
//! sign-convention declaration and one section per subcommand.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{read_snapshot, ModeBox, SpectralState, SIGN_CONVENTION};
use crate::integrator::{NonlinearGrid, Scheme, SourceBasis};
use crate::lattice::{build_cube_generators, plan_extension_chain_with, default_max_iter, ExtensionChain, ModeIndex, ModeSet};
use crate::relax::ProbeTerm;
use crate::signal::{Sampled, Signal};
use crate::steering::SteeringSettings;
use crate::synth::BootBalance;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must equal the library's convention, `exp(+i|k|^2 t)`.
    pub sign_convention: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub discretization: Option<Discretization>,
    #[serde(default)]
    pub saturate: Option<SaturateSpec>,
    #[serde(default)]
    pub plan: Option<PlanSpec>,
    #[serde(default)]
    pub synthesize: Option<SynthesizeSpec>,
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    #[serde(default)]
    pub steer: Option<SteerSpec>,
    #[serde(default)]
    pub relaxnorm: Option<RelaxSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub dim: usize,
    /// Modes with `|k|_inf <= cutoff`.
    pub cutoff: usize,
    /// Sobolev index; must exceed `dim / 2`.
    pub s: f64,
    /// Time step in model time units.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub grid: NonlinearGrid,
}

fn default_dt() -> f64 {
    1e-3
}

impl Discretization {
    pub fn space(&self) -> ModeBox {
        ModeBox::new(self.dim, self.cutoff)
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.cutoff == 0 {
            return Err(Error::Config("discretization needs dim >= 1 and cutoff >= 1".into()));
        }
        let half = self.dim as f64 / 2.0;
        if !(self.s > half) {
            return Err(Error::Config(format!(
                "Sobolev index s = {} must exceed d/2 = {half}: the regularity requirement s > d/2 \
                 makes H^s an algebra so the cubic term is well defined",
                self.s
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("dt must be positive".into()));
        }
        Ok(())
    }
}

/// A mode set given explicitly, as cube generators, or as a box.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Modes(Vec<Vec<i64>>),
    /// The `2^d` subset sums of `d` generators.
    Generators(Vec<Vec<i64>>),
    /// All modes with `|k|_inf <= radius` in dimension `dim`.
    Box { dim: usize, radius: i64 },
}

impl SetSpec {
    pub fn resolve(&self) -> Result<(ModeSet, Option<i64>)> {
        match self {
            SetSpec::Modes(v) => {
                let modes: Vec<ModeIndex> = v.iter().map(|c| ModeIndex::new(c)).collect();
                Ok((ModeSet::try_from(modes)?, None))
            }
            SetSpec::Generators(v) => {
                let g = build_cube_generators(&v.iter().map(|c| ModeIndex::new(c)).collect::<Vec<_>>())?;
                Ok((g.set, Some(g.det)))
            }
            SetSpec::Box { dim, radius } => Ok((ModeSet::box_modes(*dim, *radius), None)),
        }
    }

    pub fn set(&self) -> Result<ModeSet> {
        Ok(self.resolve()?.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturateSpec {
    pub base: SetSpec,
    pub window: i64,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub base: SetSpec,
    pub targets: SetSpec,
    pub window: i64,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

impl PlanSpec {
    pub fn chain(&self) -> Result<ExtensionChain> {
        let max_iter = self.max_iter.unwrap_or_else(|| default_max_iter(self.window));
        plan_extension_chain_with(&self.base.set()?, &self.targets.set()?, self.window, max_iter)
    }
}

/// Where a chain comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSource {
    /// A `chain.json` written by `plan`.
    File(String),
    Plan(PlanSpec),
    Chain(ExtensionChain),
}

impl ChainSource {
    pub fn load(&self, root: &Path) -> Result<ExtensionChain> {
        let chain = match self {
            ChainSource::File(p) => {
                let path = upstream(root, p, "plan")?;
                serde_json::from_slice(&std::fs::read(path)?)?
            }
            ChainSource::Plan(spec) => spec.chain()?,
            ChainSource::Chain(c) => c.clone(),
        };
        chain.replay()?;
        Ok(chain)
    }
}

/// Resolves a path relative to the config file and checks it exists.
pub fn upstream(root: &Path, path: &str, producer: &str) -> Result<PathBuf> {
    let p = root.join(path);
    if !p.exists() {
        return Err(Error::Config(format!(
            "missing upstream artifact {}: run `{producer}` first",
            p.display()
        )));
    }
    Ok(p)
}

/// A complex number as `[re, im]`.
pub type Cplx = [f64; 2];

pub fn cplx(c: Cplx) -> Complex64 {
    Complex64::new(c[0], c[1])
}

/// A scalar control signal in the rotated basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Zero,
    Constant(Cplx),
    /// `amplitude e^{i(offset + rate t)}`.
    Exponential {
        amplitude: Cplx,
        rate: f64,
        #[serde(default)]
        offset: f64,
    },
    /// CSV with columns `t_start,t_end,re,im` on uniform cells.
    Csv(String),
}

impl SignalSpec {
    pub fn signal(&self, root: &Path) -> Result<Signal> {
        Ok(match self {
            SignalSpec::Zero => Signal::Zero,
            SignalSpec::Constant(c) => Signal::constant(cplx(*c)),
            SignalSpec::Exponential { amplitude, rate, offset } => Signal::exponential(cplx(*amplitude), *offset, *rate),
            SignalSpec::Csv(p) => Signal::Sampled(Arc::new(read_sampled(&upstream(root, p, "synthesize")?)?)),
        })
    }
}

/// Reads interval averages written by `write_sampled`.
pub fn read_sampled(path: &Path) -> Result<Sampled> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows: Vec<(f64, f64, Complex64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: bad numeric field in column {i}", path.display())))
        };
        rows.push((field(0)?, field(1)?, Complex64::new(field(2)?, field(3)?)));
    }
    let first = rows.first().ok_or_else(|| Error::Config(format!("{}: no samples", path.display())))?;
    let dt = first.1 - first.0;
    for (j, r) in rows.iter().enumerate() {
        let expect = first.0 + j as f64 * dt;
        if (r.0 - expect).abs() > 1e-9 * dt.max(1.0) || ((r.1 - r.0) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::Config(format!("{}: cells must be uniform and contiguous", path.display())));
        }
    }
    Ok(Sampled { start: first.0, dt, values: rows.into_iter().map(|r| r.2).collect() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSignal {
    pub mode: Vec<i64>,
    pub signal: SignalSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeSpec {
    pub chain: ChainSource,
    pub targets: Vec<TargetSignal>,
    pub eps: f64,
    pub horizon: f64,
    #[serde(default)]
    pub balance: BootBalance,
    #[serde(default = "default_ratio")]
    pub carrier_ratio: f64,
    #[serde(default)]
    pub knots: Option<usize>,
    #[serde(default = "one")]
    pub min_periods: u32,
    /// Cells per period `π ε` of the fastest carrier in the CSV output.
    #[serde(default = "default_per_period")]
    pub samples_per_period: usize,
}

fn default_ratio() -> f64 {
    5.0
}

fn one() -> u32 {
    1
}

fn default_per_period() -> usize {
    32
}

/// Initial or target state.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    #[default]
    Zero,
    PlaneWave { mode: Vec<i64>, amplitude: Cplx },
    Modes(Vec<ModeValue>),
    /// Random smooth state of the given `H^s` norm.
    Random { seed: u64, norm: f64, width: f64 },
    /// Snapshot stem (`<stem>.bin` + `<stem>.json`).
    File(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeValue {
    pub mode: Vec<i64>,
    pub value: Cplx,
}

impl StateSpec {
    pub fn state(&self, disc: &Discretization, root: &Path) -> Result<SpectralState> {
        let space = disc.space();
        let s = disc.s;
        match self {
            StateSpec::Zero => Ok(SpectralState::zeros(space, s)),
            StateSpec::PlaneWave { mode, amplitude } => {
                SpectralState::plane_wave(space, s, &ModeIndex::new(mode), cplx(*amplitude))
            }
            StateSpec::Modes(v) => {
                let modes: Vec<(ModeIndex, Complex64)> = v.iter().map(|m| (ModeIndex::new(&m.mode), cplx(m.value))).collect();
                SpectralState::from_modes(space, s, &modes)
            }
            StateSpec::Random { seed, norm, width } => Ok(SpectralState::random_smooth(space, s, *seed, *norm, *width)),
            StateSpec::File(stem) => {
                let stem = root.join(stem);
                upstream(root, &format!("{}.json", stem.display()), "simulate")?;
                let u = read_snapshot(&stem)?;
                if u.space != space {
                    return Err(Error::Config(format!("snapshot {} has a different mode box", stem.display())));
                }
                Ok(SpectralState { s, ..u })
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Signals {
        #[serde(default = "rotated")]
        basis: SourceBasis,
        modes: Vec<TargetSignal>,
    },
    /// `program.json` written by `synthesize`.
    Program(String),
}

fn rotated() -> SourceBasis {
    SourceBasis::Rotated
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[serde(default)]
    pub initial: StateSpec,
    #[serde(default)]
    pub source: Option<SourceSpec>,
    pub horizon: f64,
    /// Snapshot every `stride` steps; end point only when 0.
    #[serde(default)]
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SteerMode {
    FullDim,
    Component,
    Approx,
    Projection,
}

/// Targets for the observed component.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetsSpec {
    Grid {
        radius: f64,
        sphere: usize,
        #[serde(default)]
        interior: usize,
        #[serde(default)]
        seed: u64,
    },
    List(Vec<Vec<ModeValue>>),
    /// Frame coordinates, for projection steering.
    Coordinates(Vec<Vec<Cplx>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameVector {
    pub components: Vec<ModeValue>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteerSpec {
    pub mode: SteerMode,
    #[serde(default)]
    pub initial: StateSpec,
    #[serde(default)]
    pub base: Option<SetSpec>,
    #[serde(default)]
    pub observed: Option<SetSpec>,
    #[serde(default)]
    pub targets: Option<TargetsSpec>,
    /// Full-state target for `approx`.
    #[serde(default)]
    pub target_state: Option<StateSpec>,
    #[serde(default)]
    pub approx_cutoff: Option<usize>,
    #[serde(default)]
    pub budget: Option<f64>,
    /// Frame for `projection`, orthonormalized in `L^2`.
    #[serde(default)]
    pub frame: Option<Vec<FrameVector>>,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
    pub horizon: f64,
    /// Kick windows for `full_dim`, `ε` values otherwise.
    pub ladder: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// A `chain.json` from `plan`; planned on the fly when absent.
    #[serde(default)]
    pub chain: Option<String>,
    #[serde(default)]
    pub settings: SteeringSettings,
}

fn default_truncation() -> f64 {
    1e-3
}

fn default_tolerance() -> f64 {
    1e-2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzSpec {
    pub pairs: usize,
    pub radius: f64,
    pub modes: SetSpec,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxSpec {
    #[serde(default)]
    pub initial: StateSpec,
    /// Nominal control; none when absent.
    #[serde(default)]
    pub source: Option<SourceSpec>,
    pub probe: Vec<ProbeTerm>,
    pub eps_ladder: Vec<f64>,
    #[serde(default = "unit")]
    pub horizon: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "two")]
    pub frozen_samples: usize,
    #[serde(default)]
    pub lipschitz: Option<LipschitzSpec>,
}

fn unit() -> f64 {
    1.0
}

fn default_resolution() -> usize {
    2048
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub chain: ChainSource,
    /// Mode receiving the target control; must be reached by the chain.
    pub mode: Vec<i64>,
    /// Constant target amplitudes (the `b` grid).
    pub amplitudes: Vec<Cplx>,
    pub eps_ladder: Vec<f64>,
    pub horizon: f64,
    #[serde(default)]
    pub initial: StateSpec,
    #[serde(default)]
    pub balance: BootBalance,
    #[serde(default = "default_ratio")]
    pub carrier_ratio: f64,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(())
}

fn ladder(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("{name} must not be empty")));
    }
    for x in v {
        positive(name, *x)?;
    }
    Ok(())
}

impl RunConfig {
    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_slice(bytes).map_err(|e| Error::Config(format!("schema: {e}")))?;
        if cfg.sign_convention != SIGN_CONVENTION {
            return Err(Error::Config(format!(
                "sign_convention {:?} does not match {SIGN_CONVENTION:?}",
                cfg.sign_convention
            )));
        }
        if let Some(d) = &cfg.discretization {
            d.validate()?;
        }
        if let Some(s) = &cfg.synthesize {
            positive("synthesize.eps", s.eps)?;
            positive("synthesize.horizon", s.horizon)?;
        }
        if let Some(s) = &cfg.simulate {
            positive("simulate.horizon", s.horizon)?;
        }
        if let Some(s) = &cfg.steer {
            positive("steer.horizon", s.horizon)?;
            ladder("steer.ladder", &s.ladder)?;
        }
        if let Some(s) = &cfg.relaxnorm {
            ladder("relaxnorm.eps_ladder", &s.eps_ladder)?;
            positive("relaxnorm.horizon", s.horizon)?;
        }
        if let Some(s) = &cfg.sweep {
            ladder("sweep.eps_ladder", &s.eps_ladder)?;
            positive("sweep.horizon", s.horizon)?;
        }
        Ok(cfg)
    }

    pub fn discretization(&self) -> Result<&Discretization> {
        self.discretization
            .as_ref()
            .ok_or_else(|| Error::Config("this subcommand needs a `discretization` section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig> {
        RunConfig::from_slice(s.as_bytes())
    }

    #[test]
    fn rejects_low_regularity() {
        let err = parse(r#"{"sign_convention":"exp(+i|k|^2 t)","discretization":{"dim":2,"cutoff":4,"s":1.0}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("s > d/2"), "{err}");
    }

    #[test]
    fn rejects_wrong_convention_and_unknown_fields() {
        assert!(parse(r#"{"sign_convention":"exp(-i|k|^2 t)"}"#).is_err());
        assert!(parse(r#"{"sign_convention":"exp(+i|k|^2 t)","extra":1}"#).is_err());
        assert!(parse(r#"{"seed":1}"#).is_err());
    }

    #[test]
    fn set_specs() {
        let g: SetSpec = serde_json::from_str(r#"{"generators":[[1,0],[0,1]]}"#).unwrap();
        assert_eq!(g.set().unwrap().len(), 4);
        let b: SetSpec = serde_json::from_str(r#"{"box":{"dim":2,"radius":1}}"#).unwrap();
        assert_eq!(b.set().unwrap().len(), 9);
    }
}
