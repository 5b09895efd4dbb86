//! One function per subcommand. Each writes its artifacts through
//! [`Outputs`] so the manifest can index them.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::*;
use crate::error::{Error, Result};
use crate::field::{write_snapshot, write_trajectory, InnerProduct, SpectralState, Transform};
use crate::integrator::{integrate, IntegratorConfig, SourceBasis, SourceTerm};
use crate::lattice::{closure_sequence, default_max_iter, is_saturating_within, ExtensionChain, ModeIndex, SaturationVerdict};
use crate::relax::{endpoint_deviation_study, lipschitz_study, DeviationSettings, PerturbationProbe};
use crate::signal::{Sampled, Signal};
use crate::steering::{
    orthonormal_frame, steer_approx, steer_component, steer_full_dim, steer_projection, target_grid, SteeringTask,
};
use crate::synth::{synthesize_chain, BundleDescriptor, FrequencyAllocation, SynthesisOptions, TargetFamily};

/// Files written by a run, plus what the manifest records about it.
pub struct Outputs {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub eps_ladder: Vec<f64>,
    pub chain: Option<ExtensionChain>,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Outputs { dir, files: Vec::new(), eps_ladder: Vec::new(), chain: None })
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&p, text)?;
        self.files.push(p);
        Ok(())
    }

    pub fn csv<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let p = self.path(name)?;
        let mut buf = Vec::new();
        write(&mut buf)?;
        fs::write(&p, buf)?;
        self.files.push(p);
        Ok(())
    }

    pub fn snapshot(&mut self, stem: &str, u: &SpectralState) -> Result<()> {
        let (a, b) = write_snapshot(&self.path(stem)?, u)?;
        self.files.extend([a, b]);
        Ok(())
    }

    pub fn trajectory(&mut self, stem: &str, states: &[SpectralState]) -> Result<()> {
        let (a, b) = write_trajectory(&self.path(stem)?, states)?;
        self.files.extend([a, b]);
        Ok(())
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Config(format!("config has no `{name}` section")))
}

fn mode_tag(k: &ModeIndex) -> String {
    k.coords().iter().map(|c| c.to_string()).collect::<Vec<_>>().join("_")
}

fn integrator(disc: &Discretization, dt: f64, horizon: f64) -> IntegratorConfig {
    let mut cfg = IntegratorConfig::new(dt, horizon).with_scheme(disc.scheme);
    cfg.grid = disc.grid;
    cfg
}

/// Largest step not above `limit` that divides `cell` evenly.
fn aligned_dt(cell: f64, limit: f64) -> f64 {
    cell / (cell / limit * (1.0 - 1e-12)).ceil().max(1.0)
}

#[derive(Serialize)]
struct SaturationOutput {
    verdict: SaturationVerdict,
    /// Present when the base was given by generators.
    generator_det: Option<i64>,
    layer_sizes: Vec<usize>,
}

pub fn saturate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let spec = section(&cfg.saturate, "saturate")?;
    let (base, det) = spec.base.resolve()?;
    let max_iter = spec.max_iter.unwrap_or_else(|| default_max_iter(spec.window));
    let verdict = is_saturating_within(&base, spec.window, max_iter)?;
    let layers = closure_sequence(&base, spec.window, max_iter)?;
    out.json(
        "saturation.json",
        &SaturationOutput { verdict, generator_det: det, layer_sizes: layers.iter().map(|s| s.len()).collect() },
    )
}

pub fn plan(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let spec = section(&cfg.plan, "plan")?;
    let chain = spec.chain()?;
    out.json("chain.json", &chain)?;
    out.csv("chain.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["step", "r", "s", "new"])?;
        for (j, st) in chain.steps.iter().enumerate() {
            w.write_record([(j + 1).to_string(), st.r.to_string(), st.s.to_string(), st.new.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.chain = Some(chain);
    Ok(())
}

/// Index of a synthesized program: per-mode interval averages on a
/// common uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramFile {
    pub sign_convention: String,
    pub basis: SourceBasis,
    pub horizon: f64,
    pub carrier_eps: Option<f64>,
    pub cells: usize,
    pub cell_dt: f64,
    pub modes: Vec<ProgramMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramMode {
    pub mode: ModeIndex,
    pub file: String,
}

impl ProgramFile {
    pub fn load(path: &Path) -> Result<(ProgramFile, SourceTerm)> {
        let pf: ProgramFile = serde_json::from_slice(&fs::read(path)?)?;
        if pf.sign_convention != crate::field::SIGN_CONVENTION {
            return Err(Error::Config(format!("{} uses a different sign convention", path.display())));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut signals = Vec::with_capacity(pf.modes.len());
        for m in &pf.modes {
            let p = dir.join(&m.file);
            if !p.exists() {
                return Err(Error::Config(format!("{} lists missing file {}", path.display(), p.display())));
            }
            signals.push((m.mode.clone(), Signal::Sampled(Arc::new(read_sampled(&p)?))));
        }
        let mut src = SourceTerm::new(pf.basis, signals);
        if let Some(e) = pf.carrier_eps {
            src = src.with_carrier_eps(e);
        }
        Ok((pf, src))
    }
}

fn write_sampled(buf: &mut Vec<u8>, s: &Sampled) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(["t_start", "t_end", "re", "im"])?;
    for (j, v) in s.values.iter().enumerate() {
        let t0 = s.start + j as f64 * s.dt;
        w.write_record([
            format!("{t0:.17e}"),
            format!("{:.17e}", t0 + s.dt),
            format!("{:.17e}", v.re),
            format!("{:.17e}", v.im),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BundlesOutput {
    eps: f64,
    carrier_ratio: f64,
    frequency_gap: Option<f64>,
    residuals: Vec<f64>,
    frequencies: Vec<FrequencyAllocation>,
    bundles: Vec<BundleDescriptor>,
}

pub fn synthesize(cfg: &RunConfig, root: &Path, out: &mut Outputs) -> Result<()> {
    let spec = section(&cfg.synthesize, "synthesize")?;
    let chain = spec.chain.load(root)?;
    let mut family = TargetFamily::new();
    for t in &spec.targets {
        family.insert(ModeIndex::new(&t.mode), t.signal.signal(root)?);
    }
    let opts = SynthesisOptions {
        eps: spec.eps,
        horizon: spec.horizon,
        balance: spec.balance,
        carrier_ratio: spec.carrier_ratio,
        knots: spec.knots,
        min_periods: spec.min_periods,
    };
    let result = synthesize_chain(&chain, &family, &opts)?;
    let program = &result.program;
    let per = spec.samples_per_period.max(32) as f64;
    let fallback = cfg.discretization.as_ref().map(|d| d.dt).unwrap_or(1e-3);
    let cell_limit = program.carrier_eps.map(|e| PI * e / per).unwrap_or(fallback);
    let cells = (spec.horizon / cell_limit * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut modes = Vec::new();
    for (k, sampled) in program.sample(cells) {
        let file = format!("program_{}.csv", mode_tag(&k));
        out.csv(&file, |buf| write_sampled(buf, &sampled))?;
        modes.push(ProgramMode { mode: k, file });
    }
    out.json(
        "program.json",
        &ProgramFile {
            sign_convention: crate::field::SIGN_CONVENTION.into(),
            basis: SourceBasis::Rotated,
            horizon: spec.horizon,
            carrier_eps: program.carrier_eps,
            cells,
            cell_dt: spec.horizon / cells as f64,
            modes,
        },
    )?;
    out.json(
        "bundles.json",
        &BundlesOutput {
            eps: spec.eps,
            carrier_ratio: spec.carrier_ratio,
            frequency_gap: result.frequency_gap,
            residuals: result.residuals.clone(),
            frequencies: result.frequencies.clone(),
            bundles: result.bundles.iter().map(|b| b.descriptor()).collect(),
        },
    )?;
    out.eps_ladder = result.frequencies.iter().map(|f| f.eps).collect();
    out.chain = Some(chain);
    Ok(())
}

/// A source and the step it needs.
fn load_source(spec: &SourceSpec, root: &Path, disc: &Discretization) -> Result<(SourceTerm, f64)> {
    match spec {
        SourceSpec::Signals { basis, modes } => {
            let signals = modes
                .iter()
                .map(|m| Ok((ModeIndex::new(&m.mode), m.signal.signal(root)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((SourceTerm::new(*basis, signals), disc.dt))
        }
        SourceSpec::Program(p) => {
            let (pf, src) = ProgramFile::load(&upstream(root, p, "synthesize")?)?;
            Ok((src, aligned_dt(pf.cell_dt, disc.dt)))
        }
    }
}

pub fn simulate(cfg: &RunConfig, root: &Path, out: &mut Outputs) -> Result<()> {
    let spec = section(&cfg.simulate, "simulate")?;
    let disc = cfg.discretization()?;
    let u0 = spec.initial.state(disc, root)?;
    let (source, dt) = match &spec.source {
        Some(s) => load_source(s, root, disc)?,
        None => (SourceTerm::zero(), disc.dt),
    };
    let traj = integrate(&u0, &source, &integrator(disc, dt, spec.horizon).with_stride(spec.stride))?;
    out.trajectory("trajectory", &traj.states)?;
    out.snapshot("final", traj.final_state())?;
    let mut tr = Transform::padded(disc.space());
    out.csv("diagnostics.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["t", "mass", "energy", "hs"])?;
        for u in &traj.states {
            w.write_record([
                format!("{:.12e}", u.time),
                format!("{:.15e}", u.mass()),
                format!("{:.15e}", u.energy_with(&mut tr)),
                format!("{:.15e}", u.norm()),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    if let Some(e) = source.carrier_eps {
        out.eps_ladder = vec![e];
    }
    Ok(())
}

fn states_from(list: &[Vec<ModeValue>], disc: &Discretization) -> Result<Vec<SpectralState>> {
    list.iter()
        .map(|v| {
            let modes: Vec<(ModeIndex, Complex64)> = v.iter().map(|m| (ModeIndex::new(&m.mode), cplx(m.value))).collect();
            SpectralState::from_modes(disc.space(), disc.s, &modes)
        })
        .collect()
}

#[derive(Serialize)]
struct LiftSummary {
    modes: Vec<ModeIndex>,
    condition: f64,
}

pub fn steer(cfg: &RunConfig, root: &Path, out: &mut Outputs) -> Result<()> {
    let spec = section(&cfg.steer, "steer")?;
    let disc = cfg.discretization()?;
    let space = disc.space();
    let u0 = spec.initial.state(disc, root)?;
    let mut settings = spec.settings.clone();
    if let Some(p) = &spec.chain {
        settings.chain = Some(ChainSource::File(p.clone()).load(root)?);
    }
    let need = |x: &Option<SetSpec>, name: &str| -> Result<crate::lattice::ModeSet> {
        x.as_ref().ok_or_else(|| Error::Config(format!("steer.{name} is required for this mode")))?.set()
    };
    let targets = |observed: &crate::lattice::ModeSet| -> Result<Vec<SpectralState>> {
        match spec.targets.as_ref().ok_or_else(|| Error::Config("steer.targets is required".into()))? {
            TargetsSpec::Grid { radius, sphere, interior, seed } => {
                target_grid(space, disc.s, observed, *radius, *sphere, *interior, *seed)
            }
            TargetsSpec::List(list) => states_from(list, disc),
            TargetsSpec::Coordinates(_) => Err(Error::Config("coordinate targets need mode `projection`".into())),
        }
    };
    let report = match spec.mode {
        SteerMode::FullDim | SteerMode::Component => {
            let observed = need(&spec.observed, "observed")?;
            let task = SteeringTask {
                initial: u0.clone(),
                targets: targets(&observed)?,
                observed,
                horizon: spec.horizon,
                tolerance: spec.tolerance,
            };
            if spec.mode == SteerMode::FullDim {
                steer_full_dim(&task, &spec.ladder, &settings)?
            } else {
                steer_component(&task, &need(&spec.base, "base")?, &spec.ladder, &settings)?
            }
        }
        SteerMode::Approx => {
            let target = spec
                .target_state
                .as_ref()
                .ok_or_else(|| Error::Config("steer.target_state is required for mode `approx`".into()))?
                .state(disc, root)?;
            let cutoff = spec.approx_cutoff.unwrap_or(disc.cutoff);
            let budget = spec.budget.unwrap_or(spec.tolerance);
            steer_approx(&u0, &target, cutoff, budget, &need(&spec.base, "base")?, spec.horizon, &spec.ladder, &settings)?
        }
        SteerMode::Projection => {
            let frame = spec.frame.as_ref().ok_or_else(|| Error::Config("steer.frame is required".into()))?;
            let vectors = frame
                .iter()
                .map(|f| {
                    let mut v = vec![Complex64::new(0.0, 0.0); space.len()];
                    for c in &f.components {
                        let i = space
                            .index_of_coords(&c.mode)
                            .ok_or_else(|| Error::Config(format!("frame mode {:?} lies outside the cutoff", c.mode)))?;
                        v[i] += cplx(c.value);
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<_>>>()?;
            let frame = orthonormal_frame(space, vectors, InnerProduct::default())?;
            let coords = match &spec.targets {
                Some(TargetsSpec::Coordinates(c)) => c.iter().map(|y| y.iter().map(|z| cplx(*z)).collect()).collect::<Vec<Vec<Complex64>>>(),
                _ => return Err(Error::Config("mode `projection` needs `coordinates` targets".into())),
            };
            let (report, lift) = steer_projection(
                &u0,
                frame,
                &coords,
                &need(&spec.base, "base")?,
                spec.horizon,
                &spec.ladder,
                spec.tolerance,
                spec.truncation,
                &settings,
            )?;
            out.json("lift.json", &LiftSummary { modes: lift.modes.iter().cloned().collect(), condition: lift.condition })?;
            report
        }
    };
    out.json("steer_report.json", &report)?;
    out.csv("steer_report.csv", |buf| report.write_csv(buf))?;
    out.eps_ladder = spec.ladder.clone();
    out.chain = report.chain.clone();
    Ok(())
}

pub fn relaxnorm(cfg: &RunConfig, root: &Path, out: &mut Outputs) -> Result<()> {
    let spec = section(&cfg.relaxnorm, "relaxnorm")?;
    let disc = cfg.discretization()?;
    let u0 = spec.initial.state(disc, root)?;
    let (source, dt) = match &spec.source {
        Some(s) => load_source(s, root, disc)?,
        None => (SourceTerm::zero(), disc.dt),
    };
    let settings = DeviationSettings {
        horizon: spec.horizon,
        max_dt: dt,
        resolution: spec.resolution,
        frozen_samples: spec.frozen_samples,
        seed: cfg.seed,
    };
    let shape = PerturbationProbe::new(spec.probe.clone(), 1.0);
    let report = endpoint_deviation_study(&u0, &source, &shape, &spec.eps_ladder, &settings)?;
    out.json("relax_report.json", &report)?;
    out.csv("ladder.csv", |buf| report.write_csv(buf))?;
    if let Some(l) = &spec.lipschitz {
        let modes: Vec<ModeIndex> = l.modes.set()?.iter().cloned().collect();
        let lip = lipschitz_study(&u0, &modes, l.radius, spec.horizon, l.pairs, l.dt, cfg.seed)?;
        out.json("lipschitz.json", &lip)?;
    }
    out.eps_ladder = spec.eps_ladder.clone();
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    job: usize,
    eps: f64,
    amplitude: Complex64,
    residual: f64,
    error: f64,
    mass: f64,
    hs: f64,
}

pub fn sweep(cfg: &RunConfig, root: &Path, out: &mut Outputs) -> Result<()> {
    let spec = section(&cfg.sweep, "sweep")?;
    let disc = cfg.discretization()?;
    let chain = spec.chain.load(root)?;
    let u0 = spec.initial.state(disc, root)?;
    let mode = ModeIndex::new(&spec.mode);
    let amps: Vec<Complex64> = spec.amplitudes.iter().map(|a| cplx(*a)).collect();
    if amps.is_empty() {
        return Err(Error::Config("sweep.amplitudes must not be empty".into()));
    }
    let references: Vec<SpectralState> = amps
        .par_iter()
        .map(|&a| {
            let src = SourceTerm::new(SourceBasis::Rotated, vec![(mode.clone(), Signal::constant(a))]);
            Ok(integrate(&u0, &src, &integrator(disc, disc.dt, spec.horizon))?.final_state().clone())
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(f64, usize)> = spec.eps_ladder.iter().flat_map(|&e| (0..amps.len()).map(move |j| (e, j))).collect();
    let results: Vec<Result<(SweepRow, SpectralState)>> = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(eps, j))| {
            let mut family = TargetFamily::new();
            family.insert(mode.clone(), Signal::constant(amps[j]));
            let mut opts = SynthesisOptions::new(eps, spec.horizon).with_balance(spec.balance);
            opts.carrier_ratio = spec.carrier_ratio;
            let res = synthesize_chain(&chain, &family, &opts)?;
            let src = res.program.to_source();
            let dt = src.carrier_eps.map(|e| disc.dt.min(PI * e / 32.0)).unwrap_or(disc.dt);
            let traj = integrate(&u0, &src, &integrator(disc, dt, spec.horizon))?;
            let end = traj.final_state().clone();
            let row = SweepRow {
                job,
                eps,
                amplitude: amps[j],
                residual: res.residuals.iter().cloned().fold(0.0, f64::max),
                error: end.distance(&references[j])?,
                mass: end.mass(),
                hs: end.norm(),
            };
            Ok((row, end))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        let (row, end) = r?;
        out.snapshot(&format!("jobs/job_{:03}", row.job), &end)?;
        rows.push(row);
    }
    out.csv("ladder.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["job", "eps", "amp_re", "amp_im", "residual", "error", "mass", "hs"])?;
        for r in &rows {
            w.write_record([
                r.job.to_string(),
                format!("{}", r.eps),
                format!("{}", r.amplitude.re),
                format!("{}", r.amplitude.im),
                format!("{:.12e}", r.residual),
                format!("{:.12e}", r.error),
                format!("{:.15e}", r.mass),
                format!("{:.15e}", r.hs),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.eps_ladder = spec.eps_ladder.clone();
    out.chain = Some(chain);
    Ok(())
}
