//! End-point steering experiments: full-dimensional kicks, steering of an
//! observed coordinate component from a smaller controlled set, full-state
//! approximate steering and steering of non-coordinate projections.
//!
//! Targets are grids of points in a ball, not a topological covering; a
//! report lists the error of every target at every ladder value.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FrameProjection, InnerProduct, ModeBox, Projection, SpectralState};
use crate::integrator::{integrate, IntegratorConfig, SourceTerm};
use crate::lattice::{plan_extension_chain, ExtensionChain, ModeIndex, ModeSet};
use crate::signal::{Phase, Signal};
use crate::synth::{synthesize_chain, BootBalance, ControlProgram, FrequencyAllocation, SynthesisOptions, TargetFamily};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Initial state, targets for the observed component and horizon.
#[derive(Clone, Debug)]
pub struct SteeringTask {
    pub initial: SpectralState,
    /// Desired values of the observed component at `horizon`.
    pub targets: Vec<SpectralState>,
    pub observed: ModeSet,
    pub horizon: f64,
    pub tolerance: f64,
}

impl SteeringTask {
    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        let proj = Projection::coordinate(self.observed.clone());
        for q in &self.targets {
            self.initial.check_space(q)?;
            let outside = proj.complement(q)?.norm();
            if outside > 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "target has weight {outside:.3e} outside the observed modes"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteeringSettings {
    /// Step for runs without fast carriers.
    pub reference_dt: f64,
    /// Fixed-point corrections of the full-dimensional family.
    pub refine_iterations: usize,
    /// Family components below this fraction of the largest are dropped.
    pub support_tol: f64,
    /// Window radius for chain planning; the cutoff when absent.
    pub window: Option<i64>,
    pub balance: BootBalance,
    pub carrier_ratio: f64,
    /// Leakage share `δ` for full-dimensional runs.
    pub leakage_delta: f64,
    /// Precomputed chain; planned from the family supports when absent.
    pub chain: Option<ExtensionChain>,
}

impl Default for SteeringSettings {
    fn default() -> Self {
        SteeringSettings {
            reference_dt: 1e-3,
            refine_iterations: 4,
            support_tol: 1e-9,
            window: None,
            balance: BootBalance::PlateauRescale,
            carrier_ratio: 5.0,
            leakage_delta: 1e-3,
            chain: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub target: usize,
    /// Ladder value: the kick window or the carrier parameter `ε`.
    pub parameter: f64,
    /// `None` when the run failed numerically.
    pub error: Option<f64>,
    /// `‖E_T(V) - E_T(W)‖` against the full-dimensional family.
    pub approximation: Option<f64>,
    /// `‖(I - Π)(u(T) - drift)‖` for full-dimensional runs.
    pub leakage: Option<f64>,
    pub passed: bool,
    pub failure: Option<String>,
}

/// Tail, covering and approximation terms of a full-state steering run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetDecomposition {
    pub budget: f64,
    pub cutoff: usize,
    /// `‖(I - Π_N) φ̂‖`, share `budget/4`.
    pub tail: f64,
    /// `‖E_T(W) - Π_N φ̂‖`, share `budget/4`.
    pub covering: f64,
    /// `‖E_T(V^ε) - E_T(W)‖` per ladder value, share `budget/2`.
    pub approximation: Vec<Option<f64>>,
    pub tail_ok: bool,
    pub covering_ok: bool,
    pub approximation_ok: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub kind: String,
    pub parameter_name: String,
    pub ladder: Vec<f64>,
    pub tolerance: f64,
    pub targets: usize,
    pub chain: Option<ExtensionChain>,
    pub frequencies: Vec<FrequencyAllocation>,
    pub entries: Vec<CoverageEntry>,
    /// Per target: errors strictly decrease along the ladder.
    pub monotone: Vec<bool>,
    pub all_monotone: bool,
    /// Largest error over targets per ladder value.
    pub sup_error: Vec<Option<f64>>,
    pub passed_at_finest: bool,
    pub budget: Option<BudgetDecomposition>,
    /// Set when a target norm exceeds 0.1.
    pub large_data: bool,
}

impl CoverageReport {
    fn assemble(
        kind: &str,
        parameter_name: &str,
        ladder: &[f64],
        tolerance: f64,
        targets: usize,
        entries: Vec<CoverageEntry>,
    ) -> Self {
        let errors_of = |t: usize| -> Vec<Option<f64>> {
            entries.iter().filter(|e| e.target == t).map(|e| e.error).collect()
        };
        let monotone: Vec<bool> = (0..targets)
            .map(|t| {
                errors_of(t).windows(2).all(|w| match (w[0], w[1]) {
                    (Some(a), Some(b)) => b < a,
                    _ => false,
                })
            })
            .collect();
        let sup_error = (0..ladder.len())
            .map(|j| {
                let mut sup: Option<f64> = Some(0.0);
                for e in entries.iter().filter(|e| e.parameter == ladder[j]) {
                    sup = match (sup, e.error) {
                        (Some(a), Some(b)) => Some(a.max(b)),
                        _ => None,
                    };
                }
                sup
            })
            .collect::<Vec<_>>();
        let finest = ladder.last().copied();
        let passed_at_finest = entries.iter().filter(|e| Some(e.parameter) == finest).all(|e| e.passed);
        CoverageReport {
            kind: kind.into(),
            parameter_name: parameter_name.into(),
            ladder: ladder.to_vec(),
            tolerance,
            targets,
            chain: None,
            frequencies: Vec::new(),
            all_monotone: monotone.iter().all(|m| *m),
            monotone,
            entries,
            sup_error,
            passed_at_finest,
            budget: None,
            large_data: false,
        }
    }

    /// `(target, parameter, error)` rows for plotting.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["target", &self.parameter_name, "error", "approximation", "leakage", "passed"])?;
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
        for e in &self.entries {
            w.write_record([
                e.target.to_string(),
                format!("{}", e.parameter),
                fmt(e.error),
                fmt(e.approximation),
                fmt(e.leakage),
                e.passed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Deterministic targets in `F_K` at time `horizon`: `sphere` points of
/// `H^s` norm `radius` and `interior` points of norm `radius/2`.
pub fn target_grid(
    space: ModeBox,
    s: f64,
    modes: &ModeSet,
    radius: f64,
    sphere: usize,
    interior: usize,
    seed: u64,
) -> Result<Vec<SpectralState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(sphere + interior);
    for j in 0..sphere + interior {
        let mut q = SpectralState::zeros(space, s);
        for k in modes.iter() {
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            q.set(k, c)?;
        }
        let n = q.norm();
        let scale = if j < sphere { radius } else { 0.5 * radius };
        if n > 0.0 {
            q.scale(Complex64::new(scale / n, 0.0));
        }
        out.push(q);
    }
    Ok(out)
}

fn config(dt: f64, horizon: f64) -> IntegratorConfig {
    IntegratorConfig::new(dt.min(horizon), horizon)
}

/// Coast-then-kick programs: zero control on `[0, T - κ]`, then
/// `-i b_k / κ` on `e^{ik.x}` for `k` in `observed`, with
/// `b = q̂ - Π u(T - κ)`. As `κ -> 0` the observed end point tends to `q̂`.
pub fn full_dim_control(
    u0: &SpectralState,
    observed: &ModeSet,
    targets: &[SpectralState],
    horizon: f64,
    kick: f64,
    dt: f64,
) -> Result<Vec<ControlProgram>> {
    if !(kick > 0.0 && kick <= horizon) {
        return Err(Error::InvalidArgument("kick window must lie in (0, T]".into()));
    }
    let coast = if horizon - kick > 0.0 {
        integrate(u0, &SourceTerm::zero(), &config(dt, horizon - kick))?.final_state().clone()
    } else {
        u0.clone()
    };
    let start = horizon - kick;
    targets
        .iter()
        .map(|q| {
            let mut modes = BTreeMap::new();
            for k in observed.iter() {
                let b = q.get(k).ok_or_else(|| Error::NotExpressible(k.clone()))?
                    - coast.get(k).ok_or_else(|| Error::NotExpressible(k.clone()))?;
                if b == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let ksq = k.norm_sq() as f64;
                // e^{ik.x} = e^{-i|k|^2 t} f_k
                let sig = Signal::constant(-I * b / kick)
                    .windowed(start, horizon)
                    .modulated(Phase::linear(0.0, -ksq));
                modes.insert(k.clone(), sig);
            }
            Ok(ControlProgram::new(horizon, modes))
        })
        .collect()
}

/// Full-dimensional steering over a ladder of kick windows.
pub fn steer_full_dim(task: &SteeringTask, kicks: &[f64], settings: &SteeringSettings) -> Result<CoverageReport> {
    task.validate()?;
    let proj = Projection::coordinate(task.observed.clone());
    let free = integrate(&task.initial, &SourceTerm::zero(), &config(settings.reference_dt, task.horizon))?;
    let drift = free.final_state().clone();
    let jobs: Vec<(usize, f64)> = kicks.iter().map(|&k| (0, k)).collect();
    let programs: Vec<Result<Vec<ControlProgram>>> = jobs
        .par_iter()
        .map(|&(_, kick)| {
            let dt = settings.reference_dt.min(kick / 16.0);
            full_dim_control(&task.initial, &task.observed, &task.targets, task.horizon, kick, dt)
        })
        .collect();
    let mut runs = Vec::new();
    for ((_, kick), progs) in jobs.iter().zip(programs) {
        for (t, p) in progs?.into_iter().enumerate() {
            runs.push((t, *kick, p));
        }
    }
    let mut entries: Vec<CoverageEntry> = runs
        .par_iter()
        .map(|(t, kick, program)| {
            let dt = settings.reference_dt.min(kick / 16.0);
            let end = integrate(&task.initial, &program.to_source(), &config(dt, task.horizon))
                .map(|tr| tr.final_state().clone());
            match end {
                Ok(u) => {
                    let err = proj.apply(&u).and_then(|p| p.distance(&task.targets[*t])).ok();
                    let leak = u.sub(&drift).and_then(|d| proj.complement(&d)).map(|d| d.norm()).ok();
                    CoverageEntry {
                        target: *t,
                        parameter: *kick,
                        passed: err.is_some_and(|e| e <= task.tolerance)
                            && leak.is_some_and(|l| l <= settings.leakage_delta),
                        error: err,
                        approximation: None,
                        leakage: leak,
                        failure: None,
                    }
                }
                Err(e) => failed(*t, *kick, e),
            }
        })
        .collect();
    entries.sort_by(|a, b| a.target.cmp(&b.target).then(b.parameter.total_cmp(&a.parameter)));
    let mut report = CoverageReport::assemble("full_dim", "kick", kicks, task.tolerance, task.targets.len(), entries);
    report.large_data = task.targets.iter().any(|q| q.norm() > 0.1);
    Ok(report)
}

fn failed(target: usize, parameter: f64, e: Error) -> CoverageEntry {
    CoverageEntry {
        target,
        parameter,
        error: None,
        approximation: None,
        leakage: None,
        passed: false,
        failure: Some(e.to_string()),
    }
}

/// Constant rotated-basis controls on `observed` steering `u0` so that
/// `Π E_T(W) = q̂`: starts from the linear guess `(q̂_k e^{-i|k|^2 T} - u⁰_k)/(iT)`
/// and applies fixed-point corrections. Returns the family and `E_T(W)`.
pub fn spread_family(
    u0: &SpectralState,
    observed: &ModeSet,
    target: &SpectralState,
    horizon: f64,
    settings: &SteeringSettings,
) -> Result<(TargetFamily, SpectralState)> {
    let mut w: BTreeMap<ModeIndex, Complex64> = BTreeMap::new();
    for k in observed.iter() {
        let rot = Complex64::from_polar(1.0, -(k.norm_sq() as f64) * horizon);
        let q = target.get(k).ok_or_else(|| Error::NotExpressible(k.clone()))?;
        let a0 = u0.get(k).ok_or_else(|| Error::NotExpressible(k.clone()))?;
        w.insert(k.clone(), (q * rot - a0) / (I * horizon));
    }
    let run = |w: &BTreeMap<ModeIndex, Complex64>| -> Result<SpectralState> {
        let program = ControlProgram::new(horizon, family_of(w));
        Ok(integrate(u0, &program.to_source(), &config(settings.reference_dt, horizon))?.final_state().clone())
    };
    let mut end = run(&w)?;
    for _ in 0..settings.refine_iterations {
        for (k, wk) in w.iter_mut() {
            let rot = Complex64::from_polar(1.0, -(k.norm_sq() as f64) * horizon);
            let miss = target.get(k).unwrap() - end.get(k).unwrap();
            *wk += miss * rot / (I * horizon);
        }
        end = run(&w)?;
    }
    let max = w.values().map(|c| c.norm()).fold(0.0, f64::max);
    w.retain(|_, c| c.norm() > settings.support_tol * max);
    Ok((family_of(&w), end))
}

fn family_of(w: &BTreeMap<ModeIndex, Complex64>) -> TargetFamily {
    w.iter().map(|(k, c)| (k.clone(), Signal::constant(*c))).collect()
}

fn window_for(space: ModeBox, settings: &SteeringSettings) -> i64 {
    settings.window.unwrap_or(space.cutoff as i64)
}

struct Synthesized {
    chain: ExtensionChain,
    families: Vec<(TargetFamily, SpectralState)>,
}

/// Plans one chain reaching the union of the family supports.
fn prepare_families(
    u0: &SpectralState,
    observed: &ModeSet,
    targets: &[SpectralState],
    base: &ModeSet,
    horizon: f64,
    settings: &SteeringSettings,
) -> Result<Synthesized> {
    let families: Vec<(TargetFamily, SpectralState)> = targets
        .par_iter()
        .map(|q| spread_family(u0, observed, q, horizon, settings))
        .collect::<Result<_>>()?;
    let mut support = ModeSet::empty(base.dim());
    for (f, _) in &families {
        for k in f.keys() {
            if !base.contains(k) {
                support.insert(k.clone())?;
            }
        }
    }
    let chain = match &settings.chain {
        Some(c) => {
            if &c.base != base {
                return Err(Error::InvalidArgument("supplied chain starts from a different base".into()));
            }
            let reached = c.final_set()?;
            if let Some(k) = support.iter().find(|k| !reached.contains(k)) {
                return Err(Error::NotExpressible(k.clone()));
            }
            c.clone()
        }
        None if support.is_empty() => ExtensionChain::empty(base.clone()),
        None => plan_extension_chain(base, &support, window_for(u0.space, settings))?,
    };
    chain.replay()?;
    Ok(Synthesized { chain, families })
}

/// Integrates synthesized programs for every (target, ε) pair and scores the
/// end points with `score`.
fn run_ladder<F>(
    u0: &SpectralState,
    prepared: &Synthesized,
    eps_ladder: &[f64],
    horizon: f64,
    tolerance: f64,
    settings: &SteeringSettings,
    score: F,
) -> Result<(Vec<CoverageEntry>, Vec<FrequencyAllocation>)>
where
    F: Fn(usize, &SpectralState) -> Result<f64> + Sync,
{
    let jobs: Vec<(usize, f64)> =
        (0..prepared.families.len()).flat_map(|t| eps_ladder.iter().map(move |&e| (t, e))).collect();
    let results: Vec<(CoverageEntry, Vec<FrequencyAllocation>)> = jobs
        .par_iter()
        .map(|&(t, eps)| {
            let (family, reference) = &prepared.families[t];
            let mut opts = SynthesisOptions::new(eps, horizon).with_balance(settings.balance);
            opts.carrier_ratio = settings.carrier_ratio;
            let outcome = synthesize_chain(&prepared.chain, family, &opts).and_then(|res| {
                let dt = std::f64::consts::PI * res.program.carrier_eps.unwrap_or(eps) / 32.0;
                let dt = dt.min(settings.reference_dt);
                let end = integrate(u0, &res.program.to_source(), &config(dt, horizon))?;
                Ok((end.final_state().clone(), res.frequencies))
            });
            match outcome {
                Ok((u, freq)) => {
                    let err = score(t, &u).ok();
                    let approx = u.distance(reference).ok();
                    let entry = CoverageEntry {
                        target: t,
                        parameter: eps,
                        passed: err.is_some_and(|e| e <= tolerance),
                        error: err,
                        approximation: approx,
                        leakage: None,
                        failure: None,
                    };
                    (entry, freq)
                }
                Err(e) => (failed(t, eps, e), Vec::new()),
            }
        })
        .collect();
    let freq = results.iter().find(|(_, f)| !f.is_empty()).map(|(_, f)| f.clone()).unwrap_or_default();
    Ok((results.into_iter().map(|(e, _)| e).collect(), freq))
}

/// Steers the observed coordinate component from controls on `base`.
/// With an empty chain this is the full-dimensional kick with window `ε`.
pub fn steer_component(
    task: &SteeringTask,
    base: &ModeSet,
    eps_ladder: &[f64],
    settings: &SteeringSettings,
) -> Result<CoverageReport> {
    task.validate()?;
    if task.observed.is_subset(base) {
        let mut report = steer_full_dim(task, eps_ladder, settings)?;
        report.kind = "component".into();
        report.chain = Some(ExtensionChain::empty(base.clone()));
        return Ok(report);
    }
    let prepared = prepare_families(&task.initial, &task.observed, &task.targets, base, task.horizon, settings)?;
    let proj = Projection::coordinate(task.observed.clone());
    let (entries, frequencies) = run_ladder(
        &task.initial,
        &prepared,
        eps_ladder,
        task.horizon,
        task.tolerance,
        settings,
        |t, u| proj.apply(u)?.distance(&task.targets[t]),
    )?;
    let mut report = CoverageReport::assemble("component", "eps", eps_ladder, task.tolerance, task.targets.len(), entries);
    report.chain = Some(prepared.chain);
    report.frequencies = frequencies;
    report.large_data = task.targets.iter().any(|q| q.norm() > 0.1);
    Ok(report)
}

/// Full-state steering from `initial` towards `target` with budget `δ`:
/// tail outside `|k|_inf <= cutoff` at most `δ/4`, full-dimensional family
/// on the cutoff box within `δ/4`, and the synthesized controls on `base`
/// within `δ/2` of that family.
pub fn steer_approx(
    initial: &SpectralState,
    target: &SpectralState,
    cutoff: usize,
    budget: f64,
    base: &ModeSet,
    horizon: f64,
    eps_ladder: &[f64],
    settings: &SteeringSettings,
) -> Result<CoverageReport> {
    initial.check_space(target)?;
    let space = initial.space;
    let low = ModeSet::box_modes(space.dim, cutoff.min(space.cutoff) as i64);
    let proj = Projection::coordinate(low.clone());
    let head = proj.apply(target)?;
    let tail = proj.complement(target)?.norm();
    if tail > budget / 4.0 {
        return Err(Error::InvalidArgument(format!(
            "target tail {tail:.3e} outside |k| <= {cutoff} exceeds budget/4 = {:.3e}",
            budget / 4.0
        )));
    }
    let prepared = prepare_families(initial, &low, std::slice::from_ref(&head), base, horizon, settings)?;
    let covering = prepared.families[0].1.distance(&head)?;
    let (entries, frequencies) =
        run_ladder(initial, &prepared, eps_ladder, horizon, budget, settings, |_, u| u.distance(target))?;
    let approximation: Vec<Option<f64>> = entries.iter().map(|e| e.approximation).collect();
    let budget_report = BudgetDecomposition {
        budget,
        cutoff,
        tail,
        covering,
        approximation_ok: approximation.iter().map(|a| a.is_some_and(|a| a <= budget / 2.0)).collect(),
        approximation,
        tail_ok: tail <= budget / 4.0,
        covering_ok: covering <= budget / 4.0,
    };
    let mut report = CoverageReport::assemble("approx", "eps", eps_ladder, budget, 1, entries);
    report.chain = Some(prepared.chain);
    report.frequencies = frequencies;
    report.budget = Some(budget_report);
    report.large_data = target.distance(initial)? > 0.1;
    Ok(report)
}

/// Coordinate superspace `L^C` of a frame and the lift of frame coordinates.
#[derive(Clone, Debug)]
pub struct FrameLift {
    pub frame: FrameProjection,
    pub modes: ModeSet,
    /// `G[i][j]`: frame coordinate `i` of the truncated vector `j`.
    pub gram: DMatrix<Complex64>,
    pub condition: f64,
    truncated: Vec<Vec<Complex64>>,
}

impl FrameLift {
    /// Keeps the coefficients of each frame vector above `truncation` times
    /// its largest one.
    pub fn new(frame: FrameProjection, truncation: f64, max_condition: f64) -> Result<Self> {
        let space = frame.space;
        let mut keep = ModeSet::empty(space.dim);
        let truncated: Vec<Vec<Complex64>> = frame
            .vectors
            .iter()
            .map(|v| {
                let max = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
                v.iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if c.norm() > truncation * max {
                            keep.insert(space.mode(i)).expect("same dimension");
                            *c
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let l = frame.rank();
        let mut gram = DMatrix::from_element(l, l, Complex64::new(0.0, 0.0));
        for (j, v) in truncated.iter().enumerate() {
            let c = frame.coordinates(v);
            for i in 0..l {
                gram[(i, j)] = c[i];
            }
        }
        let sv = gram.clone().singular_values();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= max_condition) {
            return Err(Error::FrameConditioning(condition));
        }
        Ok(FrameLift { frame, modes: keep, gram, condition, truncated })
    }

    /// State in `F_{L^C}` whose projection on `L` has frame coordinates `y`.
    pub fn lift(&self, y: &[Complex64], s: f64) -> Result<SpectralState> {
        let l = self.frame.rank();
        if y.len() != l {
            return Err(Error::DimensionMismatch { expected: l, found: y.len() });
        }
        let rhs = nalgebra::DVector::from_column_slice(y);
        let c = self.gram.clone().lu().solve(&rhs).ok_or(Error::FrameConditioning(f64::INFINITY))?;
        let space = self.frame.space;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); space.len()];
        for (j, v) in self.truncated.iter().enumerate() {
            for (x, vi) in coeffs.iter_mut().zip(v) {
                *x += c[j] * vi;
            }
        }
        SpectralState::from_coeffs(space, s, 0.0, coeffs)
    }

    /// `Σ y_j e_j`.
    pub fn point(&self, y: &[Complex64], s: f64) -> Result<SpectralState> {
        let space = self.frame.space;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); space.len()];
        for (yj, v) in y.iter().zip(&self.frame.vectors) {
            for (x, vi) in coeffs.iter_mut().zip(v) {
                *x += yj * vi;
            }
        }
        SpectralState::from_coeffs(space, s, 0.0, coeffs)
    }
}

/// Steers the projection onto the span of `frame` to the points with frame
/// coordinates `targets`. Errors are `‖Π_L E_T - Σ y_j e_j‖`.
pub fn steer_projection(
    initial: &SpectralState,
    frame: FrameProjection,
    targets: &[Vec<Complex64>],
    base: &ModeSet,
    horizon: f64,
    eps_ladder: &[f64],
    tolerance: f64,
    truncation: f64,
    settings: &SteeringSettings,
) -> Result<(CoverageReport, FrameLift)> {
    let lift = FrameLift::new(frame, truncation, 1e6)?;
    let s = initial.s;
    let lifted: Vec<SpectralState> = targets.iter().map(|y| lift.lift(y, s)).collect::<Result<_>>()?;
    let points: Vec<SpectralState> = targets.iter().map(|y| lift.point(y, s)).collect::<Result<_>>()?;
    let proj = Projection::Frame(lift.frame.clone());
    let task = SteeringTask {
        initial: initial.clone(),
        targets: lifted,
        observed: lift.modes.clone(),
        horizon,
        tolerance,
    };
    let score = |t: usize, u: &SpectralState| proj.apply(u)?.distance(&points[t]);
    let mut report = if task.observed.is_subset(base) {
        task.validate()?;
        let mut entries = Vec::new();
        for &kick in eps_ladder {
            let dt = settings.reference_dt.min(kick / 16.0);
            let programs = full_dim_control(initial, &task.observed, &task.targets, horizon, kick, dt)?;
            let runs: Vec<CoverageEntry> = programs
                .par_iter()
                .enumerate()
                .map(|(t, p)| match integrate(initial, &p.to_source(), &config(dt, horizon)) {
                    Ok(tr) => {
                        let err = score(t, tr.final_state()).ok();
                        CoverageEntry {
                            target: t,
                            parameter: kick,
                            passed: err.is_some_and(|e| e <= tolerance),
                            error: err,
                            approximation: None,
                            leakage: None,
                            failure: None,
                        }
                    }
                    Err(e) => failed(t, kick, e),
                })
                .collect();
            entries.extend(runs);
        }
        entries.sort_by(|a, b| a.target.cmp(&b.target).then(b.parameter.total_cmp(&a.parameter)));
        let mut r = CoverageReport::assemble("projection", "kick", eps_ladder, tolerance, targets.len(), entries);
        r.chain = Some(ExtensionChain::empty(base.clone()));
        r
    } else {
        task.validate()?;
        let prepared = prepare_families(initial, &task.observed, &task.targets, base, horizon, settings)?;
        let (entries, frequencies) =
            run_ladder(initial, &prepared, eps_ladder, horizon, tolerance, settings, score)?;
        let mut r = CoverageReport::assemble("projection", "eps", eps_ladder, tolerance, targets.len(), entries);
        r.chain = Some(prepared.chain);
        r.frequencies = frequencies;
        r
    };
    report.large_data = points.iter().any(|p| p.norm() > 0.1);
    Ok((report, lift))
}

/// Orthonormal (in `inner`) frame from arbitrary vectors by Gram-Schmidt.
pub fn orthonormal_frame(space: ModeBox, vectors: Vec<Vec<Complex64>>, inner: InnerProduct) -> Result<FrameProjection> {
    let w = inner.weights(space);
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        a.iter().zip(b).zip(&w).map(|((x, y), wi)| x.conj() * y * wi).sum()
    };
    let mut out: Vec<Vec<Complex64>> = Vec::new();
    for mut v in vectors {
        for e in &out {
            let c = dot(e, &v);
            for (x, ei) in v.iter_mut().zip(e) {
                *x -= c * ei;
            }
        }
        let n = dot(&v, &v).re.sqrt();
        if !(n > 1e-12) {
            return Err(Error::FrameNotIndependent);
        }
        for x in v.iter_mut() {
            *x /= n;
        }
        out.push(v);
    }
    FrameProjection::new(space, out, inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> ModeSet {
        ModeSet::from_coords(&[&[0, 0], &[1, 0], &[0, 1], &[1, 1]])
    }

    #[test]
    fn zero_target_from_zero_gives_zero_control() {
        let space = ModeBox::new(2, 3);
        let u0 = SpectralState::zeros(space, 1.1);
        let observed = ModeSet::box_modes(2, 1);
        let progs = full_dim_control(&u0, &observed, &[SpectralState::zeros(space, 1.1)], 1.0, 0.1, 1e-2).unwrap();
        assert!(progs[0].modes.is_empty());
    }

    #[test]
    fn kick_reaches_target_in_linear_regime() {
        let space = ModeBox::new(2, 3);
        let u0 = SpectralState::zeros(space, 1.1);
        let observed = ModeSet::box_modes(2, 1);
        let q = target_grid(space, 1.1, &observed, 1e-4, 1, 0, 3).unwrap().remove(0);
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&kick| {
                let p = full_dim_control(&u0, &observed, std::slice::from_ref(&q), 1.0, kick, 1e-3).unwrap();
                let u = integrate(&u0, &p[0].to_source(), &config(1e-3, 1.0)).unwrap();
                u.final_state().distance(&q).unwrap() / q.norm()
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[1] < 0.1, "{errs:?}");
    }

    #[test]
    fn spread_family_hits_linear_target() {
        let space = ModeBox::new(2, 3);
        let u0 = SpectralState::zeros(space, 1.1);
        let observed = cube();
        let q = target_grid(space, 1.1, &observed, 1e-3, 1, 0, 1).unwrap().remove(0);
        let (fam, end) = spread_family(&u0, &observed, &q, 1.0, &SteeringSettings::default()).unwrap();
        assert_eq!(fam.len(), 4);
        let proj = Projection::coordinate(observed);
        assert!(proj.apply(&end).unwrap().distance(&q).unwrap() < 1e-12);
    }

    #[test]
    fn two_mode_frame_lift_is_coordinate() {
        let space = ModeBox::new(2, 2);
        let mut v = vec![Complex64::new(0.0, 0.0); space.len()];
        v[space.index_of(&[1, 0].into()).unwrap()] = Complex64::new(1.0, 0.0);
        v[space.index_of(&[0, 1].into()).unwrap()] = Complex64::new(1.0, 0.0);
        let frame = orthonormal_frame(space, vec![v], InnerProduct::L2).unwrap();
        let lift = FrameLift::new(frame, 1e-8, 1e6).unwrap();
        assert_eq!(lift.modes, ModeSet::from_coords(&[&[1, 0], &[0, 1]]));
        assert!((lift.condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_frame_rejects_dependent_vectors() {
        let space = ModeBox::new(1, 2);
        let v = vec![Complex64::new(1.0, 0.0); space.len()];
        assert!(matches!(
            orthonormal_frame(space, vec![v.clone(), v], InnerProduct::L2),
            Err(Error::FrameNotIndependent)
        ));
    }
}
