//! Time integration of `-i u_t + Δu = |u|^2 u + V(t, x)`, i.e.
//! `∂_t u_k = i|k|^2 u_k + i (|u|^2 u + V)_k`.
//!
//! The workhorse is a Strang splitting: half linear step, source kick,
//! pointwise cubic rotation, source kick, half linear step. Source kicks
//! use exact integrals of the source over each half step expressed in the
//! rotated basis, so control pulses shorter than `dt` are still captured.
//! The reference integrator applies Picard iteration to the Duhamel
//! formula with Gauss collocation on each subinterval.

use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{cubic_coeffs, hs_norm_coeffs, ModeBox, SpectralState, Transform, ZERO};
use crate::lattice::{ModeIndex, ModeSet};
use crate::signal::{Phase, Signal};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Basis in which a source's signals are expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceBasis {
    /// `V = sum_k v_k(t) e^{ik.x}`.
    Exponential,
    /// `V = sum_k w_k(t) f_k`, `f_k = e^{i(k.x + |k|^2 t)}`.
    Rotated,
}

/// Finite-mode source `V(t, x)`.
#[derive(Clone, Debug)]
pub struct SourceTerm {
    pub basis: SourceBasis,
    pub signals: Vec<(ModeIndex, Signal)>,
    /// Smallest oscillation parameter present, if the source carries fast
    /// carriers; the step must satisfy `dt <= pi eps / 32`.
    pub carrier_eps: Option<f64>,
}

impl SourceTerm {
    pub fn zero() -> Self {
        SourceTerm { basis: SourceBasis::Rotated, signals: Vec::new(), carrier_eps: None }
    }

    pub fn new(basis: SourceBasis, signals: Vec<(ModeIndex, Signal)>) -> Self {
        SourceTerm { basis, signals, carrier_eps: None }
    }

    pub fn with_carrier_eps(mut self, eps: f64) -> Self {
        self.carrier_eps = Some(eps);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.signals.iter().all(|(_, s)| s.is_zero())
    }

    pub fn modes(&self, dim: usize) -> Result<ModeSet> {
        ModeSet::from_modes(dim, self.signals.iter().map(|(k, _)| k.clone()))
    }

    /// Multiplies every signal by a constant.
    pub fn scaled(&self, c: Complex64) -> SourceTerm {
        let signals = self.signals.iter().map(|(k, s)| (k.clone(), s.clone().scale(c))).collect();
        SourceTerm { basis: self.basis, signals, carrier_eps: self.carrier_eps }
    }

    /// Signals in the rotated basis, resolved against a mode box.
    fn resolve(&self, space: ModeBox) -> Result<Vec<(usize, f64, Signal)>> {
        let ksq = space.ksq();
        let mut out = Vec::new();
        for (k, s) in &self.signals {
            if s.is_zero() {
                continue;
            }
            let i = space.index_of(k).ok_or_else(|| Error::NotExpressible(k.clone()))?;
            let q = ksq[i];
            let f = match self.basis {
                SourceBasis::Rotated => s.clone(),
                SourceBasis::Exponential => s.clone().modulated(Phase::linear(0.0, -q)),
            };
            out.push((i, q, f));
        }
        Ok(out)
    }
}

/// A pointwise perturbation `φ(t, u)` entering as `+φ` on the right of the
/// equation, i.e. `∂_t u += i φ(t, u)`.
pub trait Perturbation: Send + Sync {
    /// Builds an evaluator for a grid with `n` points per axis.
    fn prepare(&self, dim: usize, n: usize) -> Box<dyn GridPerturbation>;
}

pub trait GridPerturbation {
    /// Writes `φ(t, u(x_j))` for every grid point.
    fn eval(&mut self, t: f64, u: &[Complex64], out: &mut [Complex64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    StrangSplit,
    DuhamelPicard,
}

/// Grid used for the pointwise cubic substep of the splitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearGrid {
    /// `2M + 1` points per axis: the substep is exactly unitary, so mass is
    /// conserved to roundoff; products fold back into the box.
    #[default]
    Collocation,
    /// `2(2M + 1)` points per axis with truncation back to the box.
    Padded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub grid: NonlinearGrid,
    /// Snapshot every `stride` steps; 0 keeps only the initial and final states.
    #[serde(default)]
    pub stride: usize,
    /// Abort when `‖u‖_{H^s}` exceeds this factor times `max(‖u0‖_{H^s}, 1)`.
    #[serde(default = "default_blowup")]
    pub blowup_factor: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_iter")]
    pub picard_max_iter: usize,
}

fn default_blowup() -> f64 {
    1e3
}
fn default_picard_tol() -> f64 {
    1e-14
}
fn default_picard_iter() -> usize {
    60
}

impl IntegratorConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        IntegratorConfig {
            dt,
            horizon,
            scheme: Scheme::StrangSplit,
            grid: NonlinearGrid::Collocation,
            stride: 0,
            blowup_factor: default_blowup(),
            picard_tol: default_picard_tol(),
            picard_max_iter: default_picard_iter(),
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Uniform step count; the effective step `horizon / steps` never
    /// exceeds `dt`.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn validate(&self, source: &SourceTerm) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if let Some(eps) = source.carrier_eps {
            let limit = std::f64::consts::PI * eps / 32.0;
            if self.horizon / self.steps() as f64 > limit * (1.0 + 1e-9) {
                return Err(Error::InvalidArgument(format!(
                    "dt = {} does not resolve carriers with eps = {eps}; need dt <= pi eps / 32 = {limit}",
                    self.dt
                )));
            }
        }
        Ok(())
    }
}

/// Snapshots of an integration; the last one is the end point.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<SpectralState>,
    pub dt: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpectralState {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Reusable workspace for Strang steps on one mode box.
pub struct StrangStepper {
    space: ModeBox,
    ksq: Vec<f64>,
    tr: Transform,
    grid: Vec<Complex64>,
    source: Vec<(usize, f64, Signal)>,
    perturb: Option<Box<dyn GridPerturbation>>,
    phi: Vec<Complex64>,
    mid: Vec<Complex64>,
}

impl StrangStepper {
    pub fn new(
        space: ModeBox,
        source: &SourceTerm,
        perturbation: Option<&dyn Perturbation>,
        grid: NonlinearGrid,
    ) -> Result<Self> {
        let tr = match grid {
            NonlinearGrid::Collocation => Transform::collocation(space),
            NonlinearGrid::Padded => Transform::padded(space),
        };
        let n = tr.points_per_axis();
        Ok(StrangStepper {
            space,
            ksq: space.ksq(),
            tr,
            grid: Vec::new(),
            source: source.resolve(space)?,
            perturb: perturbation.map(|p| p.prepare(space.dim, n)),
            phi: Vec::new(),
            mid: Vec::new(),
        })
    }

    fn linear(&self, coeffs: &mut [Complex64], h: f64) {
        for (c, q) in coeffs.iter_mut().zip(&self.ksq) {
            *c *= Complex64::from_polar(1.0, q * h);
        }
    }

    fn kick(&self, coeffs: &mut [Complex64], t0: f64, t1: f64, frame_time: f64) {
        for (i, q, sig) in &self.source {
            coeffs[*i] += I * Complex64::from_polar(1.0, q * frame_time) * sig.increment(t0, t1);
        }
    }

    /// Midpoint rule for `∂_t u = i φ(t, u)` over `[t0, t0 + h]` on the grid.
    fn perturb_step(&mut self, t0: f64, h: f64) {
        let Some(p) = self.perturb.as_mut() else { return };
        let len = self.grid.len();
        self.phi.resize(len, ZERO);
        self.mid.resize(len, ZERO);
        p.eval(t0, &self.grid, &mut self.phi);
        for j in 0..len {
            self.mid[j] = self.grid[j] + I * self.phi[j] * (0.5 * h);
        }
        p.eval(t0 + 0.5 * h, &self.mid, &mut self.phi);
        for j in 0..len {
            self.grid[j] += I * self.phi[j] * h;
        }
    }

    /// One step from `t0` to `t0 + dt`.
    pub fn step(&mut self, coeffs: &mut [Complex64], t0: f64, dt: f64) {
        let tm = t0 + 0.5 * dt;
        let t1 = t0 + dt;
        self.linear(coeffs, 0.5 * dt);
        self.kick(coeffs, t0, tm, tm);
        let mut grid = std::mem::take(&mut self.grid);
        self.tr.to_grid(coeffs, &mut grid);
        self.grid = grid;
        self.perturb_step(t0, 0.5 * dt);
        for v in self.grid.iter_mut() {
            *v *= Complex64::from_polar(1.0, v.norm_sqr() * dt);
        }
        self.perturb_step(tm, 0.5 * dt);
        let mut grid = std::mem::take(&mut self.grid);
        self.tr.from_grid(&mut grid, coeffs);
        self.grid = grid;
        self.kick(coeffs, tm, t1, tm);
        self.linear(coeffs, 0.5 * dt);
    }

    pub fn space(&self) -> ModeBox {
        self.space
    }
}

/// One Strang step of size `dt` from the state's time.
pub fn step_strang(state: &SpectralState, source: &SourceTerm, dt: f64) -> Result<SpectralState> {
    let mut stepper = StrangStepper::new(state.space, source, None, NonlinearGrid::Collocation)?;
    let mut out = state.clone();
    stepper.step(&mut out.coeffs, state.time, dt);
    out.time = state.time + dt;
    Ok(out)
}

struct Guard {
    limit: f64,
    s: f64,
    space: ModeBox,
}

impl Guard {
    fn new(u0: &SpectralState, factor: f64) -> Self {
        Guard { limit: factor * u0.norm().max(1.0), s: u0.s, space: u0.space }
    }

    fn check(&self, coeffs: &[Complex64], time: f64) -> Result<()> {
        let n = hs_norm_coeffs(self.space, coeffs, self.s);
        if !n.is_finite() || n > self.limit {
            return Err(Error::BlowupDetected { time, norm: n, guard: self.limit });
        }
        Ok(())
    }
}

/// Integrates from `state0.time` over `config.horizon` with the configured scheme.
pub fn integrate(state0: &SpectralState, source: &SourceTerm, config: &IntegratorConfig) -> Result<Trajectory> {
    match config.scheme {
        Scheme::StrangSplit => integrate_with(state0, source, None, config),
        Scheme::DuhamelPicard => integrate_picard(state0, source, config),
    }
}

/// Strang integration with an optional pointwise perturbation.
pub fn integrate_with(
    state0: &SpectralState,
    source: &SourceTerm,
    perturbation: Option<&dyn Perturbation>,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate(source)?;
    let steps = config.steps();
    let dt = config.horizon / steps as f64;
    let mut stepper = StrangStepper::new(state0.space, source, perturbation, config.grid)?;
    let guard = Guard::new(state0, config.blowup_factor);
    let mut u = state0.clone();
    let mut states = vec![state0.clone()];
    let t_start = state0.time;
    for n in 0..steps {
        let t0 = t_start + n as f64 * dt;
        stepper.step(&mut u.coeffs, t0, dt);
        u.time = t_start + (n + 1) as f64 * dt;
        guard.check(&u.coeffs, u.time)?;
        let last = n + 1 == steps;
        if last || (config.stride > 0 && (n + 1) % config.stride == 0) {
            states.push(u.clone());
        }
    }
    Ok(Trajectory { states, dt, steps })
}

/// Gauss-Legendre collocation data on `[0, 1]` with four nodes.
struct Collocation {
    c: [f64; 4],
    b: [f64; 4],
    /// `a[j][l] = ∫_0^{c_j} ℓ_l`.
    a: [[f64; 4]; 4],
}

fn collocation() -> &'static Collocation {
    static TABLE: OnceLock<Collocation> = OnceLock::new();
    TABLE.get_or_init(|| {
        let x = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
        let w = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
        let c = x.map(|x| 0.5 * (1.0 + x));
        let b = w.map(|w| 0.5 * w);
        let lagrange = |l: usize, t: f64| -> f64 {
            (0..4).filter(|&m| m != l).map(|m| (t - c[m]) / (c[l] - c[m])).product()
        };
        let mut a = [[0.0; 4]; 4];
        for j in 0..4 {
            for l in 0..4 {
                // Gauss rule on [0, c_j] is exact for the cubic ℓ_l.
                a[j][l] = (0..4).map(|q| b[q] * c[j] * lagrange(l, c[j] * c[q])).sum();
            }
        }
        Collocation { c, b, a }
    })
}

/// Picard iteration of the Duhamel formula on subintervals of length
/// `config.dt`, collocated at four Gauss nodes (order 8). The cubic term is
/// evaluated alias-free on the padded grid.
pub fn integrate_picard(state0: &SpectralState, source: &SourceTerm, config: &IntegratorConfig) -> Result<Trajectory> {
    if !(config.dt > 0.0) || !(config.horizon > 0.0) {
        return Err(Error::InvalidArgument("dt and horizon must be positive".into()));
    }
    let space = state0.space;
    let ksq = space.ksq();
    let src = source.resolve(space)?;
    let mut tr = Transform::padded(space);
    let guard = Guard::new(state0, config.blowup_factor);
    let col = collocation();
    let steps = config.steps();
    let h = config.horizon / steps as f64;
    let len = space.len();
    let t_start = state0.time;

    // Interaction variable a_k = e^{-i|k|^2 t} u_k.
    let to_a = |coeffs: &[Complex64], t: f64| -> Vec<Complex64> {
        coeffs.iter().zip(&ksq).map(|(c, q)| c * Complex64::from_polar(1.0, -q * t)).collect()
    };
    let mut a = to_a(&state0.coeffs, t_start);
    let mut states = vec![state0.clone()];
    let mut nodes_a = vec![vec![ZERO; len]; 4];
    let mut g = vec![vec![ZERO; len]; 4];
    let mut u_node = vec![ZERO; len];
    let mut cubic = vec![ZERO; len];

    for n in 0..steps {
        let tn = t_start + n as f64 * h;
        let tau: Vec<f64> = col.c.iter().map(|c| tn + c * h).collect();
        // Source contributions i ∫_{tn}^{τ_j} w_k are fixed during the iteration.
        let mut src_inc = vec![vec![ZERO; len]; 5];
        for (i, _, sig) in &src {
            for j in 0..4 {
                src_inc[j][*i] = I * sig.increment(tn, tau[j]);
            }
            src_inc[4][*i] = I * sig.increment(tn, tn + h);
        }
        for j in 0..4 {
            for i in 0..len {
                nodes_a[j][i] = a[i] + src_inc[j][i];
            }
        }
        let mut prev_update = f64::INFINITY;
        let mut converged = false;
        for iter in 0..config.picard_max_iter {
            for j in 0..4 {
                for i in 0..len {
                    u_node[i] = nodes_a[j][i] * Complex64::from_polar(1.0, ksq[i] * tau[j]);
                }
                cubic_coeffs(&mut tr, &u_node, &mut cubic);
                for i in 0..len {
                    g[j][i] = cubic[i] * Complex64::from_polar(1.0, -ksq[i] * tau[j]);
                }
            }
            let mut update: f64 = 0.0;
            let mut scale: f64 = 1.0;
            for j in 0..4 {
                for i in 0..len {
                    let mut acc = ZERO;
                    for l in 0..4 {
                        acc += g[l][i] * col.a[j][l];
                    }
                    let next = a[i] + src_inc[j][i] + I * acc * h;
                    update = update.max((next - nodes_a[j][i]).norm());
                    scale = scale.max(next.norm());
                    nodes_a[j][i] = next;
                }
            }
            if !update.is_finite() || (iter > 3 && update > prev_update * 1.5) {
                return Err(Error::ContractionFailure { time: tn, update });
            }
            prev_update = update;
            if update <= config.picard_tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::ContractionFailure { time: tn, update: prev_update });
        }
        // Final collocation update with the converged node values.
        for j in 0..4 {
            for i in 0..len {
                u_node[i] = nodes_a[j][i] * Complex64::from_polar(1.0, ksq[i] * tau[j]);
            }
            cubic_coeffs(&mut tr, &u_node, &mut cubic);
            for i in 0..len {
                g[j][i] = cubic[i] * Complex64::from_polar(1.0, -ksq[i] * tau[j]);
            }
        }
        for i in 0..len {
            let mut acc = ZERO;
            for l in 0..4 {
                acc += g[l][i] * col.b[l];
            }
            a[i] += src_inc[4][i] + I * acc * h;
        }
        let t1 = t_start + (n + 1) as f64 * h;
        let coeffs: Vec<Complex64> = a.iter().zip(&ksq).map(|(c, q)| c * Complex64::from_polar(1.0, q * t1)).collect();
        guard.check(&coeffs, t1)?;
        let last = n + 1 == steps;
        if last || (config.stride > 0 && (n + 1) % config.stride == 0) {
            states.push(SpectralState { space, s: state0.s, time: t1, coeffs });
        }
    }
    Ok(Trajectory { states, dt: h, steps })
}

/// `a e^{i(k.x + (|k|^2 + |a|^2) t)}`, the exact plane-wave solution.
pub fn plane_wave_solution(space: ModeBox, s: f64, k: &ModeIndex, a: Complex64, t: f64) -> Result<SpectralState> {
    let phase = (k.norm_sq() as f64 + a.norm_sqr()) * t;
    let mut u = SpectralState::plane_wave(space, s, k, a * Complex64::from_polar(1.0, phase))?;
    u.time = t;
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn collocation_weights_integrate_polynomials() {
        let col = collocation();
        assert!((col.b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for j in 0..4 {
            // ∫_0^{c_j} 3 t^2 = c_j^3
            let v: f64 = (0..4).map(|l| col.a[j][l] * 3.0 * col.c[l].powi(2)).sum();
            assert!((v - col.c[j].powi(3)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_flow_is_exact() {
        let sp = ModeBox::new(2, 4);
        let u0 = SpectralState::random_smooth(sp, 1.1, 11, 1e-6, 2.0);
        let traj = integrate(&u0, &SourceTerm::zero(), &IntegratorConfig::new(0.01, 1.0)).unwrap();
        let exact = u0.free_evolve(1.0);
        // cubic effect is O(|u|^3) = 1e-18
        assert!(traj.final_state().sub(&exact).unwrap().norm() < 1e-13 * 1e-6 + 1e-17);
    }

    #[test]
    fn zero_stays_zero() {
        let sp = ModeBox::new(2, 3);
        let u0 = SpectralState::zeros(sp, 1.1);
        for scheme in [Scheme::StrangSplit, Scheme::DuhamelPicard] {
            let cfg = IntegratorConfig::new(0.05, 0.5).with_scheme(scheme);
            let traj = integrate(&u0, &SourceTerm::zero(), &cfg).unwrap();
            assert_eq!(traj.final_state().norm(), 0.0);
        }
    }

    #[test]
    fn constant_rotated_source_gives_linear_growth() {
        // u_t = i Δ... with V = w f_k and u0 = 0, the solution is i w t f_k
        // while the cubic term stays negligible.
        let sp = ModeBox::new(1, 3);
        let w = c(1e-6, 0.0);
        let src = SourceTerm::new(SourceBasis::Rotated, vec![([2].into(), Signal::constant(w))]);
        let u0 = SpectralState::zeros(sp, 1.0);
        let t = 0.7;
        let traj = integrate(&u0, &src, &IntegratorConfig::new(0.1, t)).unwrap();
        let got = traj.final_state().get(&[2].into()).unwrap();
        let expect = I * w * t * Complex64::from_polar(1.0, 4.0 * t);
        assert!((got - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn short_pulse_inside_one_step_is_captured() {
        let sp = ModeBox::new(1, 2);
        let b = c(1e-5, 0.0);
        let pulse = Signal::constant(b / 1e-4).windowed(0.31, 0.3101);
        let src = SourceTerm::new(SourceBasis::Exponential, vec![([0].into(), pulse)]);
        let u0 = SpectralState::zeros(sp, 1.0);
        let traj = integrate(&u0, &src, &IntegratorConfig::new(0.05, 0.5)).unwrap();
        let got = traj.final_state().get(&[0].into()).unwrap();
        assert!((got - I * b).norm() < 1e-15);
    }

    #[test]
    fn blowup_guard_trips() {
        let sp = ModeBox::new(1, 2);
        let src = SourceTerm::new(SourceBasis::Rotated, vec![([0].into(), Signal::constant(c(1e5, 0.0)))]);
        let u0 = SpectralState::zeros(sp, 1.0);
        let r = integrate(&u0, &src, &IntegratorConfig::new(0.01, 1.0));
        assert!(matches!(r, Err(Error::BlowupDetected { .. })));
    }

    #[test]
    fn picard_reports_contraction_failure() {
        let sp = ModeBox::new(1, 2);
        let u0 = SpectralState::plane_wave(sp, 1.0, &[0].into(), c(5.0, 0.0)).unwrap();
        let cfg = IntegratorConfig::new(0.5, 1.0).with_scheme(Scheme::DuhamelPicard);
        assert!(matches!(
            integrate(&u0, &SourceTerm::zero(), &cfg),
            Err(Error::ContractionFailure { .. })
        ));
    }
}
