//! Oscillatory perturbation diagnostics: the relaxation seminorm
//! `sup_{t,t'} ‖∫_t^{t'} φ(τ, u) dτ‖`, end-point deviation of perturbed
//! runs along an `ε` ladder, and Lipschitz ratios of the input-to-state
//! map in the substituted variable `u* = u - iW`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{hs_norm_coeffs, ModeBox, SpectralState, Transform, ZERO};
use crate::integrator::{integrate, integrate_with, GridPerturbation, IntegratorConfig, Perturbation, SourceBasis, SourceTerm};
use crate::lattice::ModeIndex;
use crate::signal::{exp_integral, gauss_real, Primitive, Signal};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// State monomial multiplying a probe coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// `W⁰`
    Constant,
    /// `u W¹¹`
    Linear,
    /// `ū W¹²`
    Conjugate,
    /// `u² W²¹`
    Square,
    /// `|u|² W²²`
    Modulus,
}

impl ProbeKind {
    fn apply(self, u: Complex64) -> Complex64 {
        match self {
            ProbeKind::Constant => Complex64::new(1.0, 0.0),
            ProbeKind::Linear => u,
            ProbeKind::Conjugate => u.conj(),
            ProbeKind::Square => u * u,
            ProbeKind::Modulus => Complex64::new(u.norm_sqr(), 0.0),
        }
    }
}

/// `W(t, x) = w e^{ik.x} e^{i(ρ₀ + ρ' t)} e^{iat/ε}` times a state monomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTerm {
    pub kind: ProbeKind,
    pub mode: ModeIndex,
    pub amplitude: Complex64,
    #[serde(default)]
    pub rho0: f64,
    #[serde(default)]
    pub rho_rate: f64,
    /// Carrier multiple `a`.
    pub carrier: f64,
}

/// Sum of probe terms at one `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationProbe {
    pub terms: Vec<ProbeTerm>,
    pub eps: f64,
}

impl PerturbationProbe {
    pub fn new(terms: Vec<ProbeTerm>, eps: f64) -> Self {
        PerturbationProbe { terms, eps }
    }

    pub fn zero() -> Self {
        PerturbationProbe { terms: Vec::new(), eps: 1.0 }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        PerturbationProbe { terms: self.terms.clone(), eps }
    }

    fn rate(&self, term: &ProbeTerm) -> f64 {
        term.rho_rate + term.carrier / self.eps
    }

    /// Time coefficient of a term.
    pub fn coefficient(&self, term: &ProbeTerm, t: f64) -> Complex64 {
        term.amplitude * Complex64::from_polar(1.0, term.rho0 + self.rate(term) * t)
    }

    /// `∫_{t0}^{t1}` of the time coefficient.
    pub fn coefficient_integral(&self, term: &ProbeTerm, t0: f64, t1: f64) -> Complex64 {
        term.amplitude * exp_integral(term.rho0, self.rate(term), t0, t1)
    }

    /// Largest angular frequency of the time coefficients.
    pub fn rate_bound(&self) -> f64 {
        self.terms.iter().map(|t| self.rate(t).abs()).fold(0.0, f64::max)
    }

    /// Spectral coefficients of `φ(t, u)` on the box of `u`.
    pub fn evaluate(&self, t: f64, u: &SpectralState) -> SpectralState {
        let mut tr = Transform::padded(u.space);
        let mut grid = Vec::new();
        tr.to_grid(&u.coeffs, &mut grid);
        let mut eval = self.prepare(u.space.dim, tr.points_per_axis());
        let mut out = vec![ZERO; grid.len()];
        eval.eval(t, &grid, &mut out);
        let mut coeffs = vec![ZERO; u.space.len()];
        tr.from_grid(&mut out, &mut coeffs);
        SpectralState { space: u.space, s: u.s, time: t, coeffs }
    }
}

/// `e^{ik.x_j}` on an `n`-point-per-axis grid, row-major.
fn plane_wave_grid(k: &ModeIndex, dim: usize, n: usize) -> Vec<Complex64> {
    let len = n.pow(dim as u32);
    let step = 2.0 * std::f64::consts::PI / n as f64;
    (0..len)
        .map(|mut lin| {
            let mut phase = 0.0;
            for axis in (0..dim).rev() {
                let j = lin % n;
                lin /= n;
                phase += k.coords()[axis] as f64 * j as f64 * step;
            }
            Complex64::from_polar(1.0, phase)
        })
        .collect()
}

struct ProbeGrid {
    probe: PerturbationProbe,
    waves: Vec<Vec<Complex64>>,
}

impl GridPerturbation for ProbeGrid {
    fn eval(&mut self, t: f64, u: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        for (term, wave) in self.probe.terms.iter().zip(&self.waves) {
            let c = self.probe.coefficient(term, t);
            for ((o, ui), e) in out.iter_mut().zip(u).zip(wave) {
                *o += c * e * term.kind.apply(*ui);
            }
        }
    }
}

impl Perturbation for PerturbationProbe {
    fn prepare(&self, dim: usize, n: usize) -> Box<dyn GridPerturbation> {
        let waves = self.terms.iter().map(|t| plane_wave_grid(&t.mode, dim, n)).collect();
        Box::new(ProbeGrid { probe: self.clone(), waves })
    }
}

/// `∫_0^h e^{iωs} s ds`.
fn exp_moment(omega: f64, h: f64) -> Complex64 {
    let x = omega * h;
    if x.abs() < 1e-3 {
        let ix = I * x;
        h * h * (0.5 + ix / 3.0 + ix * ix / 8.0 + ix * ix * ix / 30.0)
    } else {
        let e = Complex64::from_polar(1.0, x);
        e * h / (I * omega) + (e - 1.0) / (omega * omega)
    }
}

/// Nominal trajectory evaluated at arbitrary times by linear interpolation
/// of `e^{-i|k|^2 t} u_k`.
fn interpolate(nominal: &[SpectralState], t: f64) -> SpectralState {
    let j = nominal.partition_point(|u| u.time <= t).clamp(1, nominal.len().max(2) - 1);
    if nominal.len() == 1 {
        return nominal[0].clone();
    }
    let (a, b) = (&nominal[j - 1], &nominal[j]);
    let th = ((t - a.time) / (b.time - a.time)).clamp(0.0, 1.0);
    let ksq = a.space.ksq();
    let coeffs = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .zip(&ksq)
        .map(|((x, y), q)| {
            let xa = x * Complex64::from_polar(1.0, -q * a.time);
            let ya = y * Complex64::from_polar(1.0, -q * b.time);
            (xa + (ya - xa) * th) * Complex64::from_polar(1.0, q * t)
        })
        .collect();
    SpectralState { space: a.space, s: a.s, time: t, coeffs }
}

/// `max_{i<j} ‖S_j - S_i‖` for cumulative integrals pre-multiplied by the
/// square roots of the Sobolev weights.
fn max_pair_distance(cumulative: &[Vec<Complex64>]) -> f64 {
    (0..cumulative.len())
        .into_par_iter()
        .map(|j| {
            let sj = &cumulative[j];
            cumulative[..j]
                .iter()
                .map(|si| sj.iter().zip(si).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

/// Spectral coefficients of `monomial(u) e^{ik.x}` for every term.
fn term_profiles(probe: &PerturbationProbe, u: &SpectralState, tr: &mut Transform) -> Vec<Vec<Complex64>> {
    let mut grid = Vec::new();
    tr.to_grid(&u.coeffs, &mut grid);
    let n = tr.points_per_axis();
    probe
        .terms
        .iter()
        .map(|term| {
            let wave = plane_wave_grid(&term.mode, u.space.dim, n);
            let mut g: Vec<Complex64> = grid.iter().zip(&wave).map(|(ui, e)| term.kind.apply(*ui) * e).collect();
            let mut out = vec![ZERO; u.space.len()];
            tr.from_grid(&mut g, &mut out);
            out
        })
        .collect()
}

/// Relaxation seminorm of `probe` along `nominal` (snapshots with times)
/// on a uniform partition with `resolution` cells. Within each cell the
/// state monomials are linear in time and the carriers are integrated
/// exactly.
pub fn relaxation_seminorm(probe: &PerturbationProbe, nominal: &[SpectralState], resolution: usize) -> Result<f64> {
    Ok(seminorm_and_l1(probe, nominal, resolution)?.0)
}

fn seminorm_and_l1(probe: &PerturbationProbe, nominal: &[SpectralState], resolution: usize) -> Result<(f64, f64)> {
    let first = nominal.first().ok_or_else(|| Error::InvalidArgument("empty nominal trajectory".into()))?;
    if resolution == 0 {
        return Err(Error::InvalidArgument("partition resolution must be positive".into()));
    }
    if probe.terms.is_empty() {
        return Ok((0.0, 0.0));
    }
    let space = first.space;
    let t0 = first.time;
    let t1 = nominal.last().unwrap().time;
    let h = (t1 - t0) / resolution as f64;
    let sqrt_w: Vec<f64> = space.sobolev_weights(first.s).iter().map(|w| w.sqrt()).collect();
    let profiles: Vec<Vec<Vec<Complex64>>> = (0..=resolution)
        .into_par_iter()
        .map_init(
            || Transform::padded(space),
            |tr, j| term_profiles(probe, &interpolate(nominal, t0 + j as f64 * h), tr),
        )
        .collect();
    let mut cumulative = vec![vec![ZERO; space.len()]; resolution + 1];
    let mut l1 = 0.0;
    for j in 0..resolution {
        let a = t0 + j as f64 * h;
        let mut next = cumulative[j].clone();
        for (m, term) in probe.terms.iter().enumerate() {
            let i0 = probe.coefficient_integral(term, a, a + h);
            let start = probe.coefficient(term, a);
            let i1 = start * exp_moment(probe.rate(term), h);
            let (g0, g1) = (&profiles[j][m], &profiles[j + 1][m]);
            for ((x, a0), (a1, w)) in next.iter_mut().zip(g0).zip(g1.iter().zip(&sqrt_w)) {
                *x += (a0 * i0 + (a1 - a0) * (i1 / h)) * w;
            }
        }
        cumulative[j + 1] = next;
        // L¹ norm by the midpoint of the node values.
        let node = |idx: usize, t: f64| -> f64 {
            let mut v = vec![ZERO; space.len()];
            for (m, term) in probe.terms.iter().enumerate() {
                let c = probe.coefficient(term, t);
                for (x, g) in v.iter_mut().zip(&profiles[idx][m]) {
                    *x += c * g;
                }
            }
            hs_norm_coeffs(space, &v, first.s)
        };
        l1 += 0.5 * h * (node(j, a) + node(j + 1, a + h));
    }
    Ok((max_pair_distance(&cumulative), l1))
}

/// Seminorm with the state frozen at each of `states` over `[0, horizon]`;
/// the largest value.
pub fn relaxation_seminorm_frozen(probe: &PerturbationProbe, states: &[SpectralState], horizon: f64, resolution: usize) -> Result<f64> {
    let mut best: f64 = 0.0;
    for u in states {
        let mut tr = Transform::padded(u.space);
        let profiles = term_profiles(probe, u, &mut tr);
        let sqrt_w: Vec<f64> = u.space.sobolev_weights(u.s).iter().map(|w| w.sqrt()).collect();
        let h = horizon / resolution as f64;
        let cumulative: Vec<Vec<Complex64>> = (0..=resolution)
            .map(|j| {
                let mut v = vec![ZERO; u.space.len()];
                for (term, g) in probe.terms.iter().zip(&profiles) {
                    let c = probe.coefficient_integral(term, 0.0, j as f64 * h);
                    for ((x, gi), w) in v.iter_mut().zip(g).zip(&sqrt_w) {
                        *x += c * gi * w;
                    }
                }
                v
            })
            .collect();
        best = best.max(max_pair_distance(&cumulative));
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub eps: Vec<f64>,
    pub resolution: usize,
    pub dt: f64,
    pub seminorm: Vec<f64>,
    /// Seminorm with the state frozen at sampled states; the larger of the
    /// two enters `ratio`.
    pub seminorm_frozen: Vec<f64>,
    pub l1_norm: Vec<f64>,
    /// `sup_t ‖u(t) - ũ(t)‖`.
    pub deviation: Vec<f64>,
    pub endpoint_deviation: Vec<f64>,
    /// `deviation / seminorm`.
    pub ratio: Vec<f64>,
    /// Least-squares `C` in `deviation ≈ C seminorm`.
    pub fitted_constant: f64,
    /// `deviation[j] / deviation[j + 1]`.
    pub reduction: Vec<f64>,
    pub monotone: bool,
}

impl SeminormReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eps", "seminorm", "seminorm_frozen", "l1_norm", "deviation", "endpoint_deviation", "ratio"])?;
        for j in 0..self.eps.len() {
            w.write_record([
                format!("{}", self.eps[j]),
                format!("{:.12e}", self.seminorm[j]),
                format!("{:.12e}", self.seminorm_frozen[j]),
                format!("{:.12e}", self.l1_norm[j]),
                format!("{:.12e}", self.deviation[j]),
                format!("{:.12e}", self.endpoint_deviation[j]),
                format!("{:.12e}", self.ratio[j]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Settings of an end-point deviation study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationSettings {
    pub horizon: f64,
    /// Largest step; reduced to `π ε a / 32` for the fastest carrier.
    pub max_dt: f64,
    pub resolution: usize,
    /// Number of random states for the frozen seminorm.
    pub frozen_samples: usize,
    pub seed: u64,
}

impl Default for DeviationSettings {
    fn default() -> Self {
        DeviationSettings { horizon: 1.0, max_dt: 1e-3, resolution: 2048, frozen_samples: 2, seed: 7 }
    }
}

/// Runs the nominal problem and its probe-perturbed versions for every `ε`.
pub fn endpoint_deviation_study(
    u0: &SpectralState,
    source: &SourceTerm,
    shape: &PerturbationProbe,
    eps_ladder: &[f64],
    settings: &DeviationSettings,
) -> Result<SeminormReport> {
    let eps_min = eps_ladder.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_max = shape.terms.iter().map(|t| t.carrier.abs()).fold(1.0, f64::max);
    let mut dt = settings.max_dt.min(std::f64::consts::PI * eps_min / (32.0 * a_max));
    if let Some(e) = source.carrier_eps {
        dt = dt.min(std::f64::consts::PI * e / 32.0);
    }
    let cfg = IntegratorConfig::new(dt, settings.horizon).with_stride(1);
    let nominal = integrate(u0, source, &cfg)?.states;
    let scale = nominal.iter().map(|u| u.norm()).fold(0.0, f64::max).max(1e-3);
    let samples: Vec<SpectralState> = (0..settings.frozen_samples)
        .map(|j| SpectralState::random_smooth(u0.space, u0.s, settings.seed + j as u64, scale, 2.0))
        .collect();
    let rows: Vec<Result<(f64, f64, f64, f64, f64)>> = eps_ladder
        .par_iter()
        .map(|&eps| {
            let probe = shape.with_eps(eps);
            let run = integrate_with(u0, source, Some(&probe), &cfg)?.states;
            let mut dev: f64 = 0.0;
            for (a, b) in run.iter().zip(&nominal) {
                dev = dev.max(a.distance(b)?);
            }
            let end = run.last().unwrap().distance(nominal.last().unwrap())?;
            let (semi, l1) = seminorm_and_l1(&probe, &nominal, settings.resolution)?;
            let frozen = relaxation_seminorm_frozen(&probe, &samples, settings.horizon, settings.resolution)?;
            Ok((semi, frozen, l1, dev, end))
        })
        .collect();
    let mut report = SeminormReport {
        eps: eps_ladder.to_vec(),
        resolution: settings.resolution,
        dt,
        seminorm: Vec::new(),
        seminorm_frozen: Vec::new(),
        l1_norm: Vec::new(),
        deviation: Vec::new(),
        endpoint_deviation: Vec::new(),
        ratio: Vec::new(),
        fitted_constant: 0.0,
        reduction: Vec::new(),
        monotone: true,
    };
    for row in rows {
        let (semi, frozen, l1, dev, end) = row?;
        report.seminorm.push(semi);
        report.seminorm_frozen.push(frozen);
        report.l1_norm.push(l1);
        report.deviation.push(dev);
        report.endpoint_deviation.push(end);
        let s = semi.max(frozen);
        report.ratio.push(if s > 0.0 { dev / s } else { 0.0 });
    }
    let (num, den) = report
        .seminorm
        .iter()
        .zip(&report.seminorm_frozen)
        .zip(&report.deviation)
        .fold((0.0, 0.0), |(n, d), ((s, f), dev)| {
            let x = s.max(*f);
            (n + x * dev, d + x * x)
        });
    report.fitted_constant = if den > 0.0 { num / den } else { 0.0 };
    report.reduction = report.deviation.windows(2).map(|w| w[0] / w[1]).collect();
    report.monotone = report.deviation.windows(2).all(|w| w[1] < w[0]);
    Ok(report)
}

/// Input `W(t) = Σ_k W_k(t) f_k` with `W_k(t) = Σ_m c_{k,m} sin(m π t / (2T))`,
/// so `W(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineInput {
    pub horizon: f64,
    pub modes: Vec<(ModeIndex, Vec<Complex64>)>,
}

#[derive(Debug)]
struct SineComponent {
    horizon: f64,
    coeffs: Vec<Complex64>,
}

impl Primitive for SineComponent {
    fn value(&self, t: f64) -> Complex64 {
        let base = std::f64::consts::PI * t / (2.0 * self.horizon);
        self.coeffs.iter().enumerate().map(|(m, c)| c * ((m + 1) as f64 * base).sin()).sum()
    }
    fn derivative(&self, t: f64) -> Complex64 {
        let w = std::f64::consts::PI / (2.0 * self.horizon);
        self.coeffs
            .iter()
            .enumerate()
            .map(|(m, c)| c * (m + 1) as f64 * w * ((m + 1) as f64 * w * t).cos())
            .sum()
    }
    fn rate_bound(&self) -> f64 {
        std::f64::consts::PI * self.coeffs.len() as f64 / (2.0 * self.horizon)
    }
}

impl SineInput {
    /// Random input on `modes` with `harmonics` sine terms, scaled to
    /// `W^{1,1}` norm `norm`.
    pub fn random(modes: &[ModeIndex], harmonics: usize, horizon: f64, norm: f64, s: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(ModeIndex, Vec<Complex64>)> = modes
            .iter()
            .map(|k| {
                let c = (0..harmonics)
                    .map(|m| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / (m + 1) as f64)
                    .collect();
                (k.clone(), c)
            })
            .collect();
        let mut w = SineInput { horizon, modes };
        let n = w.w11_norm(s);
        if n > 0.0 {
            w = w.scaled(norm / n);
        }
        w
    }

    pub fn scaled(&self, c: f64) -> Self {
        SineInput {
            horizon: self.horizon,
            modes: self.modes.iter().map(|(k, v)| (k.clone(), v.iter().map(|x| x * c).collect())).collect(),
        }
    }

    pub fn plus(&self, other: &SineInput) -> Self {
        let mut modes = self.modes.clone();
        for (k, v) in &other.modes {
            match modes.iter_mut().find(|(m, _)| m == k) {
                Some((_, cur)) => {
                    if cur.len() < v.len() {
                        cur.resize(v.len(), ZERO);
                    }
                    for (a, b) in cur.iter_mut().zip(v) {
                        *a += b;
                    }
                }
                None => modes.push((k.clone(), v.clone())),
            }
        }
        SineInput { horizon: self.horizon, modes }
    }

    pub fn minus(&self, other: &SineInput) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    fn components(&self) -> Vec<(ModeIndex, SineComponent)> {
        self.modes
            .iter()
            .map(|(k, c)| (k.clone(), SineComponent { horizon: self.horizon, coeffs: c.clone() }))
            .collect()
    }

    fn weighted_norm(&self, s: f64, t: f64, derivative: bool) -> f64 {
        self.components()
            .iter()
            .map(|(k, c)| {
                let w = (1.0 + k.norm_sq() as f64).powf(s);
                let v = if derivative { c.derivative(t) } else { c.value(t) };
                w * v.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn l1_norm(&self, s: f64) -> f64 {
        gauss_real(0.0, self.horizon, 64, |t| self.weighted_norm(s, t, false))
    }

    /// `∫ ‖W‖ + ∫ ‖∂_t W‖`.
    pub fn w11_norm(&self, s: f64) -> f64 {
        self.l1_norm(s) + gauss_real(0.0, self.horizon, 64, |t| self.weighted_norm(s, t, true))
    }

    /// Rotated-basis source `∂_t W`.
    pub fn source(&self) -> SourceTerm {
        let signals = self
            .components()
            .into_iter()
            .map(|(k, c)| (k, Signal::Derivative(Arc::new(c))))
            .collect();
        SourceTerm::new(SourceBasis::Rotated, signals)
    }

    /// `W(t)` as a state in the exponential basis.
    pub fn state_at(&self, space: ModeBox, s: f64, t: f64) -> Result<SpectralState> {
        let mut out = SpectralState::zeros(space, s);
        out.time = t;
        for (k, c) in self.components() {
            let v = c.value(t) * Complex64::from_polar(1.0, k.norm_sq() as f64 * t);
            let i = space.index_of(&k).ok_or_else(|| Error::NotExpressible(k.clone()))?;
            out.coeffs[i] += v;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzPair {
    pub seed: u64,
    pub norm_first: f64,
    pub norm_second: f64,
    /// `‖W₂ - W₁‖_{L¹}`.
    pub input_distance: f64,
    /// `sup_t ‖u*₂ - u*₁‖`.
    pub deviation: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub radius: f64,
    pub horizon: f64,
    pub dt: f64,
    pub pairs: Vec<LipschitzPair>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub max_over_median: f64,
    pub all_finite: bool,
}

/// `sup_t ‖u*₂(t) - u*₁(t)‖ / ‖W₂ - W₁‖_{L¹}` for one input pair.
pub fn endpoint_lipschitz_probe(
    w1: &SineInput,
    w2: &SineInput,
    radius: f64,
    u0: &SpectralState,
    dt: f64,
) -> Result<LipschitzPair> {
    let s = u0.s;
    let (n1, n2) = (w1.w11_norm(s), w2.w11_norm(s));
    for n in [n1, n2] {
        if n > radius * (1.0 + 1e-12) {
            return Err(Error::OutsideBall { norm: n, radius });
        }
    }
    let cfg = IntegratorConfig::new(dt, w1.horizon).with_stride(1);
    let star = |w: &SineInput| -> Result<Vec<SpectralState>> {
        let traj = integrate(u0, &w.source(), &cfg)?;
        traj.states
            .iter()
            .map(|u| {
                let mut iw = w.state_at(u.space, s, u.time)?;
                iw.scale(I);
                u.sub(&iw)
            })
            .collect()
    };
    let (a, b) = (star(w1)?, star(w2)?);
    let mut deviation: f64 = 0.0;
    for (x, y) in a.iter().zip(&b) {
        deviation = deviation.max(x.distance(y)?);
    }
    let input_distance = w2.minus(w1).l1_norm(s);
    let ratio = if input_distance > 0.0 { deviation / input_distance } else { 0.0 };
    Ok(LipschitzPair { seed: 0, norm_first: n1, norm_second: n2, input_distance, deviation, ratio })
}

/// `pairs` random input pairs in the `W^{1,1}` ball of radius `radius`.
pub fn lipschitz_study(
    u0: &SpectralState,
    modes: &[ModeIndex],
    radius: f64,
    horizon: f64,
    pairs: usize,
    dt: f64,
    seed: u64,
) -> Result<LipschitzReport> {
    let s = u0.s;
    let results: Vec<Result<LipschitzPair>> = (0..pairs as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(j));
            let n1 = radius * rng.gen_range(0.2..0.7);
            let nd = radius * rng.gen_range(0.02..0.25);
            let w1 = SineInput::random(modes, 3, horizon, n1, s, rng.gen());
            let d = SineInput::random(modes, 3, horizon, nd, s, rng.gen());
            let w2 = w1.plus(&d);
            let mut pair = endpoint_lipschitz_probe(&w1, &w2, radius, u0, dt)?;
            pair.seed = j;
            Ok(pair)
        })
        .collect();
    let pairs: Vec<LipschitzPair> = results.into_iter().collect::<Result<_>>()?;
    let mut ratios: Vec<f64> = pairs.iter().map(|p| p.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let median = if ratios.is_empty() {
        0.0
    } else if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };
    let max = ratios.last().copied().unwrap_or(0.0);
    Ok(LipschitzReport {
        radius,
        horizon,
        dt,
        all_finite: ratios.iter().all(|r| r.is_finite()),
        max_over_median: if median > 0.0 { max / median } else { f64::INFINITY },
        max_ratio: max,
        median_ratio: median,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn carrier_probe(eps: f64) -> PerturbationProbe {
        PerturbationProbe::new(
            vec![ProbeTerm {
                kind: ProbeKind::Constant,
                mode: [0, 0].into(),
                amplitude: Complex64::new(1.0, 0.0),
                rho0: 0.0,
                rho_rate: 0.0,
                carrier: 1.0,
            }],
            eps,
        )
    }

    fn flat(space: ModeBox) -> Vec<SpectralState> {
        let mut a = SpectralState::zeros(space, 1.1);
        let mut b = a.clone();
        a.time = 0.0;
        b.time = 1.0;
        vec![a, b]
    }

    #[test]
    fn pure_carrier_is_two_eps() {
        let space = ModeBox::new(2, 2);
        for eps in [0.1, 0.01] {
            let v = relaxation_seminorm(&carrier_probe(eps), &flat(space), 2048).unwrap();
            assert!((v / (2.0 * eps) - 1.0).abs() < 0.05, "eps = {eps}: {v}");
        }
    }

    #[test]
    fn zero_and_constant_probes() {
        let space = ModeBox::new(2, 2);
        assert_eq!(relaxation_seminorm(&PerturbationProbe::zero(), &flat(space), 64).unwrap(), 0.0);
        let mut p = carrier_probe(1.0);
        p.terms[0].carrier = 0.0;
        p.terms[0].amplitude = Complex64::new(0.0, 0.3);
        let v = relaxation_seminorm(&p, &flat(space), 64).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn grid_probe_matches_spectral_monomial() {
        let space = ModeBox::new(2, 3);
        let u = SpectralState::random_smooth(space, 1.1, 4, 0.2, 1.0);
        let p = PerturbationProbe::new(
            vec![ProbeTerm {
                kind: ProbeKind::Linear,
                mode: [1, 0].into(),
                amplitude: Complex64::new(1.0, 0.0),
                rho0: 0.0,
                rho_rate: 0.0,
                carrier: 0.0,
            }],
            1.0,
        );
        let phi = p.evaluate(0.0, &u);
        // u e^{ix_1} shifts coefficients by (1, 0)
        let k: ModeIndex = [0, 1].into();
        let shifted: ModeIndex = [1, 1].into();
        assert!((phi.get(&shifted).unwrap() - u.get(&k).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn identical_inputs_give_zero_deviation() {
        let space = ModeBox::new(2, 3);
        let u0 = SpectralState::random_smooth(space, 1.1, 2, 0.1, 1.5);
        let w = SineInput::random(&[[1, 0].into(), [0, 1].into()], 2, 1.0, 0.5, 1.1, 3);
        let pair = endpoint_lipschitz_probe(&w, &w, 1.0, &u0, 1e-2).unwrap();
        assert_eq!(pair.deviation, 0.0);
        assert_eq!(pair.ratio, 0.0);
        assert!(matches!(
            endpoint_lipschitz_probe(&w.scaled(3.0), &w, 1.0, &u0, 1e-2),
            Err(Error::OutsideBall { .. })
        ));
    }

    #[test]
    fn exp_moment_matches_quadrature() {
        for (w, h) in [(0.0f64, 0.3), (1e-5, 0.2), (7.0, 0.4), (300.0, 0.01)] {
            let q = crate::signal::gauss(0.0, h, w.abs().max(1.0), |s| Complex64::from_polar(s, w * s));
            assert!((exp_moment(w, h) - q).norm() < 1e-11, "{w} {h}");
        }
    }
}
