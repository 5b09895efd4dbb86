//! Fast-oscillating control synthesis realizing a control on a new mode
//! `2r - s` through controls on `r` and `s` alone.
//!
//! With carriers `v_r = e^{i(t/ε + ρ)} v̌_r` and `v_s = i e^{2it/ε} v̌_s`,
//! the substitution `u = u* e^{2iΥ} + i(v_r f_r + v_s f_s)` turns the cubic
//! term into fast oscillations plus two resonant pieces: a drift
//! `2u*(v̌_r² + v̌_s²)` absorbed by the phase `Υ`, and the monomial
//! `v̌_r² v̌_s e^{2i(ρ - |r-s|² t - Υ)} f_{2r-s}`, which equals the target
//! `w_{2r-s}` once `ρ = Arg(w)/2 + |r-s|² t + Υ` and `v̌_r² v̌_s = |w|`.
//! The isoperimetric condition `Υ(T) = πN` makes the phase change
//! invisible at the end point.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{SourceBasis, SourceTerm};
use crate::lattice::{ExtensionChain, ModeIndex, ModeSet};
use crate::signal::{wrap_angle, Phase, PhaseFn, Primitive, Signal};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss-Legendre rule, exact for polynomials of degree 9.
fn gl5<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GL5_X.iter().zip(GL5_W).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Boot ramp `h(x) = 3x² - 2x³`: `h(0) = 0`, `h(1) = 1`, `h'(0) = h'(1) = 0`.
fn ramp(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}

fn ramp_rate(x: f64) -> f64 {
    6.0 * x * (1.0 - x)
}

/// Boot bump `q(x) = 16x²(1-x)²`, vanishing with its slope at both ends.
fn bump(x: f64) -> f64 {
    16.0 * x * x * (1.0 - x) * (1.0 - x)
}

fn bump_rate(x: f64) -> f64 {
    32.0 * x * (1.0 - x) * (1.0 - 2.0 * x)
}

/// Monotone piecewise-cubic Hermite interpolant with zero end slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pchip {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Self {
        assert!(knots.len() >= 2 && knots.len() == values.len());
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (values[i + 1] - values[i]) / h[i]).collect();
        let mut slopes = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                slopes[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Pchip { knots, values, slopes }
    }

    pub fn constant(t0: f64, t1: f64, v: f64) -> Self {
        Pchip { knots: vec![t0, t1], values: vec![v, v], slopes: vec![0.0, 0.0] }
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.knots.len();
        self.knots.partition_point(|k| *k <= t).clamp(1, n - 1) - 1
    }

    pub fn value(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let h = t1 - t0;
        let x = ((t - t0) / h).clamp(0.0, 1.0);
        let (y0, y1, d0, d1) = (self.values[i], self.values[i + 1], self.slopes[i] * h, self.slopes[i + 1] * h);
        let x2 = x * x;
        let x3 = x2 * x;
        (2.0 * x3 - 3.0 * x2 + 1.0) * y0 + (x3 - 2.0 * x2 + x) * d0 + (-2.0 * x3 + 3.0 * x2) * y1 + (x3 - x2) * d1
    }

    pub fn rate(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let h = t1 - t0;
        let x = ((t - t0) / h).clamp(0.0, 1.0);
        let (y0, y1, d0, d1) = (self.values[i], self.values[i + 1], self.slopes[i] * h, self.slopes[i + 1] * h);
        let x2 = x * x;
        ((6.0 * x2 - 6.0 * x) * y0 + (3.0 * x2 - 4.0 * x + 1.0) * d0 + (-6.0 * x2 + 6.0 * x) * y1 + (3.0 * x2 - 2.0 * x) * d1)
            / h
    }

    pub fn max_abs_rate(&self) -> f64 {
        let mut m: f64 = 0.0;
        for w in self.knots.windows(2) {
            for j in 0..=4 {
                let t = w[0] + (w[1] - w[0]) * j as f64 / 4.0;
                m = m.max(self.rate(t).abs());
            }
        }
        m
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Smoothed modulus and unwrapped argument of a target signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEnvelope {
    pub modulus: Pchip,
    pub argument: Pchip,
    /// Estimated `∫ | |w| - modulus |`.
    pub smoothing_error: f64,
}

impl TargetEnvelope {
    /// Samples box averages of `w` on `knots` uniform knots over `[0, T]` and
    /// interpolates modulus and argument. Below `1e-8 max|w|` the argument
    /// holds its last value.
    pub fn from_signal(w: &Signal, horizon: f64, knots: usize) -> Self {
        if let Some(c) = constant_value(w) {
            return TargetEnvelope {
                modulus: Pchip::constant(0.0, horizon, c.norm()),
                argument: Pchip::constant(0.0, horizon, if c.norm() > 0.0 { c.arg() } else { 0.0 }),
                smoothing_error: 0.0,
            };
        }
        let n = knots.max(3);
        let h = horizon / (n - 1) as f64;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let samples: Vec<Complex64> = ts
            .iter()
            .map(|&t| {
                let a = (t - 0.5 * h).max(0.0);
                let b = (t + 0.5 * h).min(horizon);
                w.average(a, b)
            })
            .collect();
        let max = samples.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let eta = 1e-8 * max;
        let mut args = vec![0.0; n];
        let first_valid = samples.iter().position(|c| c.norm() > eta);
        if let Some(f) = first_valid {
            let mut last = samples[f].arg();
            for i in 0..n {
                if i > f && samples[i].norm() > eta {
                    last += wrap_angle(samples[i].arg() - last);
                }
                args[i] = if i < f { samples[f].arg() } else { last };
            }
        }
        let modulus = Pchip::new(ts.clone(), samples.iter().map(|c| c.norm()).collect());
        let argument = Pchip::new(ts, args);
        // Compare against finer box averages at cell midpoints.
        let fine = 4 * (n - 1);
        let fh = horizon / fine as f64;
        let smoothing_error = (0..fine)
            .map(|j| {
                let a = j as f64 * fh;
                (w.average(a, a + fh).norm() - modulus.value(a + 0.5 * fh)).abs() * fh
            })
            .sum();
        TargetEnvelope { modulus, argument, smoothing_error }
    }

    pub fn value(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.modulus.value(t), self.argument.value(t))
    }
}

fn constant_value(w: &Signal) -> Option<Complex64> {
    match w {
        Signal::Zero => Some(Complex64::new(0.0, 0.0)),
        Signal::Constant(c) => Some(*c),
        _ => None,
    }
}

/// How the isoperimetric total `∫(v̌_r² + v̌_s²) = πN` is met.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BootBalance {
    /// Fix the `v̌_r²` plateau at `π/(T - ε²)` and add a bump to `v̌_s` on
    /// the boot intervals carrying the missing mass.
    BootBump,
    /// Pick the `v̌_r²` plateau level `c` so that the total is exactly `πN`
    /// with `v̌_s = |w|/c` on the plateau; no bump. Keeps `v̌_s` bounded
    /// independently of `ε`.
    #[default]
    PlateauRescale,
}

/// `v̌_r` with `v̌_r²` piecewise linear: ramps on `[0, ℓ]` and `[T-ℓ, T]`,
/// constant `level` in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VrProfile {
    pub level: f64,
    pub boot: f64,
    pub horizon: f64,
}

impl VrProfile {
    fn shape(&self, t: f64) -> f64 {
        let (l, h) = (self.boot, self.horizon);
        if t <= 0.0 || t >= h {
            0.0
        } else if t < l {
            t / l
        } else if t > h - l {
            (h - t) / l
        } else {
            1.0
        }
    }

    fn shape_rate(&self, t: f64) -> f64 {
        let (l, h) = (self.boot, self.horizon);
        if t <= 0.0 || t >= h {
            0.0
        } else if t < l {
            1.0 / l
        } else if t > h - l {
            -1.0 / l
        } else {
            0.0
        }
    }

    pub fn squared(&self, t: f64) -> f64 {
        self.level * self.shape(t)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.squared(t).sqrt()
    }

    /// Derivative of `v̌_r`; unbounded as `t -> 0+` and `t -> T-`, where 0
    /// is returned.
    pub fn rate(&self, t: f64) -> f64 {
        let v = self.value(t);
        if v == 0.0 {
            0.0
        } else {
            self.level * self.shape_rate(t) / (2.0 * v)
        }
    }

    /// `∫_0^T v̌_r² = level (T - ℓ)`.
    pub fn total(&self) -> f64 {
        self.level * (self.horizon - self.boot)
    }
}

/// Profile with plateau `level = π/(T - ε²)`, so `∫_0^T v̌_r² = π`.
pub fn build_vr(horizon: f64, eps: f64) -> Result<VrProfile> {
    let boot = eps * eps;
    check_boot(horizon, boot)?;
    Ok(VrProfile { level: PI / (horizon - boot), boot, horizon })
}

fn check_boot(horizon: f64, boot: f64) -> Result<()> {
    if !(eps_ok(boot)) || boot >= 0.5 * horizon {
        return Err(Error::InvalidArgument(format!(
            "boot length eps^2 = {boot} must be positive and below T/2 = {}",
            0.5 * horizon
        )));
    }
    Ok(())
}

fn eps_ok(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// `v̌_s`: `|w̌|/c` on the plateau, `e h(x) + α q(x)` on each boot interval
/// with `x` the distance to the nearer end in units of `ℓ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VsProfile {
    /// Divisor `c`, the `v̌_r²` plateau level.
    pub divisor: f64,
    pub envelope: Pchip,
    pub boot: f64,
    pub horizon: f64,
    pub edge_start: f64,
    pub edge_end: f64,
    pub bump: f64,
}

impl VsProfile {
    fn new(divisor: f64, envelope: Pchip, boot: f64, horizon: f64, bump: f64) -> Self {
        let edge_start = envelope.value(boot) / divisor;
        let edge_end = envelope.value(horizon - boot) / divisor;
        VsProfile { divisor, envelope, boot, horizon, edge_start, edge_end, bump }
    }

    pub fn value(&self, t: f64) -> f64 {
        let (l, h) = (self.boot, self.horizon);
        if t <= 0.0 || t >= h {
            0.0
        } else if t < l {
            let x = t / l;
            self.edge_start * ramp(x) + self.bump * bump(x)
        } else if t > h - l {
            let x = (h - t) / l;
            self.edge_end * ramp(x) + self.bump * bump(x)
        } else {
            self.envelope.value(t) / self.divisor
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        let (l, h) = (self.boot, self.horizon);
        if t <= 0.0 || t >= h {
            0.0
        } else if t < l {
            let x = t / l;
            (self.edge_start * ramp_rate(x) + self.bump * bump_rate(x)) / l
        } else if t > h - l {
            let x = (h - t) / l;
            -(self.edge_end * ramp_rate(x) + self.bump * bump_rate(x)) / l
        } else {
            self.envelope.rate(t) / self.divisor
        }
    }

    /// Breakpoints between which `v̌_s` is a single polynomial.
    fn breakpoints(&self) -> Vec<f64> {
        let (l, h) = (self.boot, self.horizon);
        let mut b = vec![0.0, l];
        b.extend(self.envelope.knots.iter().cloned().filter(|k| *k > l && *k < h - l));
        b.push(h - l);
        b.push(h);
        b
    }
}

/// `∫_0^1 h²`, `∫_0^1 h q`, `∫_0^1 q²`.
fn boot_integrals() -> (f64, f64, f64) {
    (
        gl5(0.0, 1.0, |x| ramp(x).powi(2)),
        gl5(0.0, 1.0, |x| ramp(x) * bump(x)),
        gl5(0.0, 1.0, |x| bump(x).powi(2)),
    )
}

/// `∫` of the squared envelope over the plateau, exact for the cubic pieces.
fn plateau_mass(env: &Pchip, boot: f64, horizon: f64) -> f64 {
    let mut b = vec![boot];
    b.extend(env.knots.iter().cloned().filter(|k| *k > boot && *k < horizon - boot));
    b.push(horizon - boot);
    b.windows(2).map(|w| gl5(w[0], w[1], |t| env.value(t).powi(2))).sum()
}

/// Boot-bump construction on top of a given `v̌_r`: plateau `v̌_s = |w̌|/level`,
/// `N = floor(A/π) + 1` with `A` the plateau mass of `v̌_s²`, and a bump on
/// the boot intervals bringing `∫ v̌_s²` to exactly `πN`. Returns the profile
/// and `N`; the bundle total is then `π(N + 1)`.
pub fn build_vs(env: &TargetEnvelope, vr: &VrProfile, min_n: u32) -> Result<(VsProfile, u32)> {
    let (l, h) = (vr.boot, vr.horizon);
    check_boot(h, l)?;
    let c = vr.level;
    let a = plateau_mass(&env.modulus, l, h) / (c * c);
    let probe = VsProfile::new(c, env.modulus.clone(), l, h, 0.0);
    let (e0, e1) = (probe.edge_start, probe.edge_end);
    let (ihh, ihq, iqq) = boot_integrals();
    let ramp_mass = l * (e0 * e0 + e1 * e1) * ihh;
    let mut n = ((a / PI).floor() as u32 + 1).max(min_n.max(1));
    for _ in 0..64 {
        let need = PI * n as f64 - a;
        let c0 = ramp_mass - need;
        if c0 <= 0.0 {
            // 2ℓ I_qq α² + 2ℓ (e0 + e1) I_hq α + c0 = 0, positive root.
            let qa = 2.0 * l * iqq;
            let qb = 2.0 * l * (e0 + e1) * ihq;
            let disc = qb * qb - 4.0 * qa * c0;
            let alpha = if c0 == 0.0 { 0.0 } else { -2.0 * c0 / (qb + disc.sqrt()) };
            if !alpha.is_finite() || alpha < 0.0 {
                break;
            }
            return Ok((VsProfile { bump: alpha, ..probe }, n));
        }
        n += 1;
    }
    Err(Error::BootAllocation(format!(
        "no bump amplitude balances the boot budget at eps^2 = {l}; decrease eps"
    )))
}

/// Plateau-rescale balance: finds `c` on the branch where `c (T - ℓ) + B/c²`
/// increases, with `B` the mass of `|w̌|²` carried by `v̌_s c`, so that the
/// total equals `πN` for the least admissible integer `N ≥ min_n`.
pub fn balance_plateau(env: &TargetEnvelope, horizon: f64, eps: f64, min_n: u32) -> Result<(VrProfile, VsProfile, u32)> {
    let l = eps * eps;
    check_boot(horizon, l)?;
    let len = horizon - l;
    let unit = VsProfile::new(1.0, env.modulus.clone(), l, horizon, 0.0);
    let (ihh, _, _) = boot_integrals();
    let b = plateau_mass(&env.modulus, l, horizon)
        + l * ihh * (unit.edge_start.powi(2) + unit.edge_end.powi(2));
    let total = |c: f64| c * len + if b > 0.0 { b / (c * c) } else { 0.0 };
    let (c_min, f_min) = if b > 0.0 {
        let c = (2.0 * b / len).cbrt();
        (c, total(c))
    } else {
        (0.0, 0.0)
    };
    let n = ((f_min / PI).ceil() as u32).max(min_n.max(1));
    let target = PI * n as f64;
    let (mut lo, mut hi) = (c_min, target / len);
    if total(hi) < target || total(lo) > target * (1.0 + 1e-14) {
        return Err(Error::BootAllocation("plateau level root is not bracketed".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    // Newton polish on the increasing branch.
    let mut c = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = len - if b > 0.0 { 2.0 * b / (c * c * c) } else { 0.0 };
        if d > 0.0 {
            let next = c - (total(c) - target) / d;
            if next >= c_min {
                c = next;
            }
        }
    }
    let vr = VrProfile { level: c, boot: l, horizon };
    let vs = VsProfile::new(c, env.modulus.clone(), l, horizon, 0.0);
    Ok((vr, vs, n))
}

/// Synthesis data for one extension `new = 2r - s`.
#[derive(Debug, Serialize)]
pub struct OscillatorBundle {
    pub r: ModeIndex,
    pub s: ModeIndex,
    pub new: ModeIndex,
    pub eps: f64,
    pub horizon: f64,
    pub balance: BootBalance,
    pub vr: VrProfile,
    pub vs: VsProfile,
    pub envelope: TargetEnvelope,
    /// `Υ(T) = π n_periods`.
    pub n_periods: u32,
    /// `|r - s|²`.
    pub detuning: f64,
    breaks: Vec<f64>,
    cumulative: Vec<f64>,
    rho_rate_bound: f64,
}

impl OscillatorBundle {
    fn new(
        r: ModeIndex,
        s: ModeIndex,
        eps: f64,
        horizon: f64,
        balance: BootBalance,
        vr: VrProfile,
        vs: VsProfile,
        envelope: TargetEnvelope,
        n_periods: u32,
    ) -> Self {
        let new = r.extend_with(&s);
        let detuning = r.sub(&s).norm_sq() as f64;
        let breaks = vs.breakpoints();
        let mut cumulative = vec![0.0];
        for w in breaks.windows(2) {
            let seg = gl5(w[0], w[1], |t| vr.squared(t) + vs.value(t).powi(2));
            cumulative.push(cumulative.last().unwrap() + seg);
        }
        let mut sup_rate: f64 = 0.0;
        for w in breaks.windows(2) {
            for j in 0..=8 {
                let t = w[0] + (w[1] - w[0]) * j as f64 / 8.0;
                sup_rate = sup_rate.max(vr.squared(t) + vs.value(t).powi(2));
            }
        }
        let rho_rate_bound = 0.5 * envelope.argument.max_abs_rate() + detuning + sup_rate;
        OscillatorBundle {
            r,
            s,
            new,
            eps,
            horizon,
            balance,
            vr,
            vs,
            envelope,
            n_periods,
            detuning,
            breaks,
            cumulative,
            rho_rate_bound,
        }
    }

    pub fn vr(&self, t: f64) -> f64 {
        self.vr.value(t)
    }

    pub fn vs(&self, t: f64) -> f64 {
        self.vs.value(t)
    }

    /// `Υ(t) = ∫_0^t (v̌_r² + v̌_s²)`, exact on the polynomial pieces.
    pub fn upsilon(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon);
        let n = self.breaks.len();
        let i = self.breaks.partition_point(|b| *b <= t).clamp(1, n - 1) - 1;
        self.cumulative[i] + gl5(self.breaks[i], t, |x| self.vr.squared(x) + self.vs.value(x).powi(2))
    }

    pub fn upsilon_rate(&self, t: f64) -> f64 {
        self.vr.squared(t) + self.vs.value(t).powi(2)
    }

    pub fn upsilon_total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// `ρ(t) = Arg(w̌)/2 + |r-s|² t + Υ(t)`.
    pub fn rho(&self, t: f64) -> f64 {
        0.5 * self.envelope.argument.value(t) + self.detuning * t + self.upsilon(t)
    }

    pub fn rho_rate(&self, t: f64) -> f64 {
        0.5 * self.envelope.argument.rate(t) + self.detuning + self.upsilon_rate(t)
    }

    pub fn rho_rate_bound(&self) -> f64 {
        self.rho_rate_bound
    }

    /// `v_r(t) = e^{i(t/ε + ρ)} v̌_r`.
    pub fn carrier_r(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.vr(t), t / self.eps + self.rho(t))
    }

    /// `v_s(t) = i e^{2it/ε} v̌_s`. The extra quarter turn makes the
    /// resonant monomial `i v_r² conj(v_s) ...` come out as `+w` with `ρ`
    /// as above.
    pub fn carrier_s(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.vs(t), 2.0 * t / self.eps + FRAC_PI_2)
    }

    pub fn carrier_r_rate(&self, t: f64) -> Complex64 {
        let ph = Complex64::from_polar(1.0, t / self.eps + self.rho(t));
        ph * (I * (1.0 / self.eps + self.rho_rate(t)) * self.vr(t) + self.vr.rate(t))
    }

    pub fn carrier_s_rate(&self, t: f64) -> Complex64 {
        let ph = Complex64::from_polar(1.0, 2.0 * t / self.eps + FRAC_PI_2);
        ph * (I * (2.0 / self.eps) * self.vs(t) + self.vs.rate(t))
    }

    /// `v̌_r² v̌_s e^{2i(ρ - |r-s|² t - Υ)}`.
    pub fn resonant_product(&self, t: f64) -> Complex64 {
        let phase = 2.0 * (self.rho(t) - self.detuning * t - self.upsilon(t));
        Complex64::from_polar(self.vr.squared(t) * self.vs(t), phase)
    }

    /// Coefficient of `f_{2r-s}` in `i |V|² V`, `V = v_r f_r + v_s f_s`, after
    /// the phase substitution: `i v_r² conj(v_s) e^{-2i(|r-s|² t + Υ)}`.
    pub fn resonant_monomial(&self, t: f64) -> Complex64 {
        let vr = self.carrier_r(t);
        let vs = self.carrier_s(t);
        I * vr * vr * vs.conj() * Complex64::from_polar(1.0, -2.0 * (self.detuning * t + self.upsilon(t)))
    }

    /// `∫_0^T |v̌_r² v̌_s - |w̌||`, against the smoothed target.
    pub fn envelope_residual(&self) -> f64 {
        let f = |t: f64| (self.vr.squared(t) * self.vs(t) - self.envelope.modulus.value(t)).abs();
        let mut acc = 0.0;
        for w in self.breaks.windows(2) {
            let pieces = if w[1] - w[0] <= self.vr.boot * (1.0 + 1e-12) { 64 } else { 4 };
            let step = (w[1] - w[0]) / pieces as f64;
            for p in 0..pieces {
                let a = w[0] + p as f64 * step;
                acc += gl5(a, a + step, f);
            }
        }
        acc
    }

    /// Residual bound `∫|D|`: envelope residual plus smoothing error.
    pub fn residual(&self) -> f64 {
        self.envelope_residual() + self.envelope.smoothing_error
    }

    pub fn descriptor(&self) -> BundleDescriptor {
        BundleDescriptor {
            r: self.r.clone(),
            s: self.s.clone(),
            new: self.new.clone(),
            eps: self.eps,
            balance: self.balance,
            boot: self.vr.boot,
            vr_squared_plateau: self.vr.level,
            vs_plateau_start: self.vs.edge_start,
            vs_plateau_end: self.vs.edge_end,
            vs_bump: self.vs.bump,
            n_periods: self.n_periods,
            upsilon_total: self.upsilon_total(),
            isoperimetric_defect: self.upsilon_total() - PI * self.n_periods as f64,
            residual: self.residual(),
            large_phase_flag: self.upsilon_total() > 10.0 * PI,
        }
    }
}

impl PhaseFn for OscillatorBundle {
    fn phase(&self, t: f64) -> f64 {
        self.upsilon(t)
    }
    fn rate(&self, t: f64) -> f64 {
        self.upsilon_rate(t)
    }
    fn rate_bound(&self) -> f64 {
        self.rho_rate_bound
    }
}

#[derive(Debug)]
struct CarrierR(Arc<OscillatorBundle>);

impl Primitive for CarrierR {
    fn value(&self, t: f64) -> Complex64 {
        self.0.carrier_r(t)
    }
    fn derivative(&self, t: f64) -> Complex64 {
        self.0.carrier_r_rate(t)
    }
    fn rate_bound(&self) -> f64 {
        1.0 / self.0.eps + self.0.rho_rate_bound
    }
}

#[derive(Debug)]
struct CarrierS(Arc<OscillatorBundle>);

impl Primitive for CarrierS {
    fn value(&self, t: f64) -> Complex64 {
        self.0.carrier_s(t)
    }
    fn derivative(&self, t: f64) -> Complex64 {
        self.0.carrier_s_rate(t)
    }
    fn rate_bound(&self) -> f64 {
        2.0 / self.0.eps
    }
}

/// Summary written next to synthesized programs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleDescriptor {
    pub r: ModeIndex,
    pub s: ModeIndex,
    pub new: ModeIndex,
    pub eps: f64,
    pub balance: BootBalance,
    pub boot: f64,
    pub vr_squared_plateau: f64,
    pub vs_plateau_start: f64,
    pub vs_plateau_end: f64,
    pub vs_bump: f64,
    pub n_periods: u32,
    pub upsilon_total: f64,
    pub isoperimetric_defect: f64,
    pub residual: f64,
    /// Set when `Υ(T) > 10π`.
    pub large_phase_flag: bool,
}

/// Synthesis parameters shared by every step of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub eps: f64,
    pub horizon: f64,
    #[serde(default)]
    pub balance: BootBalance,
    /// Ratio between carrier base frequencies of consecutive chain steps.
    #[serde(default = "default_ratio")]
    pub carrier_ratio: f64,
    /// Envelope knots; derived from the target's oscillation rate when absent.
    #[serde(default)]
    pub knots: Option<usize>,
    /// Lower bound on `N`, to share one `N` across a target family.
    #[serde(default)]
    pub min_periods: u32,
}

fn default_ratio() -> f64 {
    5.0
}

impl SynthesisOptions {
    pub fn new(eps: f64, horizon: f64) -> Self {
        SynthesisOptions {
            eps,
            horizon,
            balance: BootBalance::PlateauRescale,
            carrier_ratio: default_ratio(),
            knots: None,
            min_periods: 1,
        }
    }

    pub fn with_balance(mut self, balance: BootBalance) -> Self {
        self.balance = balance;
        self
    }

    fn knots_for(&self, w: &Signal) -> usize {
        self.knots.unwrap_or_else(|| {
            let cycles = self.horizon * w.rate_bound() / (2.0 * PI);
            ((32.0 * cycles).ceil() as usize + 33).min(200_001)
        })
    }
}

/// Builds the bundle realizing target signal `w` on `2r - s`.
pub fn build_bundle(r: &ModeIndex, s: &ModeIndex, w: &Signal, eps: f64, opts: &SynthesisOptions) -> Result<OscillatorBundle> {
    if !eps_ok(eps) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let horizon = opts.horizon;
    let env = TargetEnvelope::from_signal(w, horizon, opts.knots_for(w));
    let (vr, vs, n) = match opts.balance {
        BootBalance::BootBump => {
            let vr = build_vr(horizon, eps)?;
            let (vs, n) = build_vs(&env, &vr, opts.min_periods.saturating_sub(1))?;
            (vr, vs, n + 1)
        }
        BootBalance::PlateauRescale => balance_plateau(&env, horizon, eps, opts.min_periods)?,
    };
    Ok(OscillatorBundle::new(r.clone(), s.clone(), eps, horizon, opts.balance, vr, vs, env, n))
}

/// Control signals per mode in the rotated basis `f_k`.
#[derive(Clone, Debug)]
pub struct ControlProgram {
    pub horizon: f64,
    pub modes: BTreeMap<ModeIndex, Signal>,
    /// Smallest carrier parameter present, if any.
    pub carrier_eps: Option<f64>,
}

impl ControlProgram {
    pub fn new(horizon: f64, modes: BTreeMap<ModeIndex, Signal>) -> Self {
        ControlProgram { horizon, modes, carrier_eps: None }
    }

    pub fn zero(horizon: f64) -> Self {
        ControlProgram::new(horizon, BTreeMap::new())
    }

    pub fn support(&self, dim: usize) -> Result<ModeSet> {
        ModeSet::from_modes(dim, self.modes.iter().filter(|(_, s)| !s.is_zero()).map(|(k, _)| k.clone()))
    }

    pub fn to_source(&self) -> SourceTerm {
        let signals = self.modes.iter().map(|(k, s)| (k.clone(), s.clone())).collect();
        let src = SourceTerm::new(SourceBasis::Rotated, signals);
        match self.carrier_eps {
            Some(e) => src.with_carrier_eps(e),
            None => src,
        }
    }

    /// Interval averages on `n` uniform cells per mode.
    pub fn sample(&self, n: usize) -> BTreeMap<ModeIndex, crate::signal::Sampled> {
        self.modes.iter().map(|(k, s)| (k.clone(), s.sample(self.horizon, n))).collect()
    }
}

/// Carrier frequency assigned to one chain step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAllocation {
    pub step: usize,
    pub new: ModeIndex,
    pub eps: f64,
    /// `1/ε_j`, the `v_r` carrier; `v_s` runs at twice this.
    pub base_frequency: f64,
}

#[derive(Debug)]
pub struct SynthesisResult {
    pub program: ControlProgram,
    /// Per-step residual bounds, in chain order.
    pub residuals: Vec<f64>,
    /// Bundles in chain order.
    pub bundles: Vec<Arc<OscillatorBundle>>,
    pub frequencies: Vec<FrequencyAllocation>,
    /// [`cross_step_gap`] of the allocation; `None` for a single step.
    pub frequency_gap: Option<f64>,
}

/// Target signals per mode in the rotated basis.
pub type TargetFamily = BTreeMap<ModeIndex, Signal>;

/// One extension: replaces the component on `2r - s` by carriers on `r`
/// and `s` and multiplies the remaining components by `e^{2iΥ}`.
fn fold_step(family: &mut TargetFamily, bundle: Arc<OscillatorBundle>) {
    let phase = Phase::Scaled { factor: 2.0, phase: bundle.clone() };
    let mut next = TargetFamily::new();
    for (k, sig) in std::mem::take(family) {
        if k == bundle.new || sig.is_zero() {
            continue;
        }
        next.insert(k, sig.modulated(phase.clone()));
    }
    let cr = Signal::Derivative(Arc::new(CarrierR(bundle.clone())));
    let cs = Signal::Derivative(Arc::new(CarrierS(bundle.clone())));
    for (k, c) in [(bundle.r.clone(), cr), (bundle.s.clone(), cs)] {
        let cur = next.remove(&k).unwrap_or_default();
        next.insert(k, cur.plus(c));
    }
    *family = next;
}

/// Single extension `2r - s` from the controlled set `base`.
pub fn assemble_program(bundle: Arc<OscillatorBundle>, family: &TargetFamily, base: &ModeSet) -> Result<SynthesisResult> {
    for k in [&bundle.r, &bundle.s] {
        if !base.contains(k) {
            return Err(Error::ModeNotInSet(k.clone()));
        }
    }
    for k in family.keys() {
        if !base.contains(k) && *k != bundle.new {
            return Err(Error::NotExpressible(k.clone()));
        }
    }
    let mut fam = family.clone();
    fold_step(&mut fam, bundle.clone());
    let mut program = ControlProgram::new(bundle.horizon, fam);
    program.carrier_eps = Some(bundle.eps);
    Ok(SynthesisResult {
        program,
        residuals: vec![bundle.residual()],
        frequencies: vec![FrequencyAllocation {
            step: 1,
            new: bundle.new.clone(),
            eps: bundle.eps,
            base_frequency: 1.0 / bundle.eps,
        }],
        bundles: vec![bundle],
        frequency_gap: None,
    })
}

/// Smallest `|x + y - z|` and `|x - z|` over carrier base frequencies
/// `{1, 2} ratio^j`, `j < steps`, for combinations touching at least two
/// steps; in units of the slowest `1/ε`. Zero means a cubic monomial mixing
/// carriers of different steps is resonant. `ratio = 3` gives `1 + 2 - 3 = 0`.
pub fn cross_step_gap(ratio: f64, steps: usize) -> f64 {
    let freqs: Vec<(usize, f64)> = (0..steps)
        .flat_map(|j| {
            let f = ratio.powi(j as i32);
            [(j, f), (j, 2.0 * f)]
        })
        .collect();
    let mut gap = f64::INFINITY;
    for (i, &(sx, x)) in freqs.iter().enumerate() {
        for (k, &(sz, z)) in freqs.iter().enumerate() {
            if i != k && sx != sz {
                gap = gap.min((x - z).abs());
            }
            for &(sy, y) in &freqs {
                let mixed = sx != sy || sx != sz;
                if mixed && i != k && (y - z).abs() > 0.0 {
                    gap = gap.min((x + y - z).abs());
                }
            }
        }
    }
    gap
}

/// Folds the extensions in reverse order. Step `j` of `L` (1-based, chain
/// order) uses `ε_j = ε / ratio^{L-j}`: the step acting directly on the
/// base set oscillates fastest, since its targets contain the carriers of
/// all later steps.
pub fn synthesize_chain(chain: &ExtensionChain, family: &TargetFamily, opts: &SynthesisOptions) -> Result<SynthesisResult> {
    let sets = chain.replay()?;
    let final_set = sets.last().expect("replay returns the base");
    for k in family.keys() {
        if !final_set.contains(k) {
            return Err(Error::NotExpressible(k.clone()));
        }
    }
    if opts.carrier_ratio < 3.0 {
        return Err(Error::InvalidArgument("carrier_ratio must be at least 3".into()));
    }
    let len = chain.len();
    let frequency_gap = (len > 1).then(|| cross_step_gap(opts.carrier_ratio, len));
    if let Some(g) = frequency_gap.filter(|g| *g < 0.25) {
        return Err(Error::InvalidArgument(format!(
            "carrier_ratio {} puts carriers of different steps within {g} of a resonance",
            opts.carrier_ratio
        )));
    }
    let mut fam = family.clone();
    let mut bundles = Vec::with_capacity(len);
    for (j, step) in chain.steps.iter().enumerate().rev() {
        let eps_j = opts.eps / opts.carrier_ratio.powi((len - 1 - j) as i32);
        let w = fam.get(&step.new).cloned().unwrap_or_default();
        let bundle = Arc::new(build_bundle(&step.r, &step.s, &w, eps_j, opts)?);
        fold_step(&mut fam, bundle.clone());
        bundles.push(bundle);
    }
    bundles.reverse();
    for k in fam.keys() {
        if !chain.base.contains(k) {
            return Err(Error::NotExpressible(k.clone()));
        }
    }
    let frequencies = bundles
        .iter()
        .enumerate()
        .map(|(j, b)| FrequencyAllocation { step: j + 1, new: b.new.clone(), eps: b.eps, base_frequency: 1.0 / b.eps })
        .collect();
    let mut program = ControlProgram::new(opts.horizon, fam);
    program.carrier_eps = bundles.iter().map(|b| b.eps).reduce(f64::min);
    Ok(SynthesisResult {
        residuals: bundles.iter().map(|b| b.residual()).collect(),
        program,
        bundles,
        frequencies,
        frequency_gap,
    })
}

/// Factor of a cubic monomial `x y conj(z)` under the carrier substitution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Factor {
    /// Slow state `u*`.
    State,
    /// `v_r`, carrier `e^{it/ε}`.
    Vr,
    /// `v_s`, carrier `e^{2it/ε}`.
    Vs,
}

impl Factor {
    fn beta(self) -> i32 {
        match self {
            Factor::State => 0,
            Factor::Vr => 1,
            Factor::Vs => 2,
        }
    }
}

/// A monomial `x y conj(z)` of `|u* + iV|²(u* + iV)` and its fast frequency
/// `β/ε`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MonomialClass {
    pub unconjugated: (Factor, Factor),
    pub conjugated: Factor,
    pub beta: i32,
}

impl MonomialClass {
    pub fn is_resonant(&self) -> bool {
        self.beta == 0
    }
}

/// Enumerates the distinct monomials of the cubic term with their `β`.
pub fn classify_cubic_monomials() -> Vec<MonomialClass> {
    let all = [Factor::State, Factor::Vr, Factor::Vs];
    let mut out = Vec::new();
    for (i, x) in all.iter().enumerate() {
        for y in &all[i..] {
            for z in &all {
                out.push(MonomialClass {
                    unconjugated: (*x, *y),
                    conjugated: *z,
                    beta: x.beta() + y.beta() - z.beta(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(eps: f64) -> SynthesisOptions {
        SynthesisOptions::new(eps, 1.0)
    }

    #[test]
    fn vr_profile_spec_values() {
        let vr = build_vr(1.0, 0.1).unwrap();
        assert!((vr.level - PI / 0.99).abs() < 1e-15);
        assert!((vr.total() - PI).abs() < 1e-14);
        assert_eq!(vr.value(0.0), 0.0);
        assert_eq!(vr.value(1.0), 0.0);
        assert!(vr.level <= 2.0 * PI);
        assert!(build_vr(1.0, 0.8).is_err());
    }

    #[test]
    fn boot_bump_constant_target() {
        let env = TargetEnvelope::from_signal(&Signal::constant(Complex64::new(0.5, 0.0)), 1.0, 33);
        let vr = build_vr(1.0, 0.1).unwrap();
        let (vs, n) = build_vs(&env, &vr, 0).unwrap();
        assert_eq!(n, 1);
        assert!((vs.value(0.5) - 0.5 * 0.99 / PI).abs() < 1e-15);
        let b = OscillatorBundle::new(
            [1, 0].into(),
            [0, 1].into(),
            0.1,
            1.0,
            BootBalance::BootBump,
            vr,
            vs,
            env,
            n + 1,
        );
        assert!((b.upsilon_total() - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn boot_bump_zero_target_reaches_two_pi() {
        let w = Signal::Zero;
        let b = build_bundle(&[1, 0].into(), &[0, 1].into(), &w, 0.1, &opts(0.1).with_balance(BootBalance::BootBump))
            .unwrap();
        assert_eq!(b.n_periods, 2);
        assert!((b.upsilon_total() - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn plateau_rescale_hits_integer_multiple() {
        let w = Signal::constant(Complex64::new(0.0, 0.5));
        let b = build_bundle(&[1, 0].into(), &[0, 1].into(), &w, 0.1, &opts(0.1)).unwrap();
        assert_eq!(b.n_periods, 1);
        assert!((b.upsilon_total() - PI).abs() < 1e-12);
        // plateau product equals |w|
        assert!((b.vr.squared(0.5) * b.vs(0.5) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn resonance_identity_on_plateau() {
        let w = Complex64::new(-0.2, 0.35);
        let b = build_bundle(&[1, 0].into(), &[0, 1].into(), &Signal::constant(w), 0.1, &opts(0.1)).unwrap();
        for j in 1..50 {
            let t = 0.02 + 0.96 * j as f64 / 50.0;
            assert!((b.resonant_product(t) - w).norm() < 1e-12, "t = {t}");
            assert!((b.resonant_monomial(t) - w).norm() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn rho_for_imaginary_target_adds_quarter_pi() {
        let b1 = build_bundle(&[1, 0].into(), &[0, 1].into(), &Signal::constant(Complex64::new(0.5, 0.0)), 0.1, &opts(0.1))
            .unwrap();
        let b2 = build_bundle(&[1, 0].into(), &[0, 1].into(), &Signal::constant(Complex64::new(0.0, 0.5)), 0.1, &opts(0.1))
            .unwrap();
        for t in [0.1, 0.4, 0.9] {
            assert!((b1.rho(t) - (2.0 * t + b1.upsilon(t))).abs() < 1e-13);
            assert!((b2.rho(t) - b1.rho(t) - PI / 4.0).abs() < 1e-13);
        }
    }

    #[test]
    fn carrier_derivatives_match_finite_differences() {
        let w = Signal::exponential(Complex64::new(0.3, 0.1), 0.0, 2.0);
        let b = build_bundle(&[1, 0].into(), &[0, 1].into(), &w, 0.2, &opts(0.2)).unwrap();
        let h = 1e-5;
        for t in [0.1, 0.37, 0.8] {
            let fd_r = (b.carrier_r(t + h) - b.carrier_r(t - h)) / (2.0 * h);
            let fd_s = (b.carrier_s(t + h) - b.carrier_s(t - h)) / (2.0 * h);
            assert!((fd_r - b.carrier_r_rate(t)).norm() < 1e-4 * (1.0 + fd_r.norm()), "t = {t}");
            assert!((fd_s - b.carrier_s_rate(t)).norm() < 1e-4 * (1.0 + fd_s.norm()), "t = {t}");
        }
    }

    #[test]
    fn pchip_interpolates_and_stays_monotone() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0, 1.0]);
        for j in 0..=300 {
            let t = j as f64 / 100.0;
            let v = p.value(t);
            assert!((-1e-15..=1.0 + 1e-15).contains(&v));
        }
        assert_eq!(p.value(2.0), 1.0);
    }

    #[test]
    fn cross_step_gaps() {
        assert_eq!(cross_step_gap(3.0, 2), 0.0);
        assert_eq!(cross_step_gap(4.0, 2), 0.0);
        assert!((cross_step_gap(3.5, 2) - 0.5).abs() < 1e-12);
        assert!((cross_step_gap(5.0, 2) - 1.0).abs() < 1e-12);
        assert!((cross_step_gap(5.0, 4) - 1.0).abs() < 1e-12);
        assert!(cross_step_gap(5.0, 1).is_infinite());
    }

    #[test]
    fn monomial_classes() {
        let classes = classify_cubic_monomials();
        let resonant: Vec<_> = classes.iter().filter(|c| c.is_resonant()).collect();
        assert_eq!(resonant.len(), 4);
        for c in &classes {
            assert!(c.beta.abs() <= 4);
        }
        assert!(resonant.iter().any(|c| c.unconjugated == (Factor::Vr, Factor::Vr) && c.conjugated == Factor::Vs));
    }
}
