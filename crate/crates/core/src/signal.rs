//! Scalar complex control signals `c(t)` with pointwise values and
//! integrals `∫_{t0}^{t1} c` over arbitrary subintervals.
//!
//! Integrals are exact for constants, linear-phase exponentials, time
//! derivatives of known primitives and piecewise-constant samples. Other
//! combinations fall back to Gauss-Legendre quadrature on pieces short
//! enough that the integrand turns by at most half a radian.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// A function with a known derivative; `Signal::Derivative` integrates to
/// differences of `value`.
pub trait Primitive: Send + Sync + Debug {
    fn value(&self, t: f64) -> Complex64;
    fn derivative(&self, t: f64) -> Complex64;
    /// Bound on the angular frequency of `value`.
    fn rate_bound(&self) -> f64;
}

/// A real phase `θ(t)` with derivative.
pub trait PhaseFn: Send + Sync + Debug {
    fn phase(&self, t: f64) -> f64;
    fn rate(&self, t: f64) -> f64;
    fn rate_bound(&self) -> f64;
}

/// Phase factor `e^{iθ(t)}` applied to a signal.
#[derive(Clone, Debug)]
pub enum Phase {
    Linear { offset: f64, rate: f64 },
    Scaled { factor: f64, phase: Arc<dyn PhaseFn> },
    Sum(Vec<Phase>),
}

impl Phase {
    pub fn linear(offset: f64, rate: f64) -> Self {
        Phase::Linear { offset, rate }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Phase::Linear { offset, rate } => offset + rate * t,
            Phase::Scaled { factor, phase } => factor * phase.phase(t),
            Phase::Sum(v) => v.iter().map(|p| p.value(t)).sum(),
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            Phase::Linear { rate, .. } => *rate,
            Phase::Scaled { factor, phase } => factor * phase.rate(t),
            Phase::Sum(v) => v.iter().map(|p| p.rate(t)).sum(),
        }
    }

    pub fn rate_bound(&self) -> f64 {
        match self {
            Phase::Linear { rate, .. } => rate.abs(),
            Phase::Scaled { factor, phase } => factor.abs() * phase.rate_bound(),
            Phase::Sum(v) => v.iter().map(|p| p.rate_bound()).sum(),
        }
    }

    fn combine(outer: Option<&Phase>, inner: &Phase) -> Phase {
        match outer {
            None => inner.clone(),
            Some(Phase::Linear { offset: o1, rate: r1 }) => match inner {
                Phase::Linear { offset: o2, rate: r2 } => Phase::Linear { offset: o1 + o2, rate: r1 + r2 },
                _ => Phase::Sum(vec![outer.unwrap().clone(), inner.clone()]),
            },
            Some(p) => Phase::Sum(vec![p.clone(), inner.clone()]),
        }
    }
}

/// Uniformly sampled signal, piecewise constant on
/// `[start + j dt, start + (j + 1) dt)` and zero outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    pub start: f64,
    pub dt: f64,
    pub values: Vec<Complex64>,
}

impl Sampled {
    pub fn end(&self) -> f64 {
        self.start + self.dt * self.values.len() as f64
    }

    fn cell(&self, t: f64) -> Option<usize> {
        if t < self.start || t >= self.end() {
            return None;
        }
        let j = ((t - self.start) / self.dt).floor() as usize;
        Some(j.min(self.values.len() - 1))
    }
}

#[derive(Clone, Debug, Default)]
pub enum Signal {
    #[default]
    Zero,
    Constant(Complex64),
    /// `inner` restricted to `[start, end]`.
    Windowed { start: f64, end: f64, inner: Box<Signal> },
    /// `d/dt P(t)`.
    Derivative(Arc<dyn Primitive>),
    /// `inner(t) e^{iθ(t)}`.
    Modulated { phase: Phase, inner: Box<Signal> },
    Sampled(Arc<Sampled>),
    Sum(Vec<Signal>),
}

impl Signal {
    pub fn constant(c: Complex64) -> Self {
        Signal::Constant(c)
    }

    /// `c e^{i(offset + rate t)}`.
    pub fn exponential(c: Complex64, offset: f64, rate: f64) -> Self {
        Signal::Modulated { phase: Phase::linear(offset, rate), inner: Box::new(Signal::Constant(c)) }
    }

    pub fn windowed(self, start: f64, end: f64) -> Self {
        Signal::Windowed { start, end, inner: Box::new(self) }
    }

    pub fn modulated(self, phase: Phase) -> Self {
        match self {
            Signal::Zero => Signal::Zero,
            s => Signal::Modulated { phase, inner: Box::new(s) },
        }
    }

    /// Multiplies by a complex constant.
    pub fn scale(self, c: Complex64) -> Signal {
        match self {
            Signal::Zero => Signal::Zero,
            Signal::Constant(x) => Signal::Constant(x * c),
            Signal::Windowed { start, end, inner } => Signal::Windowed { start, end, inner: Box::new(inner.scale(c)) },
            Signal::Modulated { phase, inner } => Signal::Modulated { phase, inner: Box::new(inner.scale(c)) },
            Signal::Sum(v) => Signal::Sum(v.into_iter().map(|s| s.scale(c)).collect()),
            Signal::Sampled(s) => {
                let mut s = (*s).clone();
                for v in &mut s.values {
                    *v *= c;
                }
                Signal::Sampled(Arc::new(s))
            }
            Signal::Derivative(p) => Signal::Derivative(Arc::new(ScaledPrimitive { c, inner: p })),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Signal::Zero => true,
            Signal::Constant(c) => *c == ZERO,
            Signal::Windowed { start, end, inner } => end <= start || inner.is_zero(),
            Signal::Modulated { inner, .. } => inner.is_zero(),
            Signal::Sampled(s) => s.values.iter().all(|v| *v == ZERO),
            Signal::Sum(v) => v.iter().all(|s| s.is_zero()),
            Signal::Derivative(_) => false,
        }
    }

    /// Sum of two signals, flattening nested sums and dropping zeros.
    pub fn plus(self, other: Signal) -> Signal {
        let mut parts = Vec::new();
        for s in [self, other] {
            match s {
                Signal::Zero => {}
                Signal::Sum(v) => parts.extend(v),
                s => parts.push(s),
            }
        }
        match parts.len() {
            0 => Signal::Zero,
            1 => parts.pop().unwrap(),
            _ => Signal::Sum(parts),
        }
    }

    pub fn value(&self, t: f64) -> Complex64 {
        match self {
            Signal::Zero => ZERO,
            Signal::Constant(c) => *c,
            Signal::Windowed { start, end, inner } => {
                if t >= *start && t <= *end {
                    inner.value(t)
                } else {
                    ZERO
                }
            }
            Signal::Derivative(p) => p.derivative(t),
            Signal::Modulated { phase, inner } => inner.value(t) * Complex64::from_polar(1.0, phase.value(t)),
            Signal::Sampled(s) => s.cell(t).map(|j| s.values[j]).unwrap_or(ZERO),
            Signal::Sum(v) => v.iter().map(|s| s.value(t)).sum(),
        }
    }

    /// Largest angular frequency present in the signal.
    pub fn rate_bound(&self) -> f64 {
        match self {
            Signal::Zero | Signal::Constant(_) | Signal::Sampled(_) => 0.0,
            Signal::Windowed { inner, .. } => inner.rate_bound(),
            Signal::Derivative(p) => p.rate_bound(),
            Signal::Modulated { phase, inner } => phase.rate_bound() + inner.rate_bound(),
            Signal::Sum(v) => v.iter().map(|s| s.rate_bound()).fold(0.0, f64::max),
        }
    }

    /// `∫_{t0}^{t1} c(t) dt`.
    pub fn increment(&self, t0: f64, t1: f64) -> Complex64 {
        self.integral(None, t0, t1)
    }

    /// Mean over `[t0, t1]`.
    pub fn average(&self, t0: f64, t1: f64) -> Complex64 {
        self.increment(t0, t1) / (t1 - t0)
    }

    /// `∫_{t0}^{t1} c(t) e^{iθ(t)} dt` for an optional outer phase.
    fn integral(&self, phase: Option<&Phase>, t0: f64, t1: f64) -> Complex64 {
        if t1 <= t0 {
            return ZERO;
        }
        match self {
            Signal::Zero => ZERO,
            Signal::Constant(c) => match phase {
                None => c * (t1 - t0),
                Some(Phase::Linear { offset, rate }) => c * exp_integral(*offset, *rate, t0, t1),
                Some(p) => {
                    let bound = p.rate_bound();
                    c * gauss(t0, t1, bound, |t| Complex64::from_polar(1.0, p.value(t)))
                }
            },
            Signal::Windowed { start, end, inner } => {
                let a = t0.max(*start);
                let b = t1.min(*end);
                if b > a {
                    inner.integral(phase, a, b)
                } else {
                    ZERO
                }
            }
            Signal::Derivative(prim) => match phase {
                None => prim.value(t1) - prim.value(t0),
                Some(p) => {
                    // Integration by parts keeps the integrand bounded even where
                    // the derivative of the primitive is not.
                    let ends = prim.value(t1) * Complex64::from_polar(1.0, p.value(t1))
                        - prim.value(t0) * Complex64::from_polar(1.0, p.value(t0));
                    let bound = p.rate_bound() + prim.rate_bound();
                    let rest = gauss(t0, t1, bound, |t| {
                        prim.value(t) * I * p.rate(t) * Complex64::from_polar(1.0, p.value(t))
                    });
                    ends - rest
                }
            },
            Signal::Modulated { phase: inner_phase, inner } => {
                let combined = Phase::combine(phase, inner_phase);
                inner.integral(Some(&combined), t0, t1)
            }
            Signal::Sampled(s) => {
                let a = t0.max(s.start);
                let b = t1.min(s.end());
                if b <= a {
                    return ZERO;
                }
                let first = s.cell(a).unwrap_or(0);
                let mut acc = ZERO;
                let mut j = first;
                while j < s.values.len() {
                    let lo = (s.start + j as f64 * s.dt).max(a);
                    let hi = (s.start + (j + 1) as f64 * s.dt).min(b);
                    if lo >= b {
                        break;
                    }
                    if hi > lo {
                        acc += s.values[j]
                            * match phase {
                                None => Complex64::new(hi - lo, 0.0),
                                Some(Phase::Linear { offset, rate }) => exp_integral(*offset, *rate, lo, hi),
                                Some(p) => gauss(lo, hi, p.rate_bound(), |t| Complex64::from_polar(1.0, p.value(t))),
                            };
                    }
                    j += 1;
                }
                acc
            }
            Signal::Sum(v) => v.iter().map(|s| s.integral(phase, t0, t1)).sum(),
        }
    }

    /// Interval averages on `n` uniform cells of `[0, horizon]`.
    pub fn sample(&self, horizon: f64, n: usize) -> Sampled {
        let dt = horizon / n as f64;
        let values = (0..n).map(|j| self.average(j as f64 * dt, (j + 1) as f64 * dt)).collect();
        Sampled { start: 0.0, dt, values }
    }
}

#[derive(Debug)]
struct ScaledPrimitive {
    c: Complex64,
    inner: Arc<dyn Primitive>,
}

impl Primitive for ScaledPrimitive {
    fn value(&self, t: f64) -> Complex64 {
        self.inner.value(t) * self.c
    }
    fn derivative(&self, t: f64) -> Complex64 {
        self.inner.derivative(t) * self.c
    }
    fn rate_bound(&self) -> f64 {
        self.inner.rate_bound()
    }
}

/// `∫_{t0}^{t1} e^{i(offset + rate t)} dt` in closed form.
pub fn exp_integral(offset: f64, rate: f64, t0: f64, t1: f64) -> Complex64 {
    let h = t1 - t0;
    let x = rate * h;
    let start = Complex64::from_polar(1.0, offset + rate * t0);
    if x.abs() < 1e-4 {
        // Series of (e^{ix} - 1)/(ix) to avoid cancellation.
        let ix = I * x;
        start * h * (1.0 + ix / 2.0 + ix * ix / 6.0 + ix * ix * ix / 24.0)
    } else {
        start * (Complex64::from_polar(1.0, x) - 1.0) / (I * rate)
    }
}

const GL_NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL_WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// Composite 4-point Gauss-Legendre rule with pieces short enough that a
/// phase turning at `rate` moves at most half a radian per piece.
pub fn gauss<F: Fn(f64) -> Complex64>(t0: f64, t1: f64, rate: f64, f: F) -> Complex64 {
    let h = t1 - t0;
    let pieces = ((h * rate / 0.5).ceil() as usize).clamp(1, 1 << 24);
    let step = h / pieces as f64;
    let mut acc = ZERO;
    for p in 0..pieces {
        let mid = t0 + (p as f64 + 0.5) * step;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            acc += f(mid + 0.5 * step * x) * w;
        }
    }
    acc * (0.5 * step)
}

/// Real-valued composite Gauss-Legendre rule with `pieces` equal pieces.
pub fn gauss_real<F: Fn(f64) -> f64>(t0: f64, t1: f64, pieces: usize, f: F) -> f64 {
    let step = (t1 - t0) / pieces as f64;
    let mut acc = 0.0;
    for p in 0..pieces {
        let mid = t0 + (p as f64 + 0.5) * step;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            acc += f(mid + 0.5 * step * x) * w;
        }
    }
    acc * 0.5 * step
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Sine(f64);
    impl Primitive for Sine {
        fn value(&self, t: f64) -> Complex64 {
            Complex64::new((self.0 * t).sin(), 0.0)
        }
        fn derivative(&self, t: f64) -> Complex64 {
            Complex64::new(self.0 * (self.0 * t).cos(), 0.0)
        }
        fn rate_bound(&self) -> f64 {
            self.0
        }
    }

    #[test]
    fn constant_and_exponential() {
        let c = Complex64::new(0.3, -0.2);
        assert!((Signal::constant(c).increment(0.2, 0.7) - c * 0.5).norm() < 1e-15);
        let e = Signal::exponential(c, 0.4, 7.0);
        let exact = c * (Complex64::from_polar(1.0, 0.4 + 7.0 * 0.7) - Complex64::from_polar(1.0, 0.4 + 7.0 * 0.2))
            / (I * 7.0);
        assert!((e.increment(0.2, 0.7) - exact).norm() < 1e-14);
        assert!((exp_integral(0.1, 1e-9, 0.0, 2.0) - 2.0 * Complex64::from_polar(1.0, 0.1)).norm() < 1e-8);
    }

    #[test]
    fn derivative_under_phase_matches_quadrature() {
        let d = Signal::Derivative(Arc::new(Sine(3.0))).modulated(Phase::linear(0.2, -5.0));
        let direct = gauss(0.0, 1.3, 200.0, |t| d.value(t));
        assert!((d.increment(0.0, 1.3) - direct).norm() < 1e-11);
    }

    #[test]
    fn windowed_and_sampled() {
        let w = Signal::constant(Complex64::new(2.0, 0.0)).windowed(0.5, 0.75);
        assert!((w.increment(0.0, 1.0).re - 0.5).abs() < 1e-15);
        assert!((w.increment(0.6, 0.7).re - 0.2).abs() < 1e-15);
        let s = Signal::Sampled(Arc::new(Sampled {
            start: 0.0,
            dt: 0.5,
            values: vec![Complex64::new(1.0, 0.0), Complex64::new(3.0, 0.0)],
        }));
        assert!((s.increment(0.25, 0.75).re - (0.25 + 0.75)).abs() < 1e-15);
        assert_eq!(s.value(0.6).re, 3.0);
        assert_eq!(s.value(1.2).re, 0.0);
    }

    #[test]
    fn sample_round_trip_preserves_increments() {
        let sig = Signal::exponential(Complex64::new(1.0, 0.5), 0.0, 11.0);
        let sampled = Signal::Sampled(Arc::new(sig.sample(1.0, 64)));
        let a = sig.increment(0.0, 0.5);
        let b = sampled.increment(0.0, 0.5);
        assert!((a - b).norm() < 1e-13);
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }
}
