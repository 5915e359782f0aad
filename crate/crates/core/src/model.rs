//! System description and eNSS condition checks.
//!
//! A [`SystemSpec`] describes `dx = f(x) dt + h(x) Σ(t) dω` together with a
//! Lyapunov function `V` and the constants of the dissipation inequality
//!
//! ```text
//! α1(‖x‖) <= V(x) <= α2(‖x‖)
//! LV(x, t) <= -c V(x) + γ(‖Σ(t)Σ(t)ᵀ‖_F),    γ(·) <= gamma_max
//! ```
//!
//! Matrices are stored row-major in flat slices: `h(x)` is `N x m`, `Σ(t)` is
//! `m x m` and the Hessian of `V` is `N x N`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub type VectorField = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type MatrixOfTime = Box<dyn Fn(f64, &mut [f64]) + Send + Sync>;
pub type StateScalar = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of time points used to compare `γ(‖ΣΣᵀ‖_F)` against `gamma_max`.
pub const GAMMA_GRID_POINTS: usize = 10_000;

/// Lyapunov function with its comparison functions.
pub struct LyapunovSpec {
    pub v: StateScalar,
    /// Gradient of `V`; central differences are used when absent.
    pub grad: Option<VectorField>,
    /// Row-major Hessian of `V`; central differences are used when absent.
    pub hess: Option<VectorField>,
    pub alpha1: ScalarFn,
    pub alpha2: ScalarFn,
    pub alpha3: ScalarFn,
    pub alpha1_inv: ScalarFn,
}

impl LyapunovSpec {
    /// `V(x) = ½‖x‖²` with `α1 = α2 = ½r²` and the given `α3`.
    pub fn half_square_norm(alpha3: ScalarFn) -> Self {
        Self {
            v: Box::new(|x| 0.5 * x.iter().map(|v| v * v).sum::<f64>()),
            grad: Some(Box::new(|x, g| g.copy_from_slice(x))),
            hess: Some(Box::new(|x, h| {
                let n = x.len();
                h.fill(0.0);
                for i in 0..n {
                    h[i * n + i] = 1.0;
                }
            })),
            alpha1: Box::new(|r| 0.5 * r * r),
            alpha2: Box::new(|r| 0.5 * r * r),
            alpha3,
            alpha1_inv: Box::new(|v| libm::sqrt(2.0 * v)),
        }
    }
}

/// A complete eNSS problem statement. Immutable after construction.
pub struct SystemSpec {
    name: String,
    dim_state: usize,
    dim_noise: usize,
    drift: VectorField,
    diffusion: VectorField,
    covariance: MatrixOfTime,
    lyapunov: LyapunovSpec,
    c: f64,
    gamma: ScalarFn,
    gamma_max: f64,
    period: Option<f64>,
}

impl core::fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("c", &self.c)
            .field("gamma_max", &self.gamma_max)
            .field("period", &self.period)
            .finish_non_exhaustive()
    }
}

pub struct SystemSpecBuilder {
    name: String,
    dim_state: usize,
    dim_noise: usize,
    drift: Option<VectorField>,
    diffusion: Option<VectorField>,
    covariance: Option<MatrixOfTime>,
    lyapunov: Option<LyapunovSpec>,
    c: Option<f64>,
    gamma: Option<ScalarFn>,
    gamma_max: Option<f64>,
    period: Option<f64>,
}

impl SystemSpecBuilder {
    pub fn drift(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Box::new(f));
        self
    }

    pub fn diffusion(mut self, h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Box::new(h));
        self
    }

    pub fn covariance(mut self, sigma: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.covariance = Some(Box::new(sigma));
        self
    }

    pub fn lyapunov(mut self, l: LyapunovSpec) -> Self {
        self.lyapunov = Some(l);
        self
    }

    /// Dissipation rate, noise gain and its supremum.
    pub fn dissipation(
        mut self,
        c: f64,
        gamma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma_max: f64,
    ) -> Self {
        self.c = Some(c);
        self.gamma = Some(Box::new(gamma));
        self.gamma_max = Some(gamma_max);
        self
    }

    /// Period of `Σ(t)`, if any; bounds the time grid of the `gamma_max` check.
    pub fn period(mut self, period: f64) -> Self {
        self.period = Some(period);
        self
    }

    pub fn build(self) -> Result<SystemSpec> {
        fn missing(what: &str) -> Error {
            Error::Config(format!("system spec is missing {what}"))
        }
        if self.dim_state == 0 || self.dim_noise == 0 {
            return Err(Error::Dimension(format!(
                "state and noise dimensions must be positive, got {} and {}",
                self.dim_state, self.dim_noise
            )));
        }
        let c = self.c.ok_or_else(|| missing("c"))?;
        let gamma_max = self.gamma_max.ok_or_else(|| missing("gamma_max"))?;
        if !(c > 0.0) || !(gamma_max >= 0.0) || !gamma_max.is_finite() {
            return Err(Error::Config(format!(
                "need c > 0 and finite gamma_max >= 0, got c = {c}, gamma_max = {gamma_max}"
            )));
        }
        if let Some(p) = self.period {
            if !(p > 0.0) {
                return Err(Error::Config(format!("period must be positive, got {p}")));
            }
        }
        Ok(SystemSpec {
            name: self.name,
            dim_state: self.dim_state,
            dim_noise: self.dim_noise,
            drift: self.drift.ok_or_else(|| missing("drift"))?,
            diffusion: self.diffusion.ok_or_else(|| missing("diffusion"))?,
            covariance: self.covariance.ok_or_else(|| missing("covariance"))?,
            lyapunov: self.lyapunov.ok_or_else(|| missing("a Lyapunov function"))?,
            c,
            gamma: self.gamma.ok_or_else(|| missing("gamma"))?,
            gamma_max,
            period: self.period,
        })
    }
}

impl SystemSpec {
    pub fn builder(name: impl Into<String>, dim_state: usize, dim_noise: usize) -> SystemSpecBuilder {
        SystemSpecBuilder {
            name: name.into(),
            dim_state,
            dim_noise,
            drift: None,
            diffusion: None,
            covariance: None,
            lyapunov: None,
            c: None,
            gamma: None,
            gamma_max: None,
            period: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim_state(&self) -> usize {
        self.dim_state
    }
    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn gamma_max(&self) -> f64 {
        self.gamma_max
    }
    pub fn period(&self) -> Option<f64> {
        self.period
    }
    pub fn lyapunov(&self) -> &LyapunovSpec {
        &self.lyapunov
    }

    /// `gamma_max / c`, the asymptotic bound on `E V(x(t))`.
    pub fn floor(&self) -> f64 {
        self.gamma_max / self.c
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }
    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }
    pub fn covariance_into(&self, t: f64, out: &mut [f64]) {
        (self.covariance)(t, out)
    }

    pub fn v(&self, x: &[f64]) -> f64 {
        (self.lyapunov.v)(x)
    }
    pub fn alpha1(&self, r: f64) -> f64 {
        (self.lyapunov.alpha1)(r)
    }
    pub fn alpha2(&self, r: f64) -> f64 {
        (self.lyapunov.alpha2)(r)
    }
    pub fn alpha3(&self, r: f64) -> f64 {
        (self.lyapunov.alpha3)(r)
    }
    pub fn alpha1_inv(&self, v: f64) -> f64 {
        (self.lyapunov.alpha1_inv)(v)
    }
    pub fn gamma(&self, s: f64) -> f64 {
        (self.gamma)(s)
    }

    /// `γ(‖Σ(t)Σ(t)ᵀ‖_F)`.
    pub fn noise_gain(&self, t: f64) -> f64 {
        let m = self.dim_noise;
        let mut sigma = vec![0.0; m * m];
        self.covariance_into(t, &mut sigma);
        self.gamma(frobenius_of_gram(&sigma, m))
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim_state {
            return Err(Error::Dimension(format!(
                "state has length {}, system dimension is {}",
                x.len(),
                self.dim_state
            )));
        }
        Ok(())
    }

    /// Gradient of `V`, analytic when supplied.
    pub fn grad_v(&self, x: &[f64], out: &mut [f64]) {
        match &self.lyapunov.grad {
            Some(g) => g(x, out),
            None => fd_gradient(&self.lyapunov.v, x, out),
        }
    }

    /// Row-major Hessian of `V`, analytic when supplied.
    pub fn hess_v(&self, x: &[f64], out: &mut [f64]) {
        match &self.lyapunov.hess {
            Some(h) => h(x, out),
            None => fd_hessian(&self.lyapunov.v, x, out),
        }
    }
}

/// `‖S Sᵀ‖_F` for a row-major `m x m` matrix `S`.
pub fn frobenius_of_gram(s: &[f64], m: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            let g: f64 = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            sum += g * g;
        }
    }
    libm::sqrt(sum)
}

fn fd_scale(x: &[f64], power: f64) -> f64 {
    let norm = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
    libm::pow(f64::EPSILON, power) * norm.max(1.0)
}

fn fd_gradient(v: &StateScalar, x: &[f64], out: &mut [f64]) {
    let h = fd_scale(x, 1.0 / 3.0);
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = v(&p);
        p[i] = x[i] - h;
        let down = v(&p);
        p[i] = x[i];
        out[i] = (up - down) / (2.0 * h);
    }
}

fn fd_hessian(v: &StateScalar, x: &[f64], out: &mut [f64]) {
    // second differences lose twice as many digits, so the step is eps^(1/4)
    let h = fd_scale(x, 0.25);
    let n = x.len();
    let centre = v(x);
    let mut p = x.to_vec();
    for i in 0..n {
        p[i] = x[i] + h;
        let up = v(&p);
        p[i] = x[i] - h;
        let down = v(&p);
        p[i] = x[i];
        out[i * n + i] = (up - 2.0 * centre + down) / (h * h);
        for j in (i + 1)..n {
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                let val = v(&p);
                p[i] = x[i];
                p[j] = x[j];
                val
            };
            let d = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h * h);
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
}

/// Itô generator of `V` along the system:
/// `∇Vᵀ f(x) + ½ tr(Σᵀ hᵀ ∇²V h Σ)`.
pub fn generator_v(spec: &SystemSpec, x: &[f64], t: f64) -> Result<f64> {
    spec.check_state(x)?;
    let n = spec.dim_state;
    let m = spec.dim_noise;

    let mut f = vec![0.0; n];
    let mut grad = vec![0.0; n];
    spec.drift_into(x, &mut f);
    spec.grad_v(x, &mut grad);
    let drift_term: f64 = grad.iter().zip(&f).map(|(g, f)| g * f).sum();

    let mut h = vec![0.0; n * m];
    let mut sigma = vec![0.0; m * m];
    let mut hess = vec![0.0; n * n];
    spec.diffusion_into(x, &mut h);
    spec.covariance_into(t, &mut sigma);
    spec.hess_v(x, &mut hess);

    // b = h Σ, N x m
    let mut b = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            b[i * m + j] = (0..m).map(|k| h[i * m + k] * sigma[k * m + j]).sum();
        }
    }
    let mut trace = 0.0;
    for j in 0..m {
        for a in 0..n {
            let hb: f64 = (0..n).map(|c| hess[a * n + c] * b[c * m + j]).sum();
            trace += b[a * m + j] * hb;
        }
    }
    Ok(drift_term + 0.5 * trace)
}

/// A sampled point where the dissipation inequality fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub state: Vec<f64>,
    pub time: f64,
    pub residual: f64,
}

/// Outcome of [`check_enss`].
///
/// Residuals within `tolerance` of zero are rounding noise and are not
/// reported; `max_violation <= tolerance` iff `violating_points` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub points_checked: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub violating_points: Vec<Violation>,
    pub gamma_times_checked: usize,
    /// `max_t γ(‖Σ(t)Σ(t)ᵀ‖_F) - gamma_max` over the dense time grid.
    pub gamma_excess: f64,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.violating_points.is_empty() && self.gamma_excess <= self.tolerance
    }
}

/// Absolute slack granted to each residual, relative to the magnitude of the
/// terms being compared.
pub const RESIDUAL_REL_TOL: f64 = 1e-10;

/// Evaluates `LV(x, t) + c V(x) - γ(‖Σ(t)Σ(t)ᵀ‖_F)` on every pair of
/// `states x times`, and checks `γ <= gamma_max` on a dense grid over one
/// declared period (or the span of `times`).
pub fn check_enss(spec: &SystemSpec, states: &[Vec<f64>], times: &[f64]) -> Result<ConditionReport> {
    if states.is_empty() {
        return Err(Error::Empty("check_enss states"));
    }
    if times.is_empty() {
        return Err(Error::Empty("check_enss times"));
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut violating_points = Vec::new();
    let mut worst_scale: f64 = 1.0;
    for x in states {
        for &t in times {
            let lv = generator_v(spec, x, t)?;
            let cv = spec.c * spec.v(x);
            let gain = spec.noise_gain(t);
            if !gain.is_finite() {
                return Err(Error::Domain {
                    what: "gamma(|Sigma Sigma^T|_F) is not finite at this time",
                    value: t,
                });
            }
            let residual = lv + cv - gain;
            let scale = 1.0 + lv.abs() + cv.abs() + gain.abs();
            if residual > max_violation {
                max_violation = residual;
                worst_scale = scale;
            }
            if !(residual <= RESIDUAL_REL_TOL * scale) {
                violating_points.push(Violation {
                    state: x.clone(),
                    time: t,
                    residual,
                });
            }
        }
    }

    let (t0, t1) = match spec.period {
        Some(p) => (0.0, p),
        None => times
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t))),
    };
    let mut gamma_excess = f64::NEG_INFINITY;
    for i in 0..GAMMA_GRID_POINTS {
        let t = t0 + (t1 - t0) * i as f64 / (GAMMA_GRID_POINTS - 1) as f64;
        let gain = spec.noise_gain(t);
        if !gain.is_finite() {
            return Err(Error::Domain {
                what: "gamma(|Sigma Sigma^T|_F) is not finite at this time",
                value: t,
            });
        }
        gamma_excess = gamma_excess.max(gain - spec.gamma_max);
    }

    Ok(ConditionReport {
        points_checked: states.len() * times.len(),
        max_violation,
        tolerance: RESIDUAL_REL_TOL * worst_scale,
        violating_points,
        gamma_times_checked: GAMMA_GRID_POINTS,
        gamma_excess,
    })
}

/// Spot checks of the Lyapunov envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub points_checked: usize,
    /// States where `α1(‖x‖) <= V(x) <= α2(‖x‖)` fails.
    pub sandwich_violations: usize,
    /// `max |α1_inv(α1(r)) - r| / max(1, r)` over the radius grid.
    pub inverse_max_error: f64,
    /// α1, α2, α3 vanish at 0 and are nondecreasing on the radius grid.
    pub class_k: bool,
}

impl EnvelopeReport {
    pub fn passed(&self) -> bool {
        self.sandwich_violations == 0 && self.inverse_max_error <= 1e-9 && self.class_k
    }
}

/// Checks the `α` envelopes of `V` on sampled states and a radius grid.
pub fn check_envelopes(spec: &SystemSpec, states: &[Vec<f64>], radii: &[f64]) -> Result<EnvelopeReport> {
    if states.is_empty() || radii.is_empty() {
        return Err(Error::Empty("check_envelopes"));
    }
    let mut sandwich_violations = 0;
    for x in states {
        spec.check_state(x)?;
        let r = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
        let v = spec.v(x);
        let slack = 1e-12 * (1.0 + v.abs());
        if spec.alpha1(r) > v + slack || v > spec.alpha2(r) + slack {
            sandwich_violations += 1;
        }
    }
    let inverse_max_error = radii
        .iter()
        .map(|&r| (spec.alpha1_inv(spec.alpha1(r)) - r).abs() / r.max(1.0))
        .fold(0.0, f64::max);

    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut class_k = true;
    for alpha in [&spec.lyapunov.alpha1, &spec.lyapunov.alpha2, &spec.lyapunov.alpha3] {
        class_k &= alpha(0.0) == 0.0;
        class_k &= sorted.windows(2).all(|w| alpha(w[0]) <= alpha(w[1]));
    }
    Ok(EnvelopeReport {
        points_checked: states.len(),
        sandwich_violations,
        inverse_max_error,
        class_k,
    })
}

/// Two-dimensional example with singular, time-varying noise:
///
/// ```text
/// f(x) = (-x1 + x2, -x1 - x2),   h(x) = [[0, 0], [x2, 1]],
/// Σ(t) = diag(1, sin t),         V(x) = ½‖x‖²,
/// c = 1,  γ(s) = ½√(s² - 1),     gamma_max = ½.
/// ```
///
/// `γ` is only defined for `s >= 1`, which always holds for this `Σ`.
pub fn builtin_example() -> SystemSpec {
    SystemSpec::builder("example", 2, 2)
        .drift(|x, out| {
            out[0] = -x[0] + x[1];
            out[1] = -x[0] - x[1];
        })
        .diffusion(|x, out| {
            out.copy_from_slice(&[0.0, 0.0, x[1], 1.0]);
        })
        .covariance(|t, out| {
            out.copy_from_slice(&[1.0, 0.0, 0.0, libm::sin(t)]);
        })
        .lyapunov(LyapunovSpec::half_square_norm(Box::new(|r| 0.5 * r * r)))
        .dissipation(
            1.0,
            |s| {
                let arg = s * s - 1.0;
                if arg < -1e-12 {
                    f64::NAN
                } else {
                    0.5 * libm::sqrt(arg.max(0.0))
                }
            },
            0.5,
        )
        .period(2.0 * core::f64::consts::PI)
        .build()
        .expect("built-in example is complete")
}

/// Scalar Ornstein–Uhlenbeck process `dx = -θ x dt + σ dω` with
/// `V = ½x²`, `c = 2θ`, `γ(s) = s/2` and `gamma_max = σ²/2`.
pub fn builtin_ou(theta: f64, sigma: f64) -> Result<SystemSpec> {
    if !(theta > 0.0) || !(sigma >= 0.0) {
        return Err(Error::Config(format!(
            "OU needs theta > 0 and sigma >= 0, got {theta}, {sigma}"
        )));
    }
    SystemSpec::builder("ou", 1, 1)
        .drift(move |x, out| out[0] = -theta * x[0])
        .diffusion(|_, out| out[0] = 1.0)
        .covariance(move |_, out| out[0] = sigma)
        .lyapunov(LyapunovSpec::half_square_norm(Box::new(move |r| theta * r * r)))
        .dissipation(2.0 * theta, |s| 0.5 * s, 0.5 * sigma * sigma)
        .build()
}
