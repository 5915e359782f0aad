//! Uniformization, generalized inverse CDFs and dominated couplings.
//!
//! Given an adapted sequence `X_n` with conditional CDFs
//! `g(· | X_1..X_{n-1})` and an auxiliary i.i.d. uniform sequence `ξ_n`, the
//! transform
//!
//! ```text
//! Y_n = g(X_n- | ..) + ξ_n [g(X_n | ..) - g(X_n- | ..)]
//! ```
//!
//! yields i.i.d. `U(0,1)` variables. Feeding `Y_n` through a generalized
//! inverse of a dominating law `F` produces an i.i.d. sequence `Z_n ~ F` that
//! bounds `X_n` pathwise: from above when `P{X_n >= s | ..} <= P{X > s}`
//! (sup-inverse), from below when `P{X_n > s} >= P{X > s}` (inf-inverse).
//! Sample means of `Z_n` converge, so the bounds transfer to the averages of
//! `X_n`.
//!
//! `+inf` is a valid sample value (an up-cross that never happens); it only
//! takes part in comparisons.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Cap on bracket doublings and on bisection steps.
pub const MAX_ITERATIONS: usize = 200;
/// Width at which bisection stops, relative to `max(1, |s|)`.
pub const INTERVAL_TOL: f64 = 1e-12;

/// Conditional CDF `g(s | history)` of the next element of a sequence.
pub trait ConditionalCdf {
    /// `P{X_n <= s | history}`.
    fn eval(&self, s: f64, history: &[f64]) -> f64;
    /// `P{X_n < s | history}`.
    fn left_limit(&self, s: f64, history: &[f64]) -> f64;
}

/// A distribution function on the extended reals.
pub trait DominatingLaw {
    /// `P{X <= s}`, nondecreasing and right-continuous.
    fn cdf(&self, s: f64) -> f64;

    /// `P{X < s}`. Defaults to `cdf`, which is right for continuous laws.
    fn cdf_left(&self, s: f64) -> f64 {
        self.cdf(s)
    }

    fn survival(&self, s: f64) -> f64 {
        1.0 - self.cdf(s)
    }

    /// Exact `inf{s | F(s) >= y}` when the law knows it; `None` falls back
    /// to bisection.
    fn quantile_inf(&self, _y: f64) -> Option<f64> {
        None
    }

    /// Exact `sup{s | F(s) <= y}` when the law knows it.
    fn quantile_sup(&self, _y: f64) -> Option<f64> {
        None
    }
}

impl<L: DominatingLaw + ?Sized> DominatingLaw for &L {
    fn cdf(&self, s: f64) -> f64 {
        (**self).cdf(s)
    }
    fn cdf_left(&self, s: f64) -> f64 {
        (**self).cdf_left(s)
    }
    fn survival(&self, s: f64) -> f64 {
        (**self).survival(s)
    }
    fn quantile_inf(&self, y: f64) -> Option<f64> {
        (**self).quantile_inf(y)
    }
    fn quantile_sup(&self, y: f64) -> Option<f64> {
        (**self).quantile_sup(y)
    }
}

/// Conditional CDF of an i.i.d. sequence: the history is ignored.
#[derive(Debug, Clone, Copy)]
pub struct Iid<L>(pub L);

impl<L: DominatingLaw> ConditionalCdf for Iid<L> {
    fn eval(&self, s: f64, _history: &[f64]) -> f64 {
        self.0.cdf(s)
    }
    fn left_limit(&self, s: f64, _history: &[f64]) -> f64 {
        self.0.cdf_left(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Uniform {
    pub low: f64,
    pub high: f64,
}

impl DominatingLaw for Uniform {
    fn cdf(&self, s: f64) -> f64 {
        ((s - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
    }
    fn quantile_inf(&self, y: f64) -> Option<f64> {
        Some(self.low + y * (self.high - self.low))
    }
    fn quantile_sup(&self, y: f64) -> Option<f64> {
        self.quantile_inf(y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Exponential {
    pub rate: f64,
}

impl DominatingLaw for Exponential {
    fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            -libm::expm1(-self.rate * s)
        }
    }
    fn survival(&self, s: f64) -> f64 {
        if s <= 0.0 {
            1.0
        } else {
            libm::exp(-self.rate * s)
        }
    }
    fn quantile_inf(&self, y: f64) -> Option<f64> {
        Some(-libm::log1p(-y) / self.rate)
    }
    fn quantile_sup(&self, y: f64) -> Option<f64> {
        self.quantile_inf(y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Normal {
    pub mean: f64,
    pub std_dev: f64,
}

impl DominatingLaw for Normal {
    fn cdf(&self, s: f64) -> f64 {
        crate::stats::normal_cdf((s - self.mean) / self.std_dev)
    }
}

/// Finitely supported law given as `(atom, probability)` pairs.
#[derive(Debug, Clone)]
pub struct Discrete {
    atoms: Vec<(f64, f64)>,
}

impl Discrete {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("Discrete::new"));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.iter().any(|a| !(a.1 >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain {
                what: "Discrete: probabilities must be >= 0 and sum to 1",
                value: total,
            });
        }
        Ok(Self { atoms })
    }

    pub fn point_mass(at: f64) -> Self {
        Self {
            atoms: alloc::vec![(at, 1.0)],
        }
    }
}

impl DominatingLaw for Discrete {
    fn cdf(&self, s: f64) -> f64 {
        let p: f64 = self.atoms.iter().filter(|a| a.0 <= s).map(|a| a.1).sum();
        p.min(1.0)
    }
    fn cdf_left(&self, s: f64) -> f64 {
        let p: f64 = self.atoms.iter().filter(|a| a.0 < s).map(|a| a.1).sum();
        p.min(1.0)
    }
    fn quantile_inf(&self, y: f64) -> Option<f64> {
        let mut acc = 0.0;
        for &(at, p) in &self.atoms {
            acc += p;
            if acc.min(1.0) >= y {
                return Some(at);
            }
        }
        self.atoms.last().map(|a| a.0)
    }
    fn quantile_sup(&self, y: f64) -> Option<f64> {
        let mut acc = 0.0;
        for &(at, p) in &self.atoms {
            acc += p;
            if acc.min(1.0) > y {
                return Some(at);
            }
        }
        self.atoms.last().map(|a| a.0)
    }
}

/// Two-component mixture `weight · A + (1 - weight) · B`.
#[derive(Debug, Clone, Copy)]
pub struct Mixture<A, B> {
    pub weight: f64,
    pub first: A,
    pub second: B,
}

impl<A: DominatingLaw, B: DominatingLaw> DominatingLaw for Mixture<A, B> {
    fn cdf(&self, s: f64) -> f64 {
        self.weight * self.first.cdf(s) + (1.0 - self.weight) * self.second.cdf(s)
    }
    fn cdf_left(&self, s: f64) -> f64 {
        self.weight * self.first.cdf_left(s) + (1.0 - self.weight) * self.second.cdf_left(s)
    }
}

/// Empirical law of a sample; `+inf` entries are allowed.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw {
    sorted: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("EmpiricalLaw::new"));
        }
        if samples.iter().any(|s| s.is_nan()) {
            return Err(Error::Domain {
                what: "EmpiricalLaw sample",
                value: f64::NAN,
            });
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }
}

impl EmpiricalLaw {
    /// Smallest rank `i` in `1..=n` with `hit(i / n)`, or `n`.
    fn first_rank(&self, hit: impl Fn(f64) -> bool) -> usize {
        let n = self.sorted.len();
        let frac = |i: usize| i as f64 / n as f64;
        let mut lo = 1;
        let mut hi = n;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if hit(frac(mid)) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }
}

impl DominatingLaw for EmpiricalLaw {
    fn cdf(&self, s: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= s) as f64 / self.sorted.len() as f64
    }
    fn cdf_left(&self, s: f64) -> f64 {
        self.sorted.partition_point(|&x| x < s) as f64 / self.sorted.len() as f64
    }
    fn quantile_inf(&self, y: f64) -> Option<f64> {
        Some(self.sorted[self.first_rank(|p| p >= y) - 1])
    }
    fn quantile_sup(&self, y: f64) -> Option<f64> {
        Some(self.sorted[self.first_rank(|p| p > y) - 1])
    }
}

/// The uniformizing transform `Y_n`.
///
/// Fails if `g(x_n-) > g(x_n)` or either value leaves `[0, 1]`.
pub fn uniformize<G: ConditionalCdf + ?Sized>(
    x_n: f64,
    history: &[f64],
    xi_n: f64,
    g: &G,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&xi_n) {
        return Err(Error::Domain {
            what: "uniformize: xi must lie in [0, 1]",
            value: xi_n,
        });
    }
    let left = g.left_limit(x_n, history);
    let right = g.eval(x_n, history);
    if !(0.0..=1.0).contains(&left) || !(0.0..=1.0).contains(&right) {
        return Err(Error::NotMonotone {
            at: x_n,
            detail: "CDF value outside [0, 1]",
        });
    }
    if left > right {
        return Err(Error::NotMonotone {
            at: x_n,
            detail: "left limit exceeds CDF value",
        });
    }
    Ok(left + xi_n * (right - left))
}

fn check_uniform_draw(y: f64) -> Result<()> {
    if y > 0.0 && y < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "generalized inverse: y must lie in (0, 1)",
            value: y,
        })
    }
}

/// Finds `lo < hi` with `below(lo)` true and `below(hi)` false, starting from
/// `[-1, 1]` and doubling outwards.
fn bracket(below: impl Fn(f64) -> bool) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut it = 0;
    while !below(lo) {
        lo *= 2.0;
        it += 1;
        if it > MAX_ITERATIONS {
            return Err(Error::NonConvergence {
                what: "generalized inverse bracket (lower)",
                iterations: it,
            });
        }
    }
    it = 0;
    while below(hi) {
        hi *= 2.0;
        it += 1;
        if it > MAX_ITERATIONS {
            return Err(Error::NonConvergence {
                what: "generalized inverse bracket (upper)",
                iterations: it,
            });
        }
    }
    Ok((lo, hi))
}

fn bisect(mut lo: f64, mut hi: f64, below: impl Fn(f64) -> bool) -> (f64, f64) {
    for _ in 0..MAX_ITERATIONS {
        if hi - lo <= INTERVAL_TOL * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Moves a closed-form quantile by a few ulps towards the smallest float of
/// `{s | inside(s)}`. Rounding in the closed form can otherwise put it on the
/// wrong side of a sample with the same CDF value.
fn polish(q: f64, inside: impl Fn(f64) -> bool) -> f64 {
    const MAX_ULPS: usize = 64;
    if !q.is_finite() {
        return q;
    }
    let mut q = q;
    for _ in 0..MAX_ULPS {
        if inside(q) {
            break;
        }
        q = q.next_up();
    }
    for _ in 0..MAX_ULPS {
        let next = q.next_down();
        if !inside(next) {
            break;
        }
        q = next;
    }
    q
}

/// `inf{s | F(s) >= y}`.
///
/// Uses the law's exact quantile when it has one. Otherwise returns the
/// lower end of the final bisection bracket, so the result never exceeds the
/// exact infimum and pathwise lower couplings stay valid under rounding.
pub fn inverse_cdf_inf<F: DominatingLaw + ?Sized>(y: f64, f: &F) -> Result<f64> {
    check_uniform_draw(y)?;
    if let Some(q) = f.quantile_inf(y) {
        return Ok(polish(q, |s| f.cdf(s) >= y));
    }
    let below = |s: f64| f.cdf(s) < y;
    let (lo, hi) = bracket(below)?;
    Ok(bisect(lo, hi, below).0)
}

/// `sup{s | F(s) <= y}`.
///
/// Falls back to the upper end of the final bracket, so the result is never
/// below the exact supremum.
pub fn inverse_cdf_sup<F: DominatingLaw + ?Sized>(y: f64, f: &F) -> Result<f64> {
    check_uniform_draw(y)?;
    if let Some(q) = f.quantile_sup(y) {
        // sup{F <= y} = inf{F > y}
        return Ok(polish(q, |s| f.cdf(s) > y));
    }
    let below = |s: f64| f.cdf(s) <= y;
    let (lo, hi) = bracket(below)?;
    Ok(bisect(lo, hi, below).1)
}

/// Uniform draws strictly inside `(0, 1)` from a seeded ChaCha8 stream.
pub struct OpenUniform {
    rng: ChaCha8Rng,
}

impl OpenUniform {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

/// Stream index reserved for the auxiliary `ξ` sequence of the couplings.
pub const COUPLING_STREAM: u64 = 0x5eed_c0de;

fn couple<G: ConditionalCdf + ?Sized>(
    xs: &[f64],
    g: &G,
    seed: u64,
    invert: impl Fn(f64) -> Result<f64>,
    settle: impl Fn(f64, f64, f64) -> f64,
    holds: impl Fn(f64, f64) -> bool,
) -> Result<Vec<f64>> {
    let mut xi = OpenUniform::new(seed, COUPLING_STREAM);
    let mut zs = Vec::with_capacity(xs.len());
    for (n, &x) in xs.iter().enumerate() {
        let y = uniformize(x, &xs[..n], xi.next(), g)?;
        let z = settle(invert(y)?, x, y);
        if !holds(x, z) {
            return Err(Error::CouplingViolation { index: n, x, z });
        }
        zs.push(z);
    }
    Ok(zs)
}

/// Couples `xs` with an i.i.d. `F` sequence `Z` satisfying `X_n <= Z_n`.
///
/// Valid when `P{X_n >= s | history} <= P{X > s}` for all `s`; a pathwise
/// violation is reported as [`Error::CouplingViolation`].
pub fn dominated_coupling_upper<G, F>(xs: &[f64], g: &G, f: &F, seed: u64) -> Result<Vec<f64>>
where
    G: ConditionalCdf + ?Sized,
    F: DominatingLaw + ?Sized,
{
    // x belongs to {F <= y} whenever F(x) <= y, so the supremum is at least x
    // even where the computed CDF wobbles by an ulp
    let settle = |z: f64, x: f64, y: f64| if f.cdf(x) <= y { z.max(x) } else { z };
    couple(xs, g, seed, |y| inverse_cdf_sup(y, f), settle, |x, z| x <= z)
}

/// Couples `xs` with an i.i.d. `F` sequence `Z` satisfying `X_n >= Z_n`.
///
/// Valid when `P{X_n > s | history} >= P{X > s}`. `X_n = +inf` always
/// satisfies the inequality.
pub fn dominated_coupling_lower<G, F>(xs: &[f64], g: &G, f: &F, seed: u64) -> Result<Vec<f64>>
where
    G: ConditionalCdf + ?Sized,
    F: DominatingLaw + ?Sized,
{
    let settle = |z: f64, x: f64, y: f64| if f.cdf(x) >= y { z.min(x) } else { z };
    couple(xs, g, seed, |y| inverse_cdf_inf(y, f), settle, |x, z| x >= z)
}
