//! Sampling helpers: truncated inverse-gamma, log-space categorical draws and
//! log-scale Dirichlet weights.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::{gamma_lr, gamma_ur};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Below this interval mass the draw is clamped to a bound instead of sampled.
pub const TRUNCATION_MASS_FLOOR: f64 = 1e-12;

#[inline]
pub fn log_normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * r * r / var
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Draw an index with probability proportional to `exp(log_w)`.
///
/// Returns `None` when every weight is zero or not finite.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Option<usize> {
    let m = log_w
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let mut total = 0.0;
    let w: Vec<f64> = log_w
        .iter()
        .map(|&v| {
            let e = if v.is_nan() { 0.0 } else { (v - m).exp() };
            total += e;
            e
        })
        .collect();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return Some(i);
        }
        u -= wi;
    }
    // Rounding can leave u marginally above the last positive weight.
    w.iter().rposition(|&x| x > 0.0)
}

pub fn standard_normals<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    (0..p).map(|_| StandardNormal.sample(rng)).collect()
}

/// Log of a Gamma(shape, 1) variate, stable for very small shapes where the
/// variate itself underflows.
pub fn log_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("positive shape");
        let x: f64 = g.sample(rng);
        x.ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape");
        let x: f64 = g.sample(rng);
        let u: f64 = rng.random::<f64>();
        x.ln() + u.max(f64::MIN_POSITIVE).ln() / shape
    }
}

/// Dirichlet draw returned as normalized probabilities. Components whose
/// weight underflows come back as exact zeros.
pub fn dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = concentration
        .iter()
        .map(|&a| log_gamma_variate(a, rng))
        .collect();
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

#[derive(Debug, Clone)]
enum Mode {
    Reject(Gamma<f64>),
    /// Inverse CDF on the precision scale; `upper` selects the upper-tail function.
    Inverse { lo_cdf: f64, hi_cdf: f64, upper: bool },
    Clamp(f64),
}

/// Inverse-gamma(shape, rate) restricted to `[lo, hi]`.
///
/// Works on the precision `τ = 1/σ²`, which is Gamma(shape, rate). When the
/// interval holds a reasonable share of the mass the sampler draws from the
/// untruncated law and rejects; otherwise it inverts the regularized
/// incomplete gamma function by bisection. Intervals carrying less than
/// [`TRUNCATION_MASS_FLOOR`] clamp to the bound nearest the mode.
#[derive(Debug, Clone)]
pub struct TruncInvGamma {
    shape: f64,
    rate: f64,
    lo: f64,
    hi: f64,
    mode: Mode,
}

impl TruncInvGamma {
    pub fn new(shape: f64, rate: f64, lo: f64, hi: f64) -> Self {
        assert!(shape > 0.0 && rate > 0.0, "inverse-gamma needs positive shape and rate");
        assert!(lo > 0.0 && hi >= lo, "truncation bounds must satisfy 0 < lo <= hi");
        // precision bounds
        let t_lo = 1.0 / hi;
        let t_hi = 1.0 / lo;
        let p_lo = gamma_lr(shape, rate * t_lo);
        let p_hi = gamma_lr(shape, rate * t_hi);
        let q_lo = gamma_ur(shape, rate * t_lo);
        let q_hi = gamma_ur(shape, rate * t_hi);
        let upper = p_lo > 0.5;
        let mass = if upper { q_lo - q_hi } else { p_hi - p_lo };
        let mode = if !(mass > TRUNCATION_MASS_FLOOR) || hi == lo {
            let ig_mode = rate / (shape + 1.0);
            let v = if (ig_mode - lo).abs() <= (ig_mode - hi).abs() { lo } else { hi };
            Mode::Clamp(v)
        } else if mass >= 0.25 {
            Mode::Reject(Gamma::new(shape, 1.0 / rate).expect("valid gamma"))
        } else if upper {
            Mode::Inverse { lo_cdf: q_hi, hi_cdf: q_lo, upper }
        } else {
            Mode::Inverse { lo_cdf: p_lo, hi_cdf: p_hi, upper }
        };
        Self { shape, rate, lo, hi, mode }
    }

    pub fn is_clamped(&self) -> bool {
        matches!(self.mode, Mode::Clamp(_))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.mode {
            Mode::Clamp(v) => *v,
            Mode::Reject(g) => {
                for _ in 0..10_000 {
                    let tau: f64 = g.sample(rng);
                    let s2 = 1.0 / tau;
                    if s2 >= self.lo && s2 <= self.hi {
                        return s2;
                    }
                }
                self.inverse_draw(rng)
            }
            Mode::Inverse { .. } => self.inverse_draw(rng),
        }
    }

    fn inverse_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo_cdf, hi_cdf, upper) = match self.mode {
            Mode::Inverse { lo_cdf, hi_cdf, upper } => (lo_cdf, hi_cdf, upper),
            _ => {
                let t_lo = 1.0 / self.hi;
                let t_hi = 1.0 / self.lo;
                (
                    gamma_lr(self.shape, self.rate * t_lo),
                    gamma_lr(self.shape, self.rate * t_hi),
                    false,
                )
            }
        };
        let u = lo_cdf + rng.random::<f64>() * (hi_cdf - lo_cdf);
        // bisection on log precision; cdf(τ) is increasing, the upper tail decreasing
        let mut a = (1.0 / self.hi).ln();
        let mut b = (1.0 / self.lo).ln();
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let x = self.rate * mid.exp();
            let below = if upper {
                gamma_ur(self.shape, x) > u
            } else {
                gamma_lr(self.shape, x) < u
            };
            if below {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-13 {
                break;
            }
        }
        let s2 = 1.0 / (0.5 * (a + b)).exp();
        s2.clamp(self.lo, self.hi)
    }
}
