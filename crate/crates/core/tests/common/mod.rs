//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

/// Standard error of a chain average from `batches` non-overlapping batches.
pub fn batch_means_se(v: &[f64], batches: usize) -> f64 {
    let len = v.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| v[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64).collect();
    let mu = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Pearson goodness-of-fit p-value of `counts` against `probs`.
pub fn chi2_pvalue(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let df = (counts.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

/// Log density of an inverse-gamma variable.
pub fn ln_inv_gamma(s2: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - ln_gamma(a) - (a + 1.0) * s2.ln() - b / s2
}

/// Posterior moments of one-covariate Bayesian regression with β ~ N(0, τ²)
/// and σ² ~ IG(a0, b0) restricted to `[lo, hi]`, by a product-rule grid on
/// (β, log σ²). Returns (E β, Var β, E σ², Var σ²).
pub fn regression_posterior_moments(x: &[f64], y: &[f64], tau2: f64, a0: f64, b0: f64, lo: f64, hi: f64) -> [f64; 4] {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let n = x.len() as f64;
    let b_hat = sxy / sxx;
    let spread = 12.0 * (syy / n / sxx).sqrt().max(1e-3);
    let (nb, nu) = (1201, 1201);
    let (b_lo, b_hi) = (b_hat - spread, b_hat + spread);
    let (u_lo, u_hi) = (lo.ln().max(-12.0), hi.ln().min(8.0));
    let mut pts = Vec::with_capacity(nb * nu);
    for i in 0..nb {
        let b = b_lo + (b_hi - b_lo) * i as f64 / (nb - 1) as f64;
        let rss = syy - 2.0 * b * sxy + b * b * sxx;
        for j in 0..nu {
            let u = u_lo + (u_hi - u_lo) * j as f64 / (nu - 1) as f64;
            let s2 = u.exp();
            let lp = -b * b / (2.0 * tau2) + ln_inv_gamma(s2, a0, b0) + u - n / 2.0 * u - rss / (2.0 * s2);
            pts.push((b, s2, lp));
        }
    }
    let m = pts.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
    let mut acc = [0.0; 5];
    for (b, s2, lp) in pts {
        let w = (lp - m).exp();
        acc[0] += w;
        acc[1] += w * b;
        acc[2] += w * b * b;
        acc[3] += w * s2;
        acc[4] += w * s2 * s2;
    }
    let eb = acc[1] / acc[0];
    let es = acc[3] / acc[0];
    [eb, acc[2] / acc[0] - eb * eb, es, acc[4] / acc[0] - es * es]
}

/// Mean of IG(a, b) restricted to `[lo, hi]` by quadrature on log σ².
pub fn trunc_inv_gamma_mean(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    let steps = 200_000;
    let (u0, u1) = (lo.ln(), hi.ln());
    let h = (u1 - u0) / steps as f64;
    let (mut w, mut m) = (0.0, 0.0);
    for i in 0..=steps {
        let u = u0 + h * i as f64;
        let s = u.exp();
        let c = if i == 0 || i == steps { 0.5 } else { 1.0 };
        let d = c * (ln_inv_gamma(s, a, b) + u).exp();
        w += d;
        m += d * s;
    }
    m / w
}

/// All set partitions of `0..n`, as label vectors in canonical form.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=k {
            cur.push(c);
            rec(i + 1, n, cur, k.max(c + 1), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), 0, &mut out);
    out
}

/// Relabel a partition in order of first appearance.
pub fn canonical(z: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    z.iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect()
}

/// `V_n(t)` under a zero-truncated Poisson(λ) on K, by direct summation.
pub fn vn_poisson_direct(t: usize, n: usize, lambda: f64, alpha: f64) -> f64 {
    let norm = 1.0 - (-lambda).exp();
    let mut s = 0.0;
    for k in t..400 {
        let kf = k as f64;
        let ln_pk = -lambda + kf * lambda.ln() - ln_gamma(kf + 1.0) - norm.ln();
        let ln_term = ln_pk + ln_gamma(kf + 1.0) - ln_gamma(kf - t as f64 + 1.0) + ln_gamma(alpha * kf)
            - ln_gamma(alpha * kf + n as f64);
        s += ln_term.exp();
    }
    s
}

/// Brute-force adjusted Rand index over all pairs.
pub fn ari_pairs(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut total) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            total += 1.0;
            if sa {
                only_a += 1.0;
            }
            if sb {
                only_b += 1.0;
            }
            if sa && sb {
                both += 1.0;
            }
        }
    }
    let expected = only_a * only_b / total;
    let max = 0.5 * (only_a + only_b);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// Purity by counting, for each predicted label, its most common true label.
pub fn purity_direct(pred: &[usize], truth: &[usize]) -> f64 {
    let labels: std::collections::BTreeSet<usize> = pred.iter().copied().collect();
    let mut hit = 0;
    for l in labels {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for (p, t) in pred.iter().zip(truth) {
            if *p == l {
                *counts.entry(*t).or_default() += 1;
            }
        }
        hit += counts.values().max().copied().unwrap_or(0);
    }
    hit as f64 / pred.len() as f64
}
