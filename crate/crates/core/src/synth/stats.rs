//! Chi-square goodness of fit.

use serde::{Deserialize, Serialize};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Lower regularized incomplete gamma by its power series; converges fast for x < a + 1.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Upper regularized incomplete gamma by modified Lentz continued fraction; for x >= a + 1.
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    let tiny = f64::MIN_POSITIVE / EPS;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper regularized incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

/// Survival function P(X > x) of a chi-square variable with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    gamma_q(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Observed and expected counts after small-bin merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedBins {
    /// Original category indices folded into each bin.
    pub members: Vec<Vec<usize>>,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
}

/// Folds bins with expected count below `min_expected` into an adjacent bin
/// until every bin qualifies or one bin remains. The smallest offending bin
/// goes first; it joins its nonzero neighbour, the smaller of the two when
/// both are nonzero (left on ties).
pub fn merge_small_bins(observed: &[f64], expected: &[f64], min_expected: f64) -> MergedBins {
    assert_eq!(observed.len(), expected.len());
    let mut members: Vec<Vec<usize>> = (0..observed.len()).map(|i| vec![i]).collect();
    let mut obs = observed.to_vec();
    let mut exp = expected.to_vec();
    while exp.len() > 1 {
        let Some(i) = (0..exp.len())
            .filter(|&i| exp[i] < min_expected)
            .min_by(|&a, &b| exp[a].total_cmp(&exp[b]))
        else {
            break;
        };
        let left = i.checked_sub(1);
        let right = (i + 1 < exp.len()).then_some(i + 1);
        let j = match (left, right) {
            (Some(l), Some(r)) => match (exp[l] > 0.0, exp[r] > 0.0) {
                (true, false) => l,
                (false, true) => r,
                _ if exp[r] < exp[l] => r,
                _ => l,
            },
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!("loop requires two bins"),
        };
        let (keep, gone) = (i.min(j), i.max(j));
        let moved = members.remove(gone);
        members[keep].extend(moved);
        let o = obs.remove(gone);
        obs[keep] += o;
        let e = exp.remove(gone);
        exp[keep] += e;
    }
    MergedBins { members, observed: obs, expected: exp }
}

/// Pearson statistic, degrees of freedom and p-value over prepared bins.
pub fn chi_square_statistic(observed: &[f64], expected: &[f64]) -> (f64, usize, f64) {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&o, &e)| (o - e) * (o - e) / e)
        .sum();
    let df = observed.len().saturating_sub(1);
    (stat, df, chi_square_sf(stat, df))
}
