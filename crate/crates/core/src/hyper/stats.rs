//! Weighted sample summaries.

use crate::error::{Result, SmcError};

const KDE_BINS: usize = 1024;

pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let w: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / w
}

pub fn weighted_sd(values: &[f64], weights: &[f64]) -> f64 {
    let m = weighted_mean(values, weights);
    let w: f64 = weights.iter().sum();
    (values.iter().zip(weights).map(|(v, w)| w * (v - m).powi(2)).sum::<f64>() / w).sqrt()
}

/// Inverse of the weighted empirical cdf at `q` in `[0, 1]`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    Ok(weighted_quantiles(values, weights, &[q])?[0])
}

/// Several quantiles from one sort; `qs` must be ascending.
pub fn weighted_quantiles(values: &[f64], weights: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(SmcError::Empty("no weighted values".into()));
    }
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(qs.len());
    let mut acc = 0.0;
    let mut it = pairs.iter();
    let mut cur = pairs[0].0;
    for &q in qs {
        while acc < q {
            match it.next() {
                Some(&(v, w)) => {
                    acc += w / total;
                    cur = v;
                }
                None => break,
            }
        }
        out.push(cur);
    }
    Ok(out)
}

const IQR_BINS: usize = 8192;

/// Weighted quartiles read off a fine histogram over `[lo, hi]`; exact to
/// within `(hi - lo) / IQR_BINS`, without sorting.
fn binned_iqr(values: &[f64], weights: &[f64], lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let scale = IQR_BINS as f64 / (hi - lo);
    let mut hist = vec![0.0; IQR_BINS];
    for (&v, &w) in values.iter().zip(weights) {
        hist[(((v - lo) * scale) as usize).min(IQR_BINS - 1)] += w;
    }
    let total: f64 = hist.iter().sum();
    let mut q = [0.0; 2];
    let mut acc = 0.0;
    let mut k = 0;
    for (i, h) in hist.iter().enumerate() {
        acc += h / total;
        while k < 2 && acc >= [0.25, 0.75][k] {
            q[k] = lo + (i as f64 + 0.5) / scale;
            k += 1;
        }
    }
    q[1] - q[0]
}

/// Silverman's rule-of-thumb bandwidth with the Kish effective sample size.
pub fn silverman_bandwidth(values: &[f64], weights: &[f64]) -> Result<f64> {
    Ok(Summary::of(values, weights)?.bandwidth(values, weights))
}

/// Weighted spread, effective sample size and range.
struct Summary {
    sd: f64,
    n_eff: f64,
    lo: f64,
    hi: f64,
}

impl Summary {
    fn of(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(SmcError::Empty("no weighted values".into()));
        }
        let (mut w_sum, mut w2_sum, mut wv_sum) = (0.0, 0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (&v, &w) in values.iter().zip(weights) {
            lo = lo.min(v);
            hi = hi.max(v);
            w_sum += w;
            w2_sum += w * w;
            wv_sum += w * v;
        }
        let mean = wv_sum / w_sum;
        let m2: f64 = values.iter().zip(weights).map(|(v, w)| w * (v - mean) * (v - mean)).sum();
        Ok(Self { sd: (m2 / w_sum).max(0.0).sqrt(), n_eff: w_sum * w_sum / w2_sum, lo, hi })
    }

    fn bandwidth(&self, values: &[f64], weights: &[f64]) -> f64 {
        let iqr = binned_iqr(values, weights, self.lo, self.hi);
        let spread = if iqr > 0.0 { self.sd.min(iqr / 1.34) } else { self.sd };
        0.9 * spread * self.n_eff.powf(-0.2)
    }
}

/// Mode of a weighted Gaussian kernel density estimate, evaluated on a
/// linearly binned grid.
pub fn kde_mode(values: &[f64], weights: &[f64]) -> Result<f64> {
    let summary = Summary::of(values, weights)?;
    let h = summary.bandwidth(values, weights);
    let (lo, hi) = (summary.lo, summary.hi);
    if !(h > 0.0) || hi == lo {
        return Ok(weighted_mean(values, weights));
    }
    let (a, b) = (lo - 3.0 * h, hi + 3.0 * h);
    let step = (b - a) / (KDE_BINS - 1) as f64;
    let mut counts = vec![0.0; KDE_BINS];
    for (&v, &w) in values.iter().zip(weights) {
        let pos = (v - a) / step;
        let k = (pos.floor() as usize).min(KDE_BINS - 2);
        let frac = pos - k as f64;
        counts[k] += w * (1.0 - frac);
        counts[k + 1] += w * frac;
    }
    let reach = ((4.0 * h / step).ceil() as usize).min(KDE_BINS);
    let kernel: Vec<f64> = (0..=reach)
        .map(|j| (-0.5 * (j as f64 * step / h).powi(2)).exp())
        .collect();
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..KDE_BINS {
        let from = i.saturating_sub(reach);
        let to = (i + reach).min(KDE_BINS - 1);
        let d: f64 = (from..=to).map(|j| counts[j] * kernel[i.abs_diff(j)]).sum();
        if d > best.0 {
            best = (d, i);
        }
    }
    Ok(a + best.1 as f64 * step)
}
