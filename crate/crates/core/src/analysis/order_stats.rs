//! Means of order statistics of independent, non-identical Gaussians.

use crate::distributions::PassageDistribution;
use crate::error::{numeric, Result};
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderStatOptions {
    /// Integration range is every component's mean ± `span_sd` standard deviations.
    pub span_sd: f64,
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Largest CDF mass tolerated outside the range before failing.
    pub tail_tolerance: f64,
}

impl Default for OrderStatOptions {
    fn default() -> Self {
        Self { span_sd: 8.0, panels: 32, nodes_per_panel: 16, tail_tolerance: 1e-9 }
    }
}

/// E[X_(j)] for j = 1..L.
pub fn order_statistic_means(dists: &[PassageDistribution]) -> Result<Vec<f64>> {
    order_statistic_means_with(dists, &OrderStatOptions::default())
}

pub fn order_statistic_means_with(dists: &[PassageDistribution], opts: &OrderStatOptions) -> Result<Vec<f64>> {
    if dists.is_empty() {
        return Err(crate::error::invalid("order statistics need at least one distribution"));
    }
    let l = dists.len();
    if l == 1 {
        return Ok(vec![dists[0].mean]);
    }
    let lo = dists.iter().map(|d| d.mean - opts.span_sd * d.std_dev()).fold(f64::INFINITY, f64::min);
    let hi = dists.iter().map(|d| d.mean + opts.span_sd * d.std_dev()).fold(f64::NEG_INFINITY, f64::max);
    let below = dists.iter().map(|d| d.cdf(lo)).fold(0.0, f64::max);
    let above = dists.iter().map(|d| 1.0 - d.cdf(hi)).fold(0.0, f64::max);
    if below > opts.tail_tolerance || above > opts.tail_tolerance {
        return Err(numeric(format!(
            "order-statistic range [{lo}, {hi}] misses tail mass ({below:e} below, {above:e} above)"
        )));
    }

    // Break the range at each component's bulk so narrow components are not
    // stepped over, then spread the panel budget by length.
    let mut cuts = vec![lo, hi];
    for d in dists {
        for k in [-4.0, -2.0, 0.0, 2.0, 4.0] {
            cuts.push(d.mean + k * d.std_dev());
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let rule = GaussLegendre::new(opts.nodes_per_panel);
    let mut cdfs = vec![0.0; l];
    let mut pmf = vec![0.0; l + 1];
    let mut acc = vec![0.0; l];
    let mut surv = vec![0.0; l];
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if b <= a {
            continue;
        }
        let panels = ((opts.panels as f64 * (b - a) / (hi - lo)).ceil() as usize).max(1);
        let width = (b - a) / panels as f64;
        for p in 0..panels {
            let pa = a + p as f64 * width;
            for (x, w) in rule.scaled(pa, pa + width) {
                survival_by_rank(dists, x, &mut cdfs, &mut pmf, &mut surv);
                for (slot, s) in acc.iter_mut().zip(&surv) {
                    *slot += w * s;
                }
            }
        }
    }
    Ok(acc.into_iter().map(|s| lo + s).collect())
}

// Fills `out[j]` with P(X_(j+1) > x) = P(fewer than j+1 components ≤ x).
fn survival_by_rank(dists: &[PassageDistribution], x: f64, cdfs: &mut [f64], pmf: &mut [f64], out: &mut [f64]) {
    for (c, d) in cdfs.iter_mut().zip(dists) {
        *c = d.cdf(x);
    }
    poisson_binomial(cdfs, pmf);
    let mut below = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        below += pmf[j];
        *o = below.min(1.0);
    }
}

/// pmf[k] = P(exactly k successes) for independent Bernoulli(p_i).
fn poisson_binomial(p: &[f64], pmf: &mut [f64]) {
    pmf.iter_mut().for_each(|v| *v = 0.0);
    pmf[0] = 1.0;
    for (i, &pi) in p.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            pmf[k] = pmf[k] * (1.0 - pi) + pmf[k - 1] * pi;
        }
        pmf[0] *= 1.0 - pi;
    }
}
