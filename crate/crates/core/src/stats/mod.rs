//! Two-sample tests and effect sizes used to compare schedulers.

mod special;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use special::{inc_beta, ln_gamma, normal_sf, t_two_sided};

use crate::error::{Error, Result};

/// Largest pooled size handled by exact enumeration.
pub const MW_EXACT_MAX: usize = 12;
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats(format!("Welch test needs at least 2 values per sample, got {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if diff == 0.0 {
            WelchResult { t: 0.0, df, p: 1.0 }
        } else {
            WelchResult { t: diff.signum() * f64::INFINITY, df, p: 0.0 }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchResult { t, df, p: t_two_sided(t, df) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U for the first sample.
    pub u: f64,
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled values.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney U test, two-sided. Exact over all relabellings of the pooled
/// midranks up to [`MW_EXACT_MAX`] observations, normal approximation with
/// tie and continuity correction beyond.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Stats("Mann-Whitney needs non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Stats("Mann-Whitney input contains NaN".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (na, nb) = (a.len(), b.len());
    let offset = (na * (na + 1)) as f64 / 2.0;
    let u = ranks[..na].iter().sum::<f64>() - offset;
    let centre = (na * nb) as f64 / 2.0;
    let dist = (u - centre).abs();
    let n = na + nb;
    if n <= MW_EXACT_MAX {
        let p = exact_p(&ranks, na, offset, centre, dist);
        return Ok(MannWhitney { u, p, exact: true });
    }
    let mut ties = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < n {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        ties += (j * j * j - j) as f64;
        i += j;
    }
    let nf = n as f64;
    let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    let p = if var <= 0.0 { 1.0 } else { (2.0 * normal_sf(((dist - 0.5).max(0.0)) / var.sqrt())).min(1.0) };
    Ok(MannWhitney { u, p, exact: false })
}

fn exact_p(ranks: &[f64], na: usize, offset: f64, centre: f64, dist: f64) -> f64 {
    let n = ranks.len();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let r: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        total += 1;
        if ((r - offset) - centre).abs() >= dist - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Standardised mean difference with the pooled (n-1 weighted) SD.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats("Cohen's d needs at least 2 values per sample".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0);
    let diff = mean(a) - mean(b);
    if pooled == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY });
    }
    Ok(diff / pooled.sqrt())
}

/// Percentile bootstrap interval for `mean(a) - mean(b)`.
pub fn bootstrap_ci(a: &[f64], b: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() || resamples == 0 {
        return Err(Error::Stats("bootstrap needs non-empty samples and at least one resample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Stats(format!("confidence level {level} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resample_mean =
        |x: &[f64], rng: &mut ChaCha8Rng| (0..x.len()).map(|_| x[rng.random_range(0..x.len())]).sum::<f64>() / x.len() as f64;
    let mut diffs: Vec<f64> = (0..resamples).map(|_| resample_mean(a, &mut rng) - resample_mean(b, &mut rng)).collect();
    diffs.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (resamples - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        diffs[lo] + (diffs[hi] - diffs[lo]) * (pos - lo as f64)
    };
    let tail = (1.0 - level) / 2.0;
    Ok((q(tail), q(1.0 - tail)))
}

/// One row of the method comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub delta_reward: f64,
    pub cohens_d: f64,
    pub welch_p: f64,
    pub mann_whitney_p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn compare(label: &str, a: &[f64], b: &[f64], seed: u64) -> Result<Comparison> {
    let (ci_lo, ci_hi) = bootstrap_ci(a, b, BOOTSTRAP_RESAMPLES, 0.95, seed)?;
    Ok(Comparison {
        label: label.to_string(),
        delta_reward: mean(a) - mean(b),
        cohens_d: cohens_d(a, b)?,
        welch_p: welch_t(a, b)?.p,
        mann_whitney_p: mann_whitney_u(a, b)?.p,
        ci_lo,
        ci_hi,
    })
}

pub const COMPARISON_CSV_HEADER: &str = "comparison,delta_reward,cohens_d,welch_p,mann_whitney_p,ci_lo,ci_hi";

pub fn write_comparison_csv<W: Write>(mut w: W, rows: &[Comparison], header_comment: Option<&str>) -> Result<()> {
    if let Some(c) = header_comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{COMPARISON_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.4},{:.3e},{:.3e},{:.6},{:.6}",
            r.label, r.delta_reward, r.cohens_d, r.welch_p, r.mann_whitney_p, r.ci_lo, r.ci_hi
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: [f64; 3] = [1.0, 2.0, 3.0];
    const B: [f64; 3] = [4.0, 5.0, 6.0];

    #[test]
    fn welch_closed_form() {
        let r = welch_t(&A, &B).unwrap();
        assert!((r.t + 3.0 * 1.5f64.sqrt()).abs() < 1e-12);
        assert!((r.df - 4.0).abs() < 1e-12);
        let s = welch_t(&B, &A).unwrap();
        assert_eq!(s.t, -r.t);
        assert_eq!(s.p, r.p);
    }

    #[test]
    fn welch_degenerate() {
        let r = welch_t(&A, &A).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let c = welch_t(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!(c.p, 1.0);
        assert_eq!(welch_t(&[1.0, 1.0], &[2.0, 2.0]).unwrap().p, 0.0);
        assert!(welch_t(&[1.0], &A).is_err());
    }

    #[test]
    fn midrank_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn mann_whitney_examples() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        // only 2 of the 6 labellings are as extreme
        assert!((r.p - 2.0 / 6.0).abs() < 1e-12);
        let inter = mann_whitney_u(&[1.0, 4.0], &[2.0, 3.0]).unwrap();
        assert_eq!(inter.u, 2.0);
        assert_eq!(inter.p, 1.0);
    }

    #[test]
    fn exact_and_normal_agree_at_boundary() {
        let a = [1.1, 2.5, 3.3, 4.8, 6.0, 9.1];
        let b = [2.0, 5.2, 7.7, 8.1, 10.4, 11.0];
        let exact = mann_whitney_u(&a, &b).unwrap();
        assert!(exact.exact);
        let mut a2 = a.to_vec();
        a2.push(0.5);
        // a 13th observation crosses into the approximation
        assert!(!mann_whitney_u(&a2, &b).unwrap().exact);
        // normal approximation on the same 12 values
        let na = 6.0;
        let var = na * na / 12.0 * 13.0;
        let approx = 2.0 * normal_sf(((exact.u - 18.0).abs() - 0.5) / f64::sqrt(var));
        assert!((exact.p - approx).abs() < 0.02, "{} vs {approx}", exact.p);
    }

    #[test]
    fn cohens_d_examples() {
        assert!((cohens_d(&A, &B).unwrap() + 3.0).abs() < 1e-12);
        assert_eq!(cohens_d(&A, &A).unwrap(), 0.0);
        let scale = |x: &[f64]| x.iter().map(|v| v * 7.5).collect::<Vec<_>>();
        assert!((cohens_d(&scale(&A), &scale(&B)).unwrap() + 3.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_constant_is_degenerate() {
        let (lo, hi) = bootstrap_ci(&[4.0; 6], &[1.5; 9], 1000, 0.95, 1).unwrap();
        assert_eq!((lo, hi), (2.5, 2.5));
    }

    #[test]
    fn bootstrap_contains_point_estimate_and_is_seeded() {
        let a = [3.1, 2.7, 4.0, 3.3, 2.9, 3.8];
        let b = [1.2, 2.2, 1.9, 0.7, 1.5];
        let ci = bootstrap_ci(&a, &b, 5000, 0.95, 3).unwrap();
        let d = mean(&a) - mean(&b);
        assert!(ci.0 <= d && d <= ci.1);
        assert!(ci.0 > 0.0);
        assert_eq!(ci, bootstrap_ci(&a, &b, 5000, 0.95, 3).unwrap());
    }

    #[test]
    fn comparison_csv() {
        let row = compare("x vs y", &B, &A, 0).unwrap();
        let mut buf = Vec::new();
        write_comparison_csv(&mut buf, &[row], None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(COMPARISON_CSV_HEADER));
        assert!(text.lines().nth(1).unwrap().starts_with("x vs y,3.000000,3.0000"));
    }
}
