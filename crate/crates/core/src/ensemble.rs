//! Ensemble statistics and the spread-skill relation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSeq;

/// Per-cell median and sample standard deviation (`n − 1` denominator).
/// Even member counts take the mean of the two central values.
pub fn ensemble_stats(members: &[FieldSeq]) -> Result<(FieldSeq, FieldSeq)> {
    if members.len() < 2 {
        return Err(Error::Invalid(format!("ensemble needs at least 2 members, got {}", members.len())));
    }
    let first = &members[0];
    if let Some(m) = members.iter().find(|m| !m.same_shape(first)) {
        return Err(Error::shape("ensemble_stats", format!("{:?} vs {:?}", m.dims(), first.dims())));
    }
    let n = members.len();
    let len = first.data().len();
    let mut median = vec![0.0; len];
    let mut std = vec![0.0; len];
    let mut vals = vec![0.0; n];
    for c in 0..len {
        for (v, m) in vals.iter_mut().zip(members) {
            *v = m.data()[c];
        }
        // Shifted by the first member so identical values give exactly zero spread.
        let shift = vals[0];
        let mean = shift + vals.iter().map(|v| v - shift).sum::<f64>() / n as f64;
        std[c] = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
        vals.sort_by(f64::total_cmp);
        median[c] = if n % 2 == 1 { vals[n / 2] } else { 0.5 * (vals[n / 2 - 1] + vals[n / 2]) };
    }
    let (t, h, w) = first.dims();
    Ok((FieldSeq::new(t, h, w, median, first.grid)?, FieldSeq::new(t, h, w, std, first.grid)?))
}

/// Coefficient of determination of the least-squares line of `y` on `x`.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::shape("r_squared", format!("{} vs {} samples", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::Invalid("ensemble spread has zero variance".into()));
    }
    if syy == 0.0 {
        return Ok(1.0);
    }
    Ok((sxy * sxy / (sxx * syy)).clamp(0.0, 1.0))
}

/// R² of `|error|` against the ensemble standard deviation over all cells
/// and days.
pub fn uq_correlation(std: &FieldSeq, abs_error: &FieldSeq) -> Result<f64> {
    if !std.same_shape(abs_error) {
        return Err(Error::shape("uq_correlation", format!("{:?} vs {:?}", std.dims(), abs_error.dims())));
    }
    r_squared(std.data(), abs_error.data())
}

/// R² after averaging both fields over days, one sample per cell.
pub fn uq_correlation_time_mean(std: &FieldSeq, abs_error: &FieldSeq) -> Result<f64> {
    if !std.same_shape(abs_error) {
        return Err(Error::shape("uq_correlation", format!("{:?} vs {:?}", std.dims(), abs_error.dims())));
    }
    let mean = |f: &FieldSeq| -> Vec<f64> {
        let t = f.len_t() as f64;
        let mut acc = vec![0.0; f.plane_len()];
        for k in 0..f.len_t() {
            for (a, v) in acc.iter_mut().zip(f.frame(k)) {
                *a += v / t;
            }
        }
        acc
    };
    r_squared(&mean(std), &mean(abs_error))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UqReport {
    pub r2_pointwise: f64,
    pub r2_time_mean: f64,
}

/// Both R² variants for an ensemble against the truth, using `|median − truth|`.
pub fn uq_report(median: &FieldSeq, std: &FieldSeq, truth: &FieldSeq) -> Result<UqReport> {
    let abs_err = median.zip_map(truth, |a, b| (a - b).abs())?;
    Ok(UqReport {
        r2_pointwise: uq_correlation(std, &abs_err)?,
        r2_time_mean: uq_correlation_time_mean(std, &abs_err)?,
    })
}

/// Rejects repeated seeds.
pub fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!("an ensemble needs at least 2 seeds, got {}", seeds.len())));
    }
    let mut s = seeds.to_vec();
    s.sort_unstable();
    if let Some(w) = s.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate ensemble seed {}", w[0])));
    }
    Ok(())
}
