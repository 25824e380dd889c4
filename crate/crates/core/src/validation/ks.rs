//! Kolmogorov-Smirnov distances.

use crate::error::{Error, Result};

fn sorted(xs: &[f64], what: &str) -> Result<Vec<f64>> {
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: xs.len() });
    }
    if let Some(i) = xs.iter().position(|x| x.is_nan()) {
        return Err(Error::InvalidArgument(format!("{what} sample {i} is NaN")));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup_x |F_a(x) - F_b(x)|` over the two empirical distribution functions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a, "first")?;
    let b = sorted(b, "second")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `sup_x |F_n(x) - F(x)|` for a continuous reference distribution function.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let xs = sorted(xs, "")?;
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max))
}
