//! Reference solutions and distances used to check fitted posteriors.

pub mod ks;
pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::{sample_posterior, FitResult};

pub use ks::{ks_one_sample, ks_two_sample};
pub use oracle::{brute_force_posterior, Axis, Coord, GridSpec, OracleDensity, OracleMarginal};

/// Fit-versus-oracle agreement for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub coord: Coord,
    pub ks: f64,
    pub fit_mean: f64,
    pub oracle_mean: f64,
}

/// Draws `b` samples from `fit` and measures each oracle coordinate's
/// one-sample KS distance.
pub fn compare_fit_to_oracle(fit: &FitResult, oracle: &OracleDensity, b: usize, seed: u64) -> Result<Vec<MarginalCheck>> {
    let batch = sample_posterior(fit, b, seed)?;
    oracle
        .coords
        .iter()
        .enumerate()
        .map(|(i, &coord)| {
            let marg = oracle.marginal(i)?;
            let xs = match coord {
                Coord::Latent(c) => batch.latent_column(c),
                Coord::Hyper(j) => batch.hyper_column(j),
            };
            Ok(MarginalCheck {
                coord,
                ks: ks_one_sample(&xs, |x| marg.cdf_at(x))?,
                fit_mean: xs.iter().sum::<f64>() / xs.len() as f64,
                oracle_mean: marg.mean(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{fit, FitConfig};
    use crate::model::gaussian_scale;

    #[test]
    fn scale_model_matches_oracle() {
        let y = [0.3, -0.9, 1.4, 0.2, -0.5];
        let model = gaussian_scale(&y).unwrap();
        let f = fit(&model, &FitConfig { k: 7, ..Default::default() }).unwrap();
        let grid = GridSpec::around_fit(&f, 10.0, &[4001]).unwrap();
        let oracle = brute_force_posterior(&model, &[Coord::Hyper(0)], &grid).unwrap();
        let checks = compare_fit_to_oracle(&f, &oracle, 4000, 1).unwrap();
        assert!(checks[0].ks < 0.05, "{checks:?}");
        assert!((f.log_evidence - oracle.log_normalizer).abs() < 1e-3);
    }
}
