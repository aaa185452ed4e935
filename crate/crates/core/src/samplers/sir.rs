use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{invalid, Error, Result};
use crate::posterior::DrawSet;
use crate::rng::SmiRng;

/// Multinomial resampling of `proposal` rows with weights `exp(logw - max logw)`.
pub fn sir_resample(
    proposal: &DrawSet,
    log_weights: &[f64],
    n_out: usize,
    rng: &mut SmiRng,
) -> Result<DrawSet> {
    if log_weights.len() != proposal.n_rows() {
        return invalid(format!(
            "{} log-weights for {} proposal rows",
            log_weights.len(),
            proposal.n_rows()
        ));
    }
    if n_out == 0 {
        return invalid("n_out must be positive");
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return invalid("log-weights must not be NaN or +inf");
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    let w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let index = WeightedIndex::new(&w).map_err(|_| Error::DegenerateWeights)?;
    let mut out = Vec::with_capacity(n_out * proposal.width());
    for _ in 0..n_out {
        out.extend_from_slice(proposal.row(index.sample(rng)));
    }
    DrawSet::from_rows(out, proposal.d1(), proposal.d2(), proposal.label())
}
