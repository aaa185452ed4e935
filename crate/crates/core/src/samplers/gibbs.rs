use std::ops::Range;

use super::McmcConfig;
use crate::error::{invalid, Error, Result};
use crate::posterior::{DrawLabel, DrawSet};
use crate::rng::{rng_from_seed, SmiRng};

type Update<'a> = Box<dyn FnMut(&[f64], &mut SmiRng) -> Vec<f64> + 'a>;

/// One block of a systematic-scan sampler: `update` sees the full state and
/// returns new values for `range`.
pub struct GibbsBlock<'a> {
    pub name: String,
    pub range: Range<usize>,
    update: Update<'a>,
}

impl<'a> GibbsBlock<'a> {
    pub fn new(
        name: impl Into<String>,
        range: Range<usize>,
        update: impl FnMut(&[f64], &mut SmiRng) -> Vec<f64> + 'a,
    ) -> Self {
        Self { name: name.into(), range, update: Box::new(update) }
    }
}

/// Systematic-scan Gibbs / Metropolis-within-Gibbs over `blocks`.
///
/// The state starts at `cfg.init`; columns `0..d1` form θ₁ in the output.
pub fn gibbs_compose(
    blocks: &mut [GibbsBlock<'_>],
    cfg: &McmcConfig,
    d1: usize,
    label: DrawLabel,
) -> Result<DrawSet> {
    cfg.validate()?;
    let width = cfg.init.len();
    if d1 == 0 || d1 > width {
        return invalid(format!("theta1 width {d1} invalid for state of length {width}"));
    }
    for b in blocks.iter() {
        if b.range.end > width || b.range.is_empty() {
            return invalid(format!("block `{}` range {:?} outside state of length {width}", b.name, b.range));
        }
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut state = cfg.init.clone();
    let mut out = Vec::with_capacity(cfg.n_kept() * width);

    for iter in 0..cfg.n_iter {
        for b in blocks.iter_mut() {
            let new = (b.update)(&state, &mut rng);
            if new.len() != b.range.len() {
                return invalid(format!(
                    "block `{}` returned {} values, expected {}",
                    b.name,
                    new.len(),
                    b.range.len()
                ));
            }
            if new.iter().any(|v| !v.is_finite()) {
                return Err(Error::SamplerDivergence { block: b.name.clone(), iteration: iter });
            }
            state[b.range.clone()].copy_from_slice(&new);
        }
        if cfg.keeps(iter) {
            out.extend_from_slice(&state);
        }
    }
    DrawSet::from_rows(out, d1, width - d1, label)
}
