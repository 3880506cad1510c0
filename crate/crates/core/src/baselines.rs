//! Comparison estimators: one-sided collapse with a single-mark fit, and
//! combined inference by inverse-variance-weighted averaging of draws from
//! the two one-sided fits.

use crate::error::{Error, Result};
use crate::histories::{EncounterHistory, Event, ObservedData};
use crate::model::{EventLayer, Model};
use crate::sampler::{run_chains, Chain, SamplerConfig};
use crate::scalar::Real;

/// Which photograph side a collapse keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A collapsed one-sided dataset. Capture occasions are stored as the
/// simultaneous event so that downstream code sees a single mark type; the
/// file format renders them as 1.
#[derive(Debug, Clone)]
pub struct BinaryData {
    data: ObservedData,
}

impl BinaryData {
    /// Wrap an already-binary dataset, rejecting any event beyond {0, S}.
    pub fn from_observed(data: ObservedData) -> Result<BinaryData> {
        for h in data.histories() {
            if let Some(e) = h
                .events()
                .iter()
                .find(|e| !matches!(e, Event::Zero | Event::S))
            {
                return Err(Error::InvalidParameter(format!(
                    "event {} in a binary dataset",
                    e.to_char()
                )));
            }
        }
        Ok(BinaryData { data })
    }

    pub fn data(&self) -> &ObservedData {
        &self.data
    }

    pub fn records(&self) -> impl Iterator<Item = (&EncounterHistory, u64)> {
        self.data
            .histories()
            .iter()
            .zip(self.data.counts().iter().copied())
    }
}

/// Collapse observed histories to one side: events involving that side's
/// photograph become captures, everything else becomes a non-capture, and
/// histories that collapse to all-zero are dropped. Duplicates aggregate.
pub fn collapse_one_sided<'a, I>(records: I, side: Side) -> Result<BinaryData>
where
    I: IntoIterator<Item = (&'a EncounterHistory, u64)>,
{
    let kept = |e: Event| match side {
        Side::Left => matches!(e, Event::L | Event::S | Event::B),
        Side::Right => matches!(e, Event::R | Event::S | Event::B),
    };
    let mut out = Vec::new();
    for (h, c) in records {
        let events: Vec<Event> = h
            .events()
            .iter()
            .map(|&e| if kept(e) { Event::S } else { Event::Zero })
            .collect();
        let collapsed = EncounterHistory::new(events);
        if collapsed.is_nonzero() {
            out.push((collapsed, c));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyData);
    }
    BinaryData::from_observed(ObservedData::from_records(out)?)
}

/// Fit the single-mark model to a collapsed dataset: the event layer
/// contributes no factor, the latent structure has no children, and the
/// count of captured individuals is fixed at the observed total.
pub fn fit_one_sided<F: Real>(bin: &BinaryData, cfg: &SamplerConfig) -> Result<Vec<Chain<F>>> {
    let model: Model<F> = Model::new(bin.data().clone(), EventLayer::Binary)?;
    run_chains(&model, cfg)
}

fn sample_variance<F: Real>(draws: &[F]) -> F {
    let n = F::of(draws.len() as f64);
    let mean = draws.iter().copied().sum::<F>() / n;
    draws
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<F>()
        / (n - F::one())
}

fn combine_with_weights<F: Real>(
    param: &str,
    left: &Chain<F>,
    right: &Chain<F>,
    v_left: F,
    v_right: F,
) -> Result<Chain<F>> {
    let l = left
        .col(param)
        .ok_or_else(|| Error::MissingParameter(param.to_string()))?;
    let r = right
        .col(param)
        .ok_or_else(|| Error::MissingParameter(param.to_string()))?;
    if l.len() != r.len() {
        return Err(Error::ChainLengthMismatch(l.len(), r.len()));
    }
    let total = v_left + v_right;
    if !(total > F::zero()) || !total.is_finite() {
        return Err(Error::ZeroCombinedVariance(param.to_string()));
    }
    // a zero-variance side is constant and gets all the weight exactly
    let combined: Vec<F> = if v_left == F::zero() {
        l.to_vec()
    } else if v_right == F::zero() {
        r.to_vec()
    } else {
        l.iter()
            .zip(r)
            .map(|(&a, &b)| (v_right * a + v_left * b) / total)
            .collect()
    };
    Chain::from_columns(
        vec![param.to_string()],
        left.sweeps().to_vec(),
        vec![combined],
    )
}

/// Combine one parameter from a left-side and a right-side chain: draw k of
/// the result is the inverse-variance-weighted average of the two draws at
/// k, with weights from each chain's own posterior variance. The combined
/// mean equals the weighted average of the two means exactly.
pub fn combine_chains<F: Real>(
    left: &Chain<F>,
    right: &Chain<F>,
    param: &str,
) -> Result<Chain<F>> {
    let l = left
        .col(param)
        .ok_or_else(|| Error::MissingParameter(param.to_string()))?;
    let r = right
        .col(param)
        .ok_or_else(|| Error::MissingParameter(param.to_string()))?;
    if l.len() < 2 || r.len() < 2 {
        return Err(Error::ChainLengthMismatch(l.len(), r.len()));
    }
    combine_with_weights(param, left, right, sample_variance(l), sample_variance(r))
}

/// Combine one parameter across whole chain sets, estimating each side's
/// variance from all of its retained draws pooled; chain i of the result
/// combines left chain i with right chain i.
pub fn combine_chain_sets<F: Real>(
    left: &[Chain<F>],
    right: &[Chain<F>],
    param: &str,
) -> Result<Vec<Chain<F>>> {
    if left.len() != right.len() || left.is_empty() {
        return Err(Error::ChainLengthMismatch(left.len(), right.len()));
    }
    let pooled = |chains: &[Chain<F>]| -> Result<F> {
        let mut draws = Vec::new();
        for c in chains {
            draws.extend_from_slice(
                c.col(param)
                    .ok_or_else(|| Error::MissingParameter(param.to_string()))?,
            );
        }
        if draws.len() < 2 {
            return Err(Error::ChainLengthMismatch(draws.len(), 2));
        }
        Ok(sample_variance(&draws))
    };
    let v_left = pooled(left)?;
    let v_right = pooled(right)?;
    left.iter()
        .zip(right)
        .map(|(l, r)| combine_with_weights(param, l, r, v_left, v_right))
        .collect()
}

/// Parameter columns whose draws are comparable between the two one-sided
/// fits: everything except the latent population size and the log
/// posterior, which condition on different collapsed datasets.
pub fn combinable_parameters(names: &[String]) -> Vec<String> {
    names
        .iter()
        .filter(|n| n.as_str() != "N" && n.as_str() != "logpost")
        .cloned()
        .collect()
}

/// Combine whole one-sided fits over the given parameters, producing one
/// multi-column chain per (left, right) chain pair.
pub fn combine_fits<F: Real>(
    left: &[Chain<F>],
    right: &[Chain<F>],
    params: &[String],
) -> Result<Vec<Chain<F>>> {
    if params.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut cols: Vec<Vec<Vec<F>>> = vec![Vec::new(); left.len()];
    for param in params {
        for (i, combined) in combine_chain_sets(left, right, param)?.into_iter().enumerate() {
            cols[i].push(combined.col_at(0).to_vec());
        }
    }
    left.iter()
        .zip(cols)
        .map(|(l, c)| Chain::from_columns(params.to_vec(), l.sweeps().to_vec(), c))
        .collect()
}
