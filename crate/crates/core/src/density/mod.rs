//! Masked-sequence density models and the sampling routines built on them.
//!
//! A model answers one question: given a sequence with some positions
//! masked, what is the distribution of each masked token? Everything else
//! (sequential infilling, joint resampling over a candidate set, likelihood,
//! perplexity) is written against that single method, so any model that
//! implements [`MaskedSequenceModel`] plugs into the intervention engine.

mod reference;

pub use reference::{ReferenceDensityModel, DEFAULT_ALPHA};

use crate::codec::{agent_count, CodecSchema, SlotClass, Token, TokenSequence};
use crate::error::{Error, Result};
use crate::seed::Rng;
use rand::Rng as _;

/// A distribution over one slot class's tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub class: SlotClass,
    /// Token index of `probs[0]`.
    pub offset: Token,
    pub probs: Vec<f64>,
}

impl Categorical {
    pub fn prob(&self, token: Token) -> f64 {
        token
            .checked_sub(self.offset)
            .and_then(|i| self.probs.get(i as usize))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn argmax(&self) -> Token {
        let (i, _) = self
            .probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        self.offset + i as Token
    }

    /// Draw a token, optionally never returning `exclude` (the remaining mass
    /// is renormalized).
    pub fn sample(&self, rng: &mut Rng, exclude: Option<Token>, position: usize) -> Result<Token> {
        let weight = |i: usize| {
            if exclude == Some(self.offset + i as Token) {
                0.0
            } else {
                self.probs[i]
            }
        };
        let total: f64 = (0..self.probs.len()).map(weight).sum();
        if !(total > 0.0) {
            return Err(Error::EmptySupport { position });
        }
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for i in 0..self.probs.len() {
            let w = weight(i);
            if w <= 0.0 {
                continue;
            }
            last = Some(i);
            if u < w {
                return Ok(self.offset + i as Token);
            }
            u -= w;
        }
        // floating-point leftovers land on the last token with mass
        Ok(self.offset + last.expect("positive total") as Token)
    }
}

pub trait MaskedSequenceModel {
    fn schema(&self) -> &CodecSchema;

    /// One distribution per entry of `masked`, in the same order. Tokens at
    /// masked positions are ignored.
    fn predict_distribution(&self, seq: &TokenSequence, masked: &[usize]) -> Result<Vec<Categorical>>;
}

/// Check that every token lies in its position's slot class.
pub fn validate_sequence(schema: &CodecSchema, seq: &TokenSequence) -> Result<()> {
    agent_count(seq.len())?;
    for (p, &t) in seq.tokens.iter().enumerate() {
        let class = schema.class_at(p);
        if !schema.range(class).contains(t) {
            return Err(Error::SchemaMismatch {
                expected: format!("{class} token at position {p}"),
                found: format!("token {t}"),
            });
        }
    }
    Ok(())
}

fn check_positions(seq: &TokenSequence, positions: &[usize]) -> Result<()> {
    for (i, &p) in positions.iter().enumerate() {
        if p >= seq.len() {
            return Err(Error::Invalid(format!("position {p} beyond sequence length {}", seq.len())));
        }
        if positions[..i].contains(&p) {
            return Err(Error::Invalid(format!("position {p} masked twice")));
        }
    }
    Ok(())
}

/// Resample `positions` one at a time in ascending order; each draw sees the
/// tokens already drawn. With `forbid_original`, a position never keeps its
/// original token.
pub fn mask_and_resample<M: MaskedSequenceModel + ?Sized>(
    model: &M,
    seq: &TokenSequence,
    positions: &[usize],
    rng: &mut Rng,
    forbid_original: bool,
) -> Result<TokenSequence> {
    check_positions(seq, positions)?;
    let mut order = positions.to_vec();
    order.sort_unstable();
    let mut out = seq.clone();
    for i in 0..order.len() {
        let p = order[i];
        let dist = model.predict_distribution(&out, &order[i..])?.swap_remove(0);
        let exclude = forbid_original.then_some(seq.tokens[p]);
        out.tokens[p] = dist.sample(rng, exclude, p)?;
    }
    Ok(out)
}

/// Chain-rule probability of filling `positions` with `values`, all other
/// listed positions masked.
pub fn joint_prob<M: MaskedSequenceModel + ?Sized>(
    model: &M,
    seq: &TokenSequence,
    positions: &[usize],
    values: &[Token],
) -> Result<f64> {
    let mut order: Vec<(usize, Token)> = positions.iter().copied().zip(values.iter().copied()).collect();
    order.sort_unstable_by_key(|&(p, _)| p);
    let masked: Vec<usize> = order.iter().map(|&(p, _)| p).collect();
    let mut filled = seq.clone();
    let mut prob = 1.0;
    for (i, &(p, t)) in order.iter().enumerate() {
        let dist = model.predict_distribution(&filled, &masked[i..])?.swap_remove(0);
        prob *= dist.prob(t);
        filled.tokens[p] = t;
    }
    Ok(prob)
}

/// Resample `positions` jointly, restricted to the listed candidate value
/// tuples, with probability proportional to the model's joint probability.
/// With `forbid_original`, the tuple currently in `seq` is excluded.
pub fn resample_among<M: MaskedSequenceModel + ?Sized>(
    model: &M,
    seq: &TokenSequence,
    positions: &[usize],
    candidates: &[Vec<Token>],
    rng: &mut Rng,
    forbid_original: bool,
) -> Result<TokenSequence> {
    check_positions(seq, positions)?;
    let original: Vec<Token> = positions.iter().map(|&p| seq.tokens[p]).collect();
    let mut weights = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c.len() != positions.len() {
            return Err(Error::Invalid("candidate tuple length differs from positions".into()));
        }
        let w = if forbid_original && *c == original {
            0.0
        } else {
            joint_prob(model, seq, positions, c)?
        };
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptySupport {
            position: positions.first().copied().unwrap_or(0),
        });
    }
    let mut u = rng.random::<f64>() * total;
    let mut pick = weights.iter().rposition(|&w| w > 0.0).expect("positive total");
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 && u < w {
            pick = i;
            break;
        }
        u -= w;
    }
    let mut out = seq.clone();
    for (&p, &t) in positions.iter().zip(&candidates[pick]) {
        out.tokens[p] = t;
    }
    Ok(out)
}

/// Sum over positions of the log-probability of the actual token given the
/// rest of the sequence.
pub fn sequence_log_likelihood<M: MaskedSequenceModel + ?Sized>(model: &M, seq: &TokenSequence) -> Result<f64> {
    let mut ll = 0.0;
    for p in 0..seq.len() {
        let dist = model.predict_distribution(seq, &[p])?.swap_remove(0);
        ll += dist.prob(seq.tokens[p]).ln();
    }
    Ok(ll)
}

/// `exp(-mean per-token log-likelihood)` over a held-out set.
pub fn perplexity<M: MaskedSequenceModel + ?Sized>(model: &M, heldout: &[TokenSequence]) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::Invalid("held-out set is empty".into()));
    }
    let mut ll = 0.0;
    let mut n = 0usize;
    for s in heldout {
        ll += sequence_log_likelihood(model, s)?;
        n += s.len();
    }
    Ok((-ll / n as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn categorical_sampling_respects_exclusion() {
        let c = Categorical {
            class: SlotClass::CoordDecimal,
            offset: 100,
            probs: vec![0.5, 0.5],
        };
        let mut rng = seed::rng(1);
        for _ in 0..100 {
            assert_eq!(c.sample(&mut rng, Some(100), 0).unwrap(), 101);
        }
        let only = Categorical {
            probs: vec![1.0, 0.0],
            ..c.clone()
        };
        assert!(matches!(only.sample(&mut rng, Some(100), 3), Err(Error::EmptySupport { position: 3 })));
        assert_eq!(c.prob(99), 0.0);
        assert_eq!(c.argmax(), 100);
    }
}
