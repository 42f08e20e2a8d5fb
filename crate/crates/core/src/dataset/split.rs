//! Stratified train/test splitting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::synth::SynthSample;
use super::DatasetError;
use crate::numerics::seeded_rng;

/// Fraction of each stratum that goes to train.
pub const TRAIN_FRACTION: f64 = 0.9;

/// Splits a corpus 9:1 per stratum (the generating tool), floor on the train
/// side, remainder to test. Shuffling is seeded and strata are visited in
/// sorted order, so the split is a pure function of (corpus, seed).
pub fn split_train_test(
    corpus: &[SynthSample],
    seed: u64,
) -> Result<(Vec<SynthSample>, Vec<SynthSample>), DatasetError> {
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, sample) in corpus.iter().enumerate() {
        strata.entry(&sample.tool).or_default().push(i);
    }
    let mut rng = seeded_rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (tool, mut indices) in strata {
        if indices.len() < 2 {
            return Err(DatasetError::InsufficientStratum {
                tool: tool.to_string(),
                count: indices.len(),
            });
        }
        indices.shuffle(&mut rng);
        let n_train = (TRAIN_FRACTION * indices.len() as f64).floor() as usize;
        for (pos, idx) in indices.into_iter().enumerate() {
            if pos < n_train {
                train.push(corpus[idx].clone());
            } else {
                test.push(corpus[idx].clone());
            }
        }
    }
    Ok((train, test))
}
