use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::seed;

/// Disjoint training/validation partition of cell ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub seed: u64,
}

/// Stratified split: positives and negatives are shuffled separately and
/// each class contributes `round(ratio * count)` ids to training, with at
/// least one positive on each side. Both id lists come back sorted.
pub fn train_val_split(grid: &GridModel, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..grid.len()).partition(|&id| grid.cell(id).has_station);
    if pos.len() < 2 {
        return Err(Error::Config(format!(
            "stratified split needs at least 2 station cells, found {}",
            pos.len()
        )));
    }
    let mut rng = seed::rng(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let n_pos_train = ((ratio * pos.len() as f64).round() as usize).clamp(1, pos.len() - 1);
    let n_neg_train = ((ratio * neg.len() as f64).round() as usize).min(neg.len());

    let mut train_ids: Vec<usize> = pos[..n_pos_train]
        .iter()
        .chain(&neg[..n_neg_train])
        .copied()
        .collect();
    let mut val_ids: Vec<usize> = pos[n_pos_train..]
        .iter()
        .chain(&neg[n_neg_train..])
        .copied()
        .collect();
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    Ok(Split {
        train_ids,
        val_ids,
        seed,
    })
}
