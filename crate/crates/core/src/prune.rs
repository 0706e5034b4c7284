//! L1 magnitude pruning: zero the fraction of elements with the smallest
//! absolute values.
//!
//! `floor(fraction * n)` elements are zeroed, selected by `(|value|, flat
//! index)` ascending so ties resolve to the lower index and runs are
//! reproducible. Zeroed elements become +0.0 (never -0.0); every survivor
//! is bit-identical to the input. Scope is per tensor by default; global
//! scope ranks all selected tensors' elements against one threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::weightstore::{Selector, StoreError, Tensor, WeightStore};

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("tensor {name:?}: non-finite value at flat index {index}")]
    TensorNonFinite { name: String, index: usize },
    #[error("selector matched no tensors (empty selection)")]
    EmptySelection,
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Threshold scope for [`prune_store`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneScope {
    PerTensor,
    Global,
}

/// What happened to one tensor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneRow {
    pub name: String,
    pub elements: usize,
    pub zeroed: usize,
    /// Largest pruned magnitude; `None` when nothing was zeroed.
    pub threshold_magnitude: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneReport {
    pub scope: PruneScope,
    pub fraction_requested: f64,
    pub per_tensor: Vec<PruneRow>,
    pub total_elements: usize,
    pub total_zeroed: usize,
}

fn check_fraction(fraction: f64) -> Result<(), PruneError> {
    if fraction.is_finite() && (0.0..=1.0).contains(&fraction) {
        Ok(())
    } else {
        Err(PruneError::FractionOutOfRange(fraction))
    }
}

fn check_finite(data: &[f32]) -> Result<(), PruneError> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(PruneError::NonFinite { index }),
        None => Ok(()),
    }
}

fn target_count(fraction: f64, numel: usize) -> usize {
    (fraction * numel as f64).floor() as usize
}

/// Zero the `floor(fraction * numel)` smallest-magnitude elements of one
/// tensor. Returns the pruned tensor and its report row (name left empty
/// for the caller to fill).
pub fn prune_l1(t: &Tensor, fraction: f64) -> Result<(Tensor, PruneRow), PruneError> {
    check_fraction(fraction)?;
    check_finite(t.data())?;

    let z = target_count(fraction, t.numel());
    let mut data = t.data().to_vec();
    let mut threshold = None;
    if z > 0 {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.sort_by(|&a, &b| data[a].abs().total_cmp(&data[b].abs()).then(a.cmp(&b)));
        threshold = Some(data[order[z - 1]].abs());
        for &i in &order[..z] {
            data[i] = 0.0;
        }
    }
    let pruned = Tensor::new(t.shape().to_vec(), data)?;
    Ok((
        pruned,
        PruneRow {
            name: String::new(),
            elements: t.numel(),
            zeroed: z,
            threshold_magnitude: threshold,
        },
    ))
}

/// Prune the selected tensors of a store. Per-tensor scope applies
/// [`prune_l1`] independently; global scope zeroes the
/// `floor(fraction * total)` smallest elements across the whole selection,
/// breaking magnitude ties by store order then flat index. Unselected
/// tensors pass through bit-identical.
pub fn prune_store(
    store: &WeightStore,
    fraction: f64,
    scope: PruneScope,
    selector: &Selector,
) -> Result<(WeightStore, PruneReport), PruneError> {
    check_fraction(fraction)?;
    let selected: Vec<usize> = store
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| selector.matches(&e.name, e.role))
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Err(PruneError::EmptySelection);
    }
    for &i in &selected {
        let e = &store.entries()[i];
        check_finite(e.tensor.data()).map_err(|err| match err {
            PruneError::NonFinite { index } => PruneError::TensorNonFinite {
                name: e.name.clone(),
                index,
            },
            other => other,
        })?;
    }

    let mut out = WeightStore::new();
    *out.metadata_mut() = store.metadata().clone();
    let mut rows = Vec::with_capacity(selected.len());
    let total_elements: usize = selected
        .iter()
        .map(|&i| store.entries()[i].tensor.numel())
        .sum();

    match scope {
        PruneScope::PerTensor => {
            for (i, e) in store.entries().iter().enumerate() {
                if selected.contains(&i) {
                    let (pruned, mut row) = prune_l1(&e.tensor, fraction)?;
                    row.name = e.name.clone();
                    rows.push(row);
                    out.push(e.name.clone(), pruned, e.role)?;
                } else {
                    out.push(e.name.clone(), e.tensor.clone(), e.role)?;
                }
            }
        }
        PruneScope::Global => {
            let z_total = target_count(fraction, total_elements);
            // Rank every selected element: (magnitude, selection order, index).
            let mut keys: Vec<(f32, usize, usize)> = Vec::with_capacity(total_elements);
            for (sel_pos, &i) in selected.iter().enumerate() {
                let data = store.entries()[i].tensor.data();
                for (j, &v) in data.iter().enumerate() {
                    keys.push((v.abs(), sel_pos, j));
                }
            }
            keys.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });

            let mut pruned_data: Vec<Vec<f32>> = selected
                .iter()
                .map(|&i| store.entries()[i].tensor.data().to_vec())
                .collect();
            let mut zeroed = vec![0usize; selected.len()];
            let mut thresholds: Vec<Option<f32>> = vec![None; selected.len()];
            for &(mag, sel_pos, j) in &keys[..z_total] {
                pruned_data[sel_pos][j] = 0.0;
                zeroed[sel_pos] += 1;
                let t = thresholds[sel_pos].get_or_insert(mag);
                *t = t.max(mag);
            }

            let mut sel_pos_of = vec![usize::MAX; store.len()];
            for (p, &i) in selected.iter().enumerate() {
                sel_pos_of[i] = p;
            }
            for (i, e) in store.entries().iter().enumerate() {
                let p = sel_pos_of[i];
                if p != usize::MAX {
                    let data = std::mem::take(&mut pruned_data[p]);
                    let t = Tensor::new(e.tensor.shape().to_vec(), data)?;
                    rows.push(PruneRow {
                        name: e.name.clone(),
                        elements: e.tensor.numel(),
                        zeroed: zeroed[p],
                        threshold_magnitude: thresholds[p],
                    });
                    out.push(e.name.clone(), t, e.role)?;
                } else {
                    out.push(e.name.clone(), e.tensor.clone(), e.role)?;
                }
            }
        }
    }

    let total_zeroed = rows.iter().map(|r| r.zeroed).sum();
    Ok((
        out,
        PruneReport {
            scope,
            fraction_requested: fraction,
            per_tensor: rows,
            total_elements,
            total_zeroed,
        },
    ))
}
