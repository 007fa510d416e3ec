//! Missingness simulation (view and label indicators) and the per-epoch
//! contiguous input masks.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::MultiViewDataset;
use crate::error::{DclError, Result};
use crate::numerics::Matrix;
use crate::rng::{self, Rng};

fn check_ratio(ratio: f64, what: &str) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(DclError::Config(format!("{what} must lie in [0, 1), got {ratio}")));
    }
    Ok(())
}

/// Zeroes `round(ratio * n * v)` entries of an all-ones n x v matrix without
/// ever emptying a row. Entries are visited in uniformly random order and an
/// entry is skipped when zeroing it would leave its row with no ones.
pub fn view_indicator(n: usize, v: usize, ratio: f64, rng: &mut Rng) -> Result<Matrix> {
    check_ratio(ratio, "view missing ratio")?;
    if v == 0 {
        return Err(DclError::Config("at least one view is required".into()));
    }
    let target = (ratio * (n * v) as f64).round() as usize;
    if target > n * (v - 1) {
        return Err(DclError::Config(format!(
            "cannot hide {target} of {} view entries and keep one view per sample (max {})",
            n * v,
            n * (v - 1)
        )));
    }
    let mut out = Matrix::ones(n, v);
    let mut remaining = vec![v; n];
    let mut order: Vec<usize> = (0..n * v).collect();
    order.shuffle(rng);
    let mut zeroed = 0;
    for flat in order {
        if zeroed == target {
            break;
        }
        let i = flat / v;
        if remaining[i] > 1 {
            out.as_mut_slice()[flat] = 0.0;
            remaining[i] -= 1;
            zeroed += 1;
        }
    }
    debug_assert_eq!(zeroed, target);
    Ok(out)
}

/// Zeroes `round(ratio * n * c)` uniformly chosen entries.
pub fn label_indicator(n: usize, c: usize, ratio: f64, rng: &mut Rng) -> Result<Matrix> {
    check_ratio(ratio, "label missing ratio")?;
    let total = n * c;
    let target = (ratio * total as f64).round() as usize;
    let mut out = Matrix::ones(n, c);
    for flat in index::sample(rng, total, target) {
        out.as_mut_slice()[flat] = 0.0;
    }
    Ok(out)
}

/// Seeded `(V, W)` pair.
pub fn generate_indicators(
    n: usize,
    v: usize,
    c: usize,
    view_missing_ratio: f64,
    label_missing_ratio: f64,
    seed: u64,
) -> Result<(Matrix, Matrix)> {
    let vi = view_indicator(n, v, view_missing_ratio, &mut rng::stream(seed, rng::tag::VIEW_MISSING))?;
    let wi = label_indicator(
        n,
        c,
        label_missing_ratio,
        &mut rng::stream(seed, rng::tag::LABEL_MISSING),
    )?;
    Ok((vi, wi))
}

/// One binary mask per view. Each row holds a single run of
/// `round(ratio * d_m)` zeros starting at a random column and wrapping
/// around the row end.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskBank {
    masks: Vec<Matrix>,
    ratio: f64,
}

impl MaskBank {
    pub fn ones(n: usize, dims: &[usize]) -> Self {
        MaskBank {
            masks: dims.iter().map(|&d| Matrix::ones(n, d)).collect(),
            ratio: 0.0,
        }
    }

    pub fn generate(n: usize, dims: &[usize], ratio: f64, rng: &mut Rng) -> Result<Self> {
        check_ratio(ratio, "mask ratio")?;
        let masks = dims
            .iter()
            .map(|&d| {
                let span = (ratio * d as f64).round() as usize;
                let mut m = Matrix::ones(n, d);
                if span > 0 {
                    for i in 0..n {
                        let start = rng.random_range(0..d);
                        let row = m.row_mut(i);
                        for k in 0..span {
                            row[(start + k) % d] = 0.0;
                        }
                    }
                }
                m
            })
            .collect();
        Ok(MaskBank { masks, ratio })
    }

    pub fn from_masks(masks: Vec<Matrix>) -> Self {
        MaskBank { masks, ratio: f64::NAN }
    }

    pub fn masks(&self) -> &[Matrix] {
        &self.masks
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }
}

/// `X' = X ⊗ M` for every view.
pub fn apply_input_mask(dataset: &MultiViewDataset, masks: &MaskBank) -> Result<Vec<Matrix>> {
    if masks.masks.len() != dataset.n_views() {
        return Err(DclError::shape(
            "apply_input_mask",
            (dataset.n_views(), 0),
            (masks.masks.len(), 0),
        ));
    }
    dataset
        .views()
        .iter()
        .zip(&masks.masks)
        .map(|(x, m)| x.hadamard(m))
        .collect()
}
