use rand::seq::SliceRandom;

use crate::error::{DclError, Result};
use crate::numerics::Matrix;
use crate::rng;

/// Per-view features with labels and the two availability indicators.
///
/// Construction enforces the zero-fill convention: rows of unavailable views
/// and unknown label entries are stored as zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewDataset {
    pub name: String,
    views: Vec<Matrix>,
    labels: Matrix,
    view_indicator: Matrix,
    label_indicator: Matrix,
}

pub(crate) fn check_binary(m: &Matrix, what: &str) -> Result<()> {
    for i in 0..m.rows() {
        for (j, &x) in m.row(i).iter().enumerate() {
            if x != 0.0 && x != 1.0 {
                return Err(DclError::validation(
                    what,
                    format!("entry ({i}, {j}) is {x}, expected 0 or 1"),
                ));
            }
        }
    }
    Ok(())
}

impl MultiViewDataset {
    pub fn new(views: Vec<Matrix>, labels: Matrix, view_indicator: Matrix, label_indicator: Matrix) -> Result<Self> {
        if views.is_empty() {
            return Err(DclError::validation("dataset", "at least one view is required"));
        }
        let n = labels.rows();
        for (m, x) in views.iter().enumerate() {
            if x.rows() != n {
                return Err(DclError::validation(
                    format!("view {m}"),
                    format!("{} rows, labels have {n}", x.rows()),
                ));
            }
            if x.cols() == 0 {
                return Err(DclError::validation(format!("view {m}"), "zero feature columns"));
            }
            if !x.is_finite() {
                return Err(DclError::validation(format!("view {m}"), "non-finite feature value"));
            }
        }
        if labels.cols() == 0 {
            return Err(DclError::validation("labels", "zero label columns"));
        }
        if view_indicator.shape() != (n, views.len()) {
            return Err(DclError::validation(
                "view_indicator",
                format!("shape {:?}, expected {:?}", view_indicator.shape(), (n, views.len())),
            ));
        }
        if label_indicator.shape() != labels.shape() {
            return Err(DclError::validation(
                "label_indicator",
                format!("shape {:?}, expected {:?}", label_indicator.shape(), labels.shape()),
            ));
        }
        check_binary(&labels, "labels")?;
        check_binary(&view_indicator, "view_indicator")?;
        check_binary(&label_indicator, "label_indicator")?;
        for i in 0..n {
            if view_indicator.row(i).iter().all(|&x| x == 0.0) {
                return Err(DclError::validation(
                    "view_indicator",
                    format!("sample {i} has no available view"),
                ));
            }
        }

        let mut ds = MultiViewDataset {
            name: String::new(),
            views,
            labels,
            view_indicator,
            label_indicator,
        };
        ds.zero_fill();
        Ok(ds)
    }

    /// Fully observed dataset: all-ones indicators.
    pub fn complete(views: Vec<Matrix>, labels: Matrix) -> Result<Self> {
        let n = labels.rows();
        let v = views.len();
        let w = Matrix::ones(n, labels.cols());
        Self::new(views, labels, Matrix::ones(n, v), w)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn zero_fill(&mut self) {
        for (m, x) in self.views.iter_mut().enumerate() {
            for i in 0..x.rows() {
                if self.view_indicator.get(i, m) == 0.0 {
                    x.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        let w = &self.label_indicator;
        for (y, &known) in self.labels.as_mut_slice().iter_mut().zip(w.as_slice()) {
            if known == 0.0 {
                *y = 0.0;
            }
        }
    }

    /// Combines the existing indicators with new ones (elementwise product)
    /// and re-applies zero-fill.
    pub fn with_missing(&self, view_indicator: &Matrix, label_indicator: &Matrix) -> Result<Self> {
        let v = self.view_indicator.hadamard(view_indicator)?;
        let w = self.label_indicator.hadamard(label_indicator)?;
        Self::new(self.views.clone(), self.labels.clone(), v, w).map(|d| d.with_name(self.name.clone()))
    }

    pub fn n_samples(&self) -> usize {
        self.labels.rows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.cols()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(Matrix::cols).collect()
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    pub fn view(&self, m: usize) -> &Matrix {
        &self.views[m]
    }

    pub fn labels(&self) -> &Matrix {
        &self.labels
    }

    pub fn view_indicator(&self) -> &Matrix {
        &self.view_indicator
    }

    pub fn label_indicator(&self) -> &Matrix {
        &self.label_indicator
    }

    /// Subset of samples, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> MultiViewDataset {
        MultiViewDataset {
            name: self.name.clone(),
            views: self.views.iter().map(|x| x.select_rows(indices)).collect(),
            labels: self.labels.select_rows(indices),
            view_indicator: self.view_indicator.select_rows(indices),
            label_indicator: self.label_indicator.select_rows(indices),
        }
    }

    /// Mutable access to raw view storage, for tests that need to break the
    /// zero-fill convention on purpose.
    #[doc(hidden)]
    pub fn views_mut_unchecked(&mut self) -> &mut [Matrix] {
        &mut self.views
    }

    #[doc(hidden)]
    pub fn labels_mut_unchecked(&mut self) -> &mut Matrix {
        &mut self.labels
    }
}

/// Row indices of a seeded train/test partition, each sorted ascending.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DclError::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DclError::Config(format!(
            "train fraction {train_fraction} of {n} samples leaves an empty split"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, rng::tag::SPLIT));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Seeded disjoint train/test partition of the samples.
pub fn split(
    dataset: &MultiViewDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(MultiViewDataset, MultiViewDataset)> {
    let (train, test) = split_indices(dataset.n_samples(), train_fraction, seed)?;
    Ok((dataset.select_rows(&train), dataset.select_rows(&test)))
}
