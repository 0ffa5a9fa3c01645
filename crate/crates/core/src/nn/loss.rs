use ndarray::{Array2, ArrayView2, Axis};

/// Probabilities below this are clamped before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Row-wise softmax with max-subtraction.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean over the batch of `-t · log(y)`.
pub fn cross_entropy(probs: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> f64 {
    let batch = probs.nrows();
    if batch == 0 {
        return 0.0;
    }
    let total: f64 = probs
        .iter()
        .zip(targets.iter())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&y, &t)| -t * y.max(LOG_CLAMP).ln())
        .sum();
    total / batch as f64
}

pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut t = Array2::zeros((labels.len(), classes));
    for (row, &label) in labels.iter().enumerate() {
        t[[row, label]] = 1.0;
    }
    t
}
