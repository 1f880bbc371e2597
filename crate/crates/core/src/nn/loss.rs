//! Elementary losses returning value and gradient together.

/// Softmax cross-entropy of `logits` against class `label`; returns the loss
/// and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Mean squared error and its gradient with respect to `pred`. With a mask,
/// only positions where `mask` is true contribute and the mean is over them.
pub fn mse(pred: &[f64], target: &[f64], mask: Option<&[bool]>) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    let n = match mask {
        Some(m) => m.iter().filter(|&&b| b).count(),
        None => pred.len(),
    };
    let mut grad = vec![0.0; pred.len()];
    if n == 0 {
        return (0.0, grad);
    }
    let mut loss = 0.0;
    for i in 0..pred.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let d = pred[i] - target[i];
        loss += d * d;
        grad[i] = 2.0 * d / n as f64;
    }
    (loss / n as f64, grad)
}
