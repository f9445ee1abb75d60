use crate::activations::Activations;
use crate::error::{NnError, Result};

fn check_labels(logits: &Activations, labels: &[usize]) -> Result<usize> {
    let [classes, a, b] = logits.dims();
    if a != 1 || b != 1 {
        return Err(NnError::Shape(format!("logits must be flat, got {:?}", logits.dims())));
    }
    if labels.len() != logits.n() {
        return Err(NnError::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            logits.n()
        )));
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(NnError::InvalidLabel { index, label, classes });
    }
    Ok(classes)
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean over the batch of `−log softmax(z)[label]`, and its gradient
/// `(softmax(z) − onehot) / n` with respect to the logits.
pub fn softmax_cross_entropy(logits: &Activations, labels: &[usize]) -> Result<(f64, Activations)> {
    check_labels(logits, labels)?;
    let n = logits.n();
    if n == 0 {
        return Ok((0.0, logits.clone()));
    }
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let z = logits.sample(i);
        let lse = log_sum_exp(z);
        total += lse - z[label];
        let g = grad.sample_mut(i);
        for (gj, zj) in g.iter_mut().zip(z) {
            *gj = (zj - lse).exp() / n as f64;
        }
        g[label] -= 1.0 / n as f64;
    }
    Ok((total / n as f64, grad))
}

/// Row-wise softmax of flat logits.
pub fn softmax(logits: &Activations) -> Activations {
    let mut out = logits.clone();
    for i in 0..logits.n() {
        let lse = log_sum_exp(logits.sample(i));
        out.sample_mut(i).iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    out
}

/// Index of the largest logit per sample; the first wins on ties.
pub fn argmax(logits: &Activations) -> Vec<usize> {
    (0..logits.n())
        .map(|i| {
            let z = logits.sample(i);
            let mut best = 0;
            for (j, v) in z.iter().enumerate() {
                if *v > z[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Number of samples whose argmax matches the label.
pub fn correct_count(logits: &Activations, labels: &[usize]) -> usize {
    argmax(logits).iter().zip(labels).filter(|(p, l)| p == l).count()
}
