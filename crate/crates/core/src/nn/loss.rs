use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

fn check_labels<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
    if logits.shape().len() != 2 {
        return Err(Error::Shape(format!("logits must be (batch, classes), got {:?}", logits.shape())));
    }
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != batch {
        return Err(Error::Length { expected: batch, found: labels.len() });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Label { label, classes, index });
    }
    Ok((batch, classes))
}

/// `-log softmax(row)[label]` via the max-shifted log-sum-exp, with the
/// leading unit term split off so confident rows keep full precision.
fn sample_loss<T: Scalar>(row: &[T], label: usize) -> (T, T) {
    let mut top = 0;
    for (i, &z) in row.iter().enumerate() {
        if z > row[top] {
            top = i;
        }
    }
    let max = row[top];
    let rest: T = row.iter().enumerate().filter(|&(i, _)| i != top).map(|(_, &z)| (z - max).exp()).sum();
    ((max - row[label]) + rest.ln_1p(), max)
}

/// Mean cross-entropy of `logits` (batch, classes) against integer labels.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let (batch, classes) = check_labels(logits, labels)?;
    let total: T = logits
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .map(|(row, &l)| sample_loss(row, l).0)
        .sum();
    Ok(total / T::from_usize_lossy(batch))
}

/// Mean cross-entropy together with its gradient with respect to the logits.
pub fn cross_entropy_with_grad<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (batch, classes) = check_labels(logits, labels)?;
    let inv_batch = T::one() / T::from_usize_lossy(batch);
    let mut grad = Tensor::zeros(logits.shape().to_vec());
    let mut total = T::zero();
    for ((row, &label), g) in logits
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .zip(grad.data_mut().chunks_exact_mut(classes))
    {
        let (loss, max) = sample_loss(row, label);
        total += loss;
        let sum: T = row.iter().map(|&z| (z - max).exp()).sum();
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - max).exp() / sum * inv_batch;
        }
        g[label] -= inv_batch;
    }
    Ok((total / T::from_usize_lossy(batch), grad))
}
