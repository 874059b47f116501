//! Stateless element-wise and pooling operations.

use super::tensor::Tensor;
use super::NnError;

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Passes gradient where the forward input was positive.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
        if *xv <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Smallest `|x|` over the tensor: distance to the ReLU kink.
pub fn kink_distance(x: &Tensor) -> f64 {
    x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(B, C, H, W) -> (B, C)` mean over space.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor, NnError> {
    let (b, c, h, w) = x.dims4()?;
    let hw = h * w;
    let data = x.data().chunks(hw).map(|s| s.iter().sum::<f64>() / hw as f64).collect();
    Tensor::from_vec(&[b, c], data)
}

pub fn global_avg_pool_backward(grad_out: &Tensor, shape: &[usize]) -> Tensor {
    let hw = shape[2] * shape[3];
    let mut g = Tensor::zeros(shape);
    for (chunk, v) in g.data_mut().chunks_mut(hw).zip(grad_out.data()) {
        chunk.fill(v / hw as f64);
    }
    g
}

/// Row-wise softmax of `(B, K)` logits.
pub fn softmax(logits: &Tensor) -> Result<Tensor, NnError> {
    let (_, k) = logits.dims2()?;
    let mut p = logits.clone();
    for row in p.data_mut().chunks_mut(k) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(p)
}

/// Mean softmax cross-entropy and its gradient `(softmax - onehot) / B`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    let (b, k) = logits.dims2()?;
    if labels.len() != b {
        return Err(NnError::ShapeMismatch(format!("{} labels for batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::ShapeMismatch(format!("label {bad} out of range for {k} classes")));
    }
    let mut grad = softmax(logits)?;
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.data().chunks(k).zip(labels).enumerate() {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        grad.data_mut()[i * k + y] -= 1.0;
    }
    grad.scale(1.0 / b as f64);
    Ok((loss / b as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln4() {
        let logits = Tensor::full(&[3, 4], 0.7);
        let (loss, _) = cross_entropy(&logits, &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated() {
        let logits = Tensor::from_vec(&[1, 4], vec![0.0, 30.0, 0.0, 0.0]).unwrap();
        assert!(cross_entropy(&logits, &[1]).unwrap().0 < 1e-10);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Tensor::from_vec(&[2, 4], vec![1.0, -2.0, 300.0, 0.5, -700.0, 3.0, 2.0, 1.0]).unwrap();
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
