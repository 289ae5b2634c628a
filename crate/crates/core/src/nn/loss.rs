use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Mean softmax cross-entropy and its gradient `(softmax − onehot) / batch`.
pub fn loss_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.ndim() != 2 || logits.rows() != labels.len() {
        return Err(Error::dim(format!(
            "logits {:?} for {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let (n, c) = (logits.rows(), logits.cols());
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::input(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let log_sum = sum.ln() + max;
        total += log_sum - logits.row(r)[y];
        for v in row.iter_mut() {
            *v /= sum * n as f64;
        }
        row[y] -= 1.0 / n as f64;
    }
    Ok((total / n as f64, grad))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Tensor::zeros(&[3, 10]);
        let (loss, _) = loss_xent(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_true_class_gives_zero_loss() {
        let mut logits = Tensor::zeros(&[1, 4]);
        logits.data_mut()[2] = 50.0;
        let (loss, _) = loss_xent(&logits, &[2]).unwrap();
        assert!((0.0..1e-15).contains(&loss));
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(loss_xent(&Tensor::zeros(&[1, 3]), &[3]), Err(Error::Input(_))));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = Rng::new(17);
        let logits = Tensor::new(vec![4, 5], (0..20).map(|_| rng.normal()).collect()).unwrap();
        let labels = [1, 0, 4, 2];
        let (_, grad) = loss_xent(&logits, &labels).unwrap();
        let h = 1e-5;
        for k in 0..20 {
            let mut plus = logits.clone();
            plus.data_mut()[k] += h;
            let mut minus = logits.clone();
            minus.data_mut()[k] -= h;
            let fd = (loss_xent(&plus, &labels).unwrap().0 - loss_xent(&minus, &labels).unwrap().0) / (2.0 * h);
            assert!((fd - grad.data()[k]).abs() <= 1e-7, "{k}: {fd} vs {}", grad.data()[k]);
        }
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
