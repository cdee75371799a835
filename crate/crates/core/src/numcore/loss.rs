//! Softmax and the cross-entropy objective.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of a `B×K` matrix.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let (_, k) = logits.dims2()?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x - m).exp();
            z += *x;
        }
        row.iter_mut().for_each(|x| *x /= z);
    }
    Ok(out)
}

/// Mean cross-entropy over the batch and its gradient
/// `(softmax − onehot) / B`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = logits.dims2()?;
    if k < 2 {
        return Err(Error::input(format!("need at least two classes, got {k}")));
    }
    if labels.len() != b {
        return Err(Error::dim(format!("{} labels for {b} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::input(format!("label {bad} out of range for {k} classes")));
    }
    let mut grad = softmax_rows(logits)?;
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = &logits.data()[r * k..(r + 1) * k];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        let g = &mut grad.data_mut()[r * k..(r + 1) * k];
        g[label] -= 1.0;
        g.iter_mut().for_each(|x| *x /= b as f64);
    }
    Ok((loss / b as f64, grad))
}

/// Index of the largest entry; ties go to the smaller index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{grad_check, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits() {
        let (loss, _) = softmax_cross_entropy(&Tensor::zeros(&[1, 4]), &[2]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn large_margin_goes_to_zero() {
        let logits = Tensor::new(&[1, 3], vec![1e3, 0.0, 0.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn closed_form_two_class() {
        let logits = Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((loss - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
        assert!((loss - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn bad_labels() {
        let logits = Tensor::zeros(&[1, 3]);
        assert!(matches!(softmax_cross_entropy(&logits, &[3]), Err(Error::Input(_))));
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1, 1]), &[0]).is_err());
    }

    #[test]
    fn gradient_rows_sum_to_zero_and_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for b in 1..=5 {
            let logits = random_tensor(&mut rng, &[b, 4]);
            let labels: Vec<usize> = (0..b).map(|i| (i * 3) % 4).collect();
            let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
            for row in g.data().chunks_exact(4) {
                assert!(row.iter().sum::<f64>().abs() < 1e-10);
            }
            let rep = grad_check(&[logits], &[g], |p| Ok(softmax_cross_entropy(&p[0], &labels)?.0)).unwrap();
            assert!(rep.max_rel_error < 1e-4, "{rep:?}");
        }
    }

    #[test]
    fn argmax_ties_to_smaller() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}
