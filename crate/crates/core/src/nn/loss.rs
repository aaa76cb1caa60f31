use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean squared error over the entries where `mask` is set, and its gradient
/// with respect to `pred` (zero on masked-out entries).
pub fn masked_mse_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mask: &[bool],
) -> Result<(T, Tensor<T>)> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(Error::shape(format!(
            "loss inputs: pred {}, target {}, mask {}",
            pred.len(),
            target.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let n = T::from_usize(count).expect("count fits");
    let two = T::one() + T::one();
    let mut grad = Tensor::zeros(pred.shape());
    let mut sum = T::zero();
    for (((g, &p), &t), &m) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
        .zip(mask)
    {
        if m {
            let e = p - t;
            sum += e * e;
            *g = two * e / n;
        }
    }
    Ok((sum / n, grad))
}

/// Plain mean squared error.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    masked_mse_loss(pred, target, &vec![true; pred.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[x.len()], x.to_vec()).unwrap()
    }

    #[test]
    fn identical_prediction_has_zero_loss() {
        let (l, g) = masked_mse_loss(&v(&[1.0, 2.0]), &v(&[1.0, 2.0]), &[true, true]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn worked_values() {
        let (l, g) = masked_mse_loss(&v(&[10.0, 20.0]), &v(&[13.0, 24.0]), &[true, true]).unwrap();
        assert_eq!(l, 12.5);
        assert_eq!(g.data(), &[-3.0, -4.0]);
        let (l, g) = masked_mse_loss(&v(&[10.0, 20.0]), &v(&[13.0, 24.0]), &[true, false]).unwrap();
        assert_eq!(l, 9.0);
        assert_eq!(g.data(), &[-6.0, 0.0]);
    }

    #[test]
    fn empty_mask_is_an_error() {
        assert!(matches!(
            masked_mse_loss(&v(&[1.0]), &v(&[2.0]), &[false]),
            Err(Error::EmptyMask)
        ));
    }
}
