use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Standard deviation used for weights unless configured otherwise.
pub const DEFAULT_INIT_STD: f64 = 0.05;

/// Samples `N(0, std^2)` conditioned on `|x| <= 2 std` by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(std: f64, rng: &mut R) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

pub fn truncated_normal_init<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    std: f64,
    rng: &mut R,
) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(truncated_normal(std, rng)))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
