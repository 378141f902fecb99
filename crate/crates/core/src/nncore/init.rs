//! Seeded weight initialization.

use super::tensor::Tensor;
use crate::rng::Rng64;

/// Glorot-uniform tensor: entries uniform in +-sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng64) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform(-limit, limit);
    }
    t
}
