use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::math::Tensor;

/// Stand-in for CNN image features: `[regions, dim]` values in `[-1, 1]`
/// drawn from a generator seeded by the SHA-256 of `key`.
pub fn pseudo_image_feature(key: &str, regions: usize, dim: usize) -> Tensor<f32> {
    let digest = Sha256::digest(key.as_bytes());
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(&[regions, dim], 1.0, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_key() {
        let a = pseudo_image_feature("img-1", 2, 8);
        assert_eq!(a, pseudo_image_feature("img-1", 2, 8));
        assert_ne!(a, pseudo_image_feature("img-2", 2, 8));
        assert_eq!(a.shape(), &[2, 8]);
        assert!(a.data().iter().all(|v| v.abs() <= 1.0));
    }
}
