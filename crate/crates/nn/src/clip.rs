use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// L2 norm over the concatenation of all tensors.
pub fn global_norm<'a, T: Scalar>(tensors: impl IntoIterator<Item = &'a Tensor<T>>) -> T {
    tensors
        .into_iter()
        .map(|t| t.sum_sq())
        .fold(T::zero(), |a, b| a + b)
        .sqrt()
}

/// Rescales `grads` in place so their global norm is at most `threshold`.
/// Returns the norm measured before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], threshold: T) -> T {
    assert!(threshold > T::zero(), "clip threshold must be positive");
    let norm = global_norm(grads.iter());
    if norm > threshold {
        let factor = threshold / norm;
        grads.iter_mut().for_each(|g| g.scale_in_place(factor));
    }
    norm
}

impl<T: Scalar> ParamStore<T> {
    pub fn grad_norm(&self) -> T {
        global_norm(self.iter().map(|p| &p.grad))
    }

    /// Clips the accumulated gradients; returns the pre-clip norm.
    pub fn clip_grad_norm(&mut self, threshold: T) -> T {
        assert!(threshold > T::zero(), "clip threshold must be positive");
        let norm = self.grad_norm();
        if norm > threshold {
            let factor = threshold / norm;
            self.iter_mut().for_each(|p| p.grad.scale_in_place(factor));
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_norm_is_untouched() {
        let mut g = vec![Tensor::new(&[2], vec![0.3f64, 0.4]).unwrap()];
        let before = g.clone();
        let norm = clip_global_norm(&mut g, 1.0);
        assert!((norm - 0.5).abs() < 1e-12);
        assert_eq!(g, before);
    }

    #[test]
    fn large_norm_is_scaled_to_threshold() {
        let mut g = vec![
            Tensor::new(&[2], vec![2.4f64, 0.0]).unwrap(),
            Tensor::new(&[1], vec![3.2f64]).unwrap(),
        ];
        let norm = clip_global_norm(&mut g, 1.0);
        assert!((norm - 4.0).abs() < 1e-12);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-12);
        assert!((global_norm(g.iter()) - 1.0).abs() < 1e-6);
    }
}
