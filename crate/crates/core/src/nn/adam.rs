use super::mlp::{Gradients, Mlp};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Adam moments for one network, with bias-corrected updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Scalar> AdamState<T> {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    /// Fresh state for parameter tensors of the given lengths.
    pub fn with_shapes(lens: &[usize]) -> Self {
        Self {
            m: lens.iter().map(|&n| vec![T::ZERO; n]).collect(),
            v: lens.iter().map(|&n| vec![T::ZERO; n]).collect(),
            step_count: 0,
            beta1: Self::DEFAULT_BETA1,
            beta2: Self::DEFAULT_BETA2,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn for_mlp(net: &Mlp<T>) -> Self {
        let lens: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self::with_shapes(&lens)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.v
    }

    /// One Adam update over raw parameter tensors.
    ///
    /// Non-finite gradients abort before anything is modified; non-finite
    /// parameters after the update abort with the step index.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::shape(format!("tensor {i} length mismatch")));
            }
        }
        let next_step = self.step_count + 1;
        if let Some(i) = grads.iter().position(|g| !all_finite(g)) {
            return Err(Error::NonFinite {
                step: next_step,
                what: format!("gradient tensor {i}"),
            });
        }
        self.step_count = next_step;
        let t = self.step_count as i32;
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one_m_b1, one_m_b2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let inv_corr1 = T::from_f64(1.0 / (1.0 - self.beta1.powi(t)));
        let inv_corr2 = T::from_f64(1.0 / (1.0 - self.beta2.powi(t)));
        let lr = T::from_f64(lr);
        let eps = T::from_f64(self.epsilon);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_m_b1 * g;
                *v = b2 * *v + one_m_b2 * g * g;
                let m_hat = *m * inv_corr1;
                let v_hat = *v * inv_corr2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        if let Some(i) = params.iter().position(|p| !all_finite(p)) {
            return Err(Error::NonFinite {
                step: self.step_count,
                what: format!("parameter tensor {i} after update"),
            });
        }
        Ok(())
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        let gs = grads.slices();
        let mut ps = net.param_slices_mut();
        self.update(&mut ps, &gs, lr)
    }
}

fn all_finite<T: Scalar>(xs: &[T]) -> bool {
    xs.iter().fold(true, |ok, x| ok & x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        let mut st = AdamState::<f64>::with_shapes(&[1]);
        let mut p = [0.5f64];
        st.update(&mut [&mut p[..]], &[&[2.0][..]], 1e-3).unwrap();
        let expected = 0.5 - 1e-3 * 2.0 / (2.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut st = AdamState::<f32>::with_shapes(&[3]);
        let mut p = [1.0f32, -2.0, 3.5];
        st.update(&mut [&mut p[..]], &[&[0.0; 3][..]], 1e-3).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.5]);
    }

    #[test]
    fn quadratic_trace_matches_reference() {
        // independent scalar Adam on (x-3)^2 with lr 0.1
        let lr = 0.1;
        let (mut m, mut v, mut x_ref) = (0.0f64, 0.0f64, 0.0f64);
        let mut reference = Vec::new();
        for t in 1..=10 {
            let g = 2.0 * (x_ref - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x_ref -= lr * mh / (vh.sqrt() + 1e-8);
            reference.push(x_ref);
        }

        let mut st = AdamState::<f64>::with_shapes(&[1]);
        let mut x = [0.0f64];
        let mut prev = 0.0;
        for want in reference {
            let g = [2.0 * (x[0] - 3.0)];
            st.update(&mut [&mut x[..]], &[&g[..]], lr).unwrap();
            assert!(x[0] > prev && x[0] < 3.0);
            assert!((x[0] - want).abs() < 1e-12);
            prev = x[0];
        }
    }

    #[test]
    fn non_finite_gradient_aborts_with_step() {
        let mut st = AdamState::<f32>::with_shapes(&[2]);
        let mut p = [1.0f32, 1.0];
        st.update(&mut [&mut p[..]], &[&[0.1, 0.1][..]], 1e-3).unwrap();
        let err = st
            .update(&mut [&mut p[..]], &[&[f32::NAN, 0.0][..]], 1e-3)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 2, .. }));
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn second_moments_stay_non_negative() {
        let mut st = AdamState::<f32>::with_shapes(&[4]);
        let mut p = [0.0f32; 4];
        for k in 0..20 {
            let g: Vec<f32> = (0..4).map(|i| ((i + k) as f32).sin() * 3.0).collect();
            st.update(&mut [&mut p[..]], &[&g[..]], 1e-2).unwrap();
        }
        assert!(st.second_moments()[0].iter().all(|&v| v >= 0.0));
    }
}
