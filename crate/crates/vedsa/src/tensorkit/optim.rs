use super::tape::ParamStore;

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: store.tensors.iter().map(|t| vec![0.0; t.values.len()]).collect(),
            v: store.tensors.iter().map(|t| vec![0.0; t.values.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently accumulated in the
    /// store. Gradients are not cleared.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (ti, tensor) in store.tensors.iter_mut().enumerate() {
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            for k in 0..tensor.values.len() {
                let g = tensor.grad[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                tensor.values[k] -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorkit::Tape;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = ParamStore::new();
        store.add("w", vec![3], vec![1.0, 2.0, 3.0]);
        store.zero_grads();
        let mut adam = Adam::new(&store, 0.1);
        adam.step(&mut store);
        assert_eq!(store.tensors[0].values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // With constant gradient g, the bias-corrected first update is
        // lr * g / (|g| + eps) ~= lr * sign(g).
        let mut store = ParamStore::new();
        store.add("w", vec![2], vec![0.0, 0.0]);
        store.zero_grads();
        store.tensors[0].grad = vec![0.3, -2.0];
        let mut adam = Adam::new(&store, 0.01);
        adam.step(&mut store);
        assert!((store.tensors[0].values[0] + 0.01).abs() < 1e-6);
        assert!((store.tensors[0].values[1] - 0.01).abs() < 1e-6);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn quadratic_loss_decreases() {
        // minimize sum((w - target)^2)
        let target = [3.0, -1.0, 0.5];
        let mut store = ParamStore::new();
        let w = store.add("w", vec![3], vec![0.0; 3]);
        let mut adam = Adam::new(&store, 0.05);
        let loss_at = |store: &ParamStore| -> f64 {
            store.tensors[0].values.iter().zip(&target).map(|(v, t)| (v - t) * (v - t)).sum()
        };
        let initial = loss_at(&store);
        for _ in 0..100 {
            store.zero_grads();
            let mut tape = Tape::new();
            let wp = tape.param(&store, w);
            let t = tape.input(target.to_vec());
            let d = tape.sub(wp, t);
            let sq = tape.mul(d, d);
            let loss = tape.sum(sq);
            tape.backward(loss, &mut store).unwrap();
            adam.step(&mut store);
        }
        assert!(loss_at(&store) < initial * 0.1);
    }
}
