use crate::error::{Error, Result};
use crate::ndcore::{Matrix, ParamKind, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for every parameter of one store.
///
/// Dense parameters are updated whenever their gradient is not all zero.
/// Embedding tables are updated only on the rows the last backward pass
/// wrote to; untouched rows keep their value and their moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        AdamState {
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &Matrix {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &Matrix {
        &self.v[index]
    }

    /// Applies one bias-corrected update from the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::shape(
                "AdamState::step",
                format!("{} moment slots", self.m.len()),
                format!("{} parameters", store.len()),
            ));
        }
        for (_, p) in store.iter() {
            if p.trainable && !p.grad.is_finite() {
                return Err(Error::numeric("adam_step", format!("non-finite gradient in {}", p.name)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);

        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let cols = p.value.cols();
            let rows: Vec<usize> = match p.kind {
                ParamKind::Dense => {
                    if p.grad.as_slice().iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    (0..p.value.rows()).collect()
                }
                ParamKind::Embedding => p.touched.iter().copied().collect(),
            };
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            let grad = p.grad.as_slice();
            let value = p.value.as_mut_slice();
            for r in rows {
                for k in r * cols..(r + 1) * cols {
                    let g = grad[k];
                    m[k] = b1 * m[k] + (1.0 - b1) * g;
                    v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                    let m_hat = m[k] / c1;
                    let v_hat = v[k] / c2;
                    value[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::ParamKind;

    fn scalar_store(theta: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.insert("theta", Matrix::row_vector(&[theta]), ParamKind::Dense).unwrap();
        s.get_mut(id).grad = Matrix::row_vector(&[grad]);
        s
    }

    #[test]
    fn first_step_matches_hand_recurrence() {
        let mut store = scalar_store(1.5, 0.2);
        let mut adam = AdamState::new(&store);
        adam.step(&mut store, 0.01).unwrap();
        // m = 0.1·0.2 = 0.02, v = 0.001·0.04 = 4e-5; m̂ = 0.2, v̂ = 0.04
        let expected = 1.5 - 0.01 * 0.2 / (0.04f64.sqrt() + 1e-8);
        assert!((store.value(store.id("theta").unwrap()).get(0, 0) - expected).abs() < 1e-15);
        assert!((adam.first_moment(0).get(0, 0) - 0.02).abs() < 1e-17);
        assert!((adam.second_moment(0).get(0, 0) - 4e-5).abs() < 1e-19);
    }

    #[test]
    fn second_step_matches_hand_recurrence() {
        let mut store = scalar_store(0.0, -1.0);
        let mut adam = AdamState::new(&store);
        adam.step(&mut store, 0.1).unwrap();
        let id = store.id("theta").unwrap();
        store.get_mut(id).grad = Matrix::row_vector(&[0.5]);
        adam.step(&mut store, 0.1).unwrap();
        let m1 = 0.1 * -1.0;
        let v1 = 0.001 * 1.0;
        let m2 = 0.9 * m1 + 0.1 * 0.5;
        let v2 = 0.999 * v1 + 0.001 * 0.25;
        let step1 = 0.1 * (m1 / 0.1) / ((v1 / 0.001f64).sqrt() + 1e-8);
        let step2 = 0.1 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64 * 0.999)).sqrt() + 1e-8);
        assert!((store.value(id).get(0, 0) - (0.0 - step1 - step2)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = scalar_store(0.7, 0.0);
        let mut adam = AdamState::new(&store);
        adam.step(&mut store, 0.1).unwrap();
        assert_eq!(store.value(store.id("theta").unwrap()).get(0, 0), 0.7);
    }

    #[test]
    fn zero_learning_rate_is_bitwise_identity() {
        let mut store = scalar_store(-0.3, 4.0);
        let before = store.value(store.id("theta").unwrap()).clone();
        let mut adam = AdamState::new(&store);
        adam.step(&mut store, 0.0).unwrap();
        assert_eq!(store.value(store.id("theta").unwrap()), &before);
    }

    #[test]
    fn only_touched_embedding_rows_move() {
        let mut store = ParamStore::new();
        let id = store.insert("emb", Matrix::filled(3, 2, 1.0), ParamKind::Embedding).unwrap();
        store.accumulate_row(id, 1, &[0.5, -0.5]);
        // a stray gradient on an untouched row must be ignored
        store.get_mut(id).grad.set(2, 0, 9.0);
        let mut adam = AdamState::new(&store);
        adam.step(&mut store, 0.1).unwrap();
        let v = store.value(id);
        assert_eq!(v.row(0), &[1.0, 1.0]);
        assert_eq!(v.row(2), &[1.0, 1.0]);
        assert!(v.get(1, 0) < 1.0 && v.get(1, 1) > 1.0);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = scalar_store(0.0, f64::INFINITY);
        let mut adam = AdamState::new(&store);
        let err = adam.step(&mut store, 0.1).unwrap_err().to_string();
        assert!(err.contains("theta"), "{err}");
        assert_eq!(adam.steps(), 0);
    }
}
