//! Adam optimizer state and update rule.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates, one pair per parameter tensor, plus the
/// shared step counter. Moments start at zero; the counter advances by
/// exactly one per optimizer step. A single state must not be updated from
/// two threads at once.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
    pub step_count: u64,
    pub hyper: AdamHyper,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[Vec<usize>], hyper: AdamHyper) -> Self {
        AdamState {
            first_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step_count: 0,
            hyper,
        }
    }

    pub fn cast<U: Scalar>(&self) -> AdamState<U> {
        AdamState {
            first_moment: self.first_moment.iter().map(Tensor::cast).collect(),
            second_moment: self.second_moment.iter().map(Tensor::cast).collect(),
            step_count: self.step_count,
            hyper: self.hyper,
        }
    }

    /// One optimizer step over aligned (name, parameter, gradient) triples.
    /// Rejects non-finite gradients, naming the offending tensor.
    pub fn step(&mut self, entries: &mut [(&str, &mut Tensor<T>, &Tensor<T>)]) -> Result<()> {
        if entries.len() != self.first_moment.len() {
            return Err(Error::invalid(
                "AdamState::step",
                format!(
                    "{} parameter tensors but state holds {}",
                    entries.len(),
                    self.first_moment.len()
                ),
            ));
        }
        for (name, _, grad) in entries.iter() {
            if !grad.is_all_finite() {
                return Err(Error::NonFiniteGradient {
                    name: (*name).to_string(),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count;
        for (i, (_, param, grad)) in entries.iter_mut().enumerate() {
            adam_update_tensor(
                param,
                grad,
                &mut self.first_moment[i],
                &mut self.second_moment[i],
                self.hyper,
                t,
            )?;
        }
        Ok(())
    }
}

/// Adam with bias correction for one tensor at step `t` (1-based, already
/// incremented).
pub fn adam_update_tensor<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    m: &mut Tensor<T>,
    v: &mut Tensor<T>,
    hyper: AdamHyper,
    t: u64,
) -> Result<()> {
    if !param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v) {
        return Err(Error::shape(
            "adam_update_tensor",
            format!("{:?}", param.shape()),
            format!(
                "grad {:?}, m {:?}, v {:?}",
                grad.shape(),
                m.shape(),
                v.shape()
            ),
        ));
    }
    let b1 = T::from_f64(hyper.beta1);
    let b2 = T::from_f64(hyper.beta2);
    let one = T::one();
    let lr = T::from_f64(hyper.learning_rate);
    let eps = T::from_f64(hyper.epsilon);
    let bc1 = T::from_f64(1.0 - hyper.beta1.powi(t as i32));
    let bc2 = T::from_f64(1.0 - hyper.beta2.powi(t as i32));

    let pdata = param.data_mut();
    let gdata = grad.data();
    let mdata = m.data_mut();
    let vdata = v.data_mut();
    for i in 0..pdata.len() {
        let g = gdata[i];
        mdata[i] = b1 * mdata[i] + (one - b1) * g;
        vdata[i] = b2 * vdata[i] + (one - b2) * g * g;
        let m_hat = mdata[i] / bc1;
        let v_hat = vdata[i] / bc2;
        pdata[i] = pdata[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
