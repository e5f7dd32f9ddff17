use super::TrainError;
use crate::nn::{GroupGrad, NetworkParameters};
use crate::tensor::{Scalar, Tensor};

/// SGD with heavy-ball momentum: `v = m v + g`, `p -= lr v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<GroupGrad<T>>,
}

impl<T: Scalar> Sgd<T> {
    /// Zero momentum buffers shaped like `params`.
    pub fn new(params: &NetworkParameters<T>, learning_rate: f64, momentum: f64) -> Self {
        let velocity = params
            .groups()
            .iter()
            .map(|g| GroupGrad {
                weight: Tensor::zeros(g.weight.shape()),
                bias: Tensor::zeros(g.bias.shape()),
            })
            .collect();
        Self {
            learning_rate,
            momentum,
            velocity,
        }
    }

    pub fn with_velocity(
        params: &NetworkParameters<T>,
        learning_rate: f64,
        momentum: f64,
        velocity: Vec<GroupGrad<T>>,
    ) -> Result<Self, TrainError> {
        check_aligned(params, &velocity, "momentum buffer")?;
        Ok(Self {
            learning_rate,
            momentum,
            velocity,
        })
    }

    pub fn velocity(&self) -> &[GroupGrad<T>] {
        &self.velocity
    }

    /// Updates every trainable group; frozen groups and their buffers are untouched.
    pub fn step(
        &mut self,
        params: &mut NetworkParameters<T>,
        grads: &[GroupGrad<T>],
    ) -> Result<(), TrainError> {
        check_aligned(params, grads, "gradient")?;
        check_aligned(params, &self.velocity, "momentum buffer")?;
        let lr = T::of(self.learning_rate);
        let m = T::of(self.momentum);
        for ((p, g), v) in params
            .groups_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.velocity)
        {
            if !p.trainable {
                continue;
            }
            for (pt, gt, vt) in [
                (&mut p.weight, &g.weight, &mut v.weight),
                (&mut p.bias, &g.bias, &mut v.bias),
            ] {
                for ((pv, &gv), vv) in pt.data_mut().iter_mut().zip(gt.data()).zip(vt.data_mut()) {
                    *vv = m * *vv + gv;
                    *pv -= lr * *vv;
                }
            }
        }
        Ok(())
    }
}

fn check_aligned<T: Scalar>(
    params: &NetworkParameters<T>,
    set: &[GroupGrad<T>],
    what: &str,
) -> Result<(), TrainError> {
    let groups = params.groups();
    if groups.len() != set.len() {
        return Err(TrainError::State(format!(
            "{what} set has {} groups, parameters have {}",
            set.len(),
            groups.len()
        )));
    }
    for (p, g) in groups.iter().zip(set) {
        if p.weight.shape() != g.weight.shape() || p.bias.shape() != g.bias.shape() {
            return Err(TrainError::State(format!(
                "{what} for group `{}` has the wrong shape",
                p.name
            )));
        }
    }
    Ok(())
}

/// One momentum step that allocates its own buffers; convenient for single updates.
pub fn sgd_step<T: Scalar>(
    params: &mut NetworkParameters<T>,
    grads: &[GroupGrad<T>],
    learning_rate: f64,
    momentum: f64,
) -> Result<(), TrainError> {
    Sgd::new(params, learning_rate, momentum).step(params, grads)
}
