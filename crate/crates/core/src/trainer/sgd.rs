use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// One SGD step with heavy-ball momentum and L2 weight decay:
///
/// ```text
/// v <- momentum * v + grad + weight_decay * param
/// param <- param - lr * v
/// ```
pub fn sgd_update(
    param: &mut Tensor,
    grad: &Tensor,
    velocity: &mut Tensor,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    for (other, op) in [(grad, "sgd_update: grad"), (&*velocity, "sgd_update: velocity")] {
        if other.shape() != param.shape() {
            return Err(Error::Shape {
                op,
                left: param.shape(),
                right: other.shape(),
            });
        }
    }
    for ((w, g), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(velocity.data_mut())
    {
        *v = momentum * *v + g + weight_decay * *w;
        *w -= lr * *v;
    }
    Ok(())
}

/// Momentum buffers for a list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn zeros_like<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        SgdState {
            velocity: params
                .into_iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }
}
