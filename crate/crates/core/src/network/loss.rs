use crate::error::{invalid, shape_err, Result};
use crate::tensor::{Element, Tensor};

/// Mean categorical cross-entropy and its gradient with respect to the logits.
#[derive(Clone, Debug)]
pub struct LossValue<T> {
    pub loss: f64,
    /// `(p − y) / N`: gradient through the fused softmax + cross-entropy.
    pub logits_grad: Tensor<T>,
}

const PROB_FLOOR: f64 = 1e-12;

/// `−mean ln p[true]` with probabilities floored at 1e-12.
pub fn cross_entropy<T: Element>(probs: &Tensor<T>, one_hot: &Tensor<T>) -> Result<LossValue<T>> {
    let (n, c) = probs.dims2()?;
    if one_hot.shape() != probs.shape() {
        return Err(shape_err(
            "cross_entropy",
            format!("labels {:?} vs probabilities {:?}", one_hot.shape(), probs.shape()),
        ));
    }
    let mut total = 0.0;
    for (r, (p_row, y_row)) in probs.data().chunks(c).zip(one_hot.data().chunks(c)).enumerate() {
        let mut hot = None;
        for (j, &y) in y_row.iter().enumerate() {
            if y == T::one() && hot.is_none() {
                hot = Some(j);
            } else if y != T::zero() {
                return Err(invalid(format!("label row {r} is not one-hot")));
            }
        }
        let Some(j) = hot else {
            return Err(invalid(format!("label row {r} is not one-hot")));
        };
        total -= p_row[j].as_f64().max(PROB_FLOOR).ln();
    }
    let inv_n = T::of(1.0 / n as f64);
    let logits_grad = probs.zip_map(one_hot, "cross_entropy", |p, y| (p - y) * inv_n)?;
    Ok(LossValue {
        loss: total / n as f64,
        logits_grad,
    })
}
