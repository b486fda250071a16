use ndarray::{Array1, Array2};

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub total: T,
    pub mse: T,
    pub bce: T,
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Reconstruction MSE (squared error summed over features, averaged over
/// rows) plus `lambda` times the positive-weighted binary cross-entropy on
/// logits. Evaluated as `total = mse + lambda * bce`.
pub fn hybrid_loss<T: Scalar>(
    recon: &Array2<T>,
    target: &Array2<T>,
    logits: &Array1<T>,
    labels: &[bool],
    lambda: f64,
    pos_weight: f64,
) -> LossParts<T> {
    let rows = T::from_usize_lossy(target.nrows().max(1));
    let mut sq = T::zero();
    for (a, b) in recon.iter().zip(target.iter()) {
        let d = *a - *b;
        sq += d * d;
    }
    let mse = sq / rows;
    let alpha = T::lit(pos_weight);
    let mut ce = T::zero();
    for (&l, &y) in logits.iter().zip(labels) {
        // -log σ(l) = softplus(-l), -log(1 - σ(l)) = softplus(l)
        ce += if y { alpha * softplus(-l) } else { softplus(l) };
    }
    let bce = ce / rows;
    LossParts {
        total: mse + T::lit(lambda) * bce,
        mse,
        bce,
    }
}

/// Gradients of the total loss with respect to the reconstruction and the
/// logits.
pub(crate) fn hybrid_loss_grad<T: Scalar>(
    recon: &Array2<T>,
    target: &Array2<T>,
    logits: &Array1<T>,
    labels: &[bool],
    lambda: f64,
    pos_weight: f64,
) -> (Array2<T>, Array1<T>) {
    let rows = T::from_usize_lossy(target.nrows().max(1));
    let two = T::lit(2.0);
    let d_recon = (recon - target).mapv(|d| two * d / rows);
    let alpha = T::lit(pos_weight);
    let scale = T::lit(lambda) / rows;
    let d_logits = Array1::from_iter(logits.iter().zip(labels).map(|(&l, &y)| {
        let s = sigmoid(l);
        let g = if y { alpha * (s - T::one()) } else { s };
        scale * g
    }));
    (d_recon, d_logits)
}
