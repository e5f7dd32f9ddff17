use crate::nn::NnError;
use crate::tensor::Scalar;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    WeightedBce,
    WeightedSquaredError,
}

impl LossKind {
    pub fn eval<T: Scalar>(
        self,
        pred: &[T],
        target: &[T],
        w_unocc: f64,
    ) -> Result<(f64, Vec<T>), NnError> {
        match self {
            LossKind::WeightedBce => weighted_bce(pred, target, w_unocc),
            LossKind::WeightedSquaredError => weighted_squared_error(pred, target, w_unocc),
        }
    }
}

fn check_len(op: &'static str, pred: usize, target: usize) -> Result<(), NnError> {
    if pred != target || pred == 0 {
        return Err(NnError::Dimension {
            op,
            axis: "voxels",
            expected: target,
            found: pred,
        });
    }
    Ok(())
}

/// `-mean[y ln p + w (1 - y) ln(1 - p)]` with its gradient with respect to `pred`.
///
/// The gradient is the analytic derivative evaluated at the clamped probability,
/// so it stays finite for saturated outputs.
pub fn weighted_bce<T: Scalar>(
    pred: &[T],
    target: &[T],
    w_unocc: f64,
) -> Result<(f64, Vec<T>), NnError> {
    check_len("weighted_bce", pred.len(), target.len())?;
    let n = pred.len() as f64;
    let w = T::of(w_unocc);
    let eps = T::of(BCE_EPS);
    let one = T::one();
    let inv_n = T::of(1.0 / n);
    let mut total = 0.0f64;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            // `max`/`min` would silently map NaN to a bound.
            let p = if p.is_nan() { p } else { p.max(eps).min(one - eps) };
            total -= (y * p.ln() + w * (one - y) * (one - p).ln()).as_f64();
            -(y / p - w * (one - y) / (one - p)) * inv_n
        })
        .collect();
    Ok((total / n, grad))
}

/// `mean[(y + w (1 - y)) (p - y)^2]`.
pub fn weighted_squared_error<T: Scalar>(
    pred: &[T],
    target: &[T],
    w_unocc: f64,
) -> Result<(f64, Vec<T>), NnError> {
    check_len("weighted_squared_error", pred.len(), target.len())?;
    let n = pred.len() as f64;
    let w = T::of(w_unocc);
    let one = T::one();
    let two_over_n = T::of(2.0 / n);
    let mut total = 0.0f64;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let k = y + w * (one - y);
            let d = p - y;
            total += (k * d * d).as_f64();
            k * d * two_over_n
        })
        .collect();
    Ok((total / n, grad))
}
