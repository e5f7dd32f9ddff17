use crate::nn::NnError;
use crate::tensor::{Scalar, Tensor};

/// Slope of the leaky ReLU on the negative half-line.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dSpec {
    /// Spatial output extent for an input of `h x w`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let k = self.kernel_size;
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if k > ph {
            return Err(NnError::Dimension {
                op: "conv2d_forward",
                axis: "height",
                expected: k,
                found: ph,
            });
        }
        if k > pw {
            return Err(NnError::Dimension {
                op: "conv2d_forward",
                axis: "width",
                expected: k,
                found: pw,
            });
        }
        Ok(((ph - k) / self.stride + 1, (pw - k) / self.stride + 1))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_size * self.kernel_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv2d(Conv2dSpec),
    /// Dense layer. When the per-sample feature vector holds several
    /// consecutive `in_dim` slices, the same weights are applied to each one.
    FullyConnected {
        in_dim: usize,
        out_dim: usize,
    },
    LeakyRelu {
        alpha: f64,
    },
    Sigmoid,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        match *self {
            LayerSpec::Conv2d(c) => {
                if c.kernel_size == 0 || c.stride == 0 {
                    return Err(NnError::Config(
                        "conv2d kernel_size and stride must be >= 1".into(),
                    ));
                }
                if c.in_channels == 0 || c.out_channels == 0 {
                    return Err(NnError::Config("conv2d channel counts must be >= 1".into()));
                }
            }
            LayerSpec::FullyConnected { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err(NnError::Config(
                        "fully_connected dimensions must be >= 1".into(),
                    ));
                }
            }
            LayerSpec::LeakyRelu { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(NnError::Config(format!(
                        "leaky_relu slope must lie in (0, 1), got {alpha}"
                    )));
                }
            }
            LayerSpec::Sigmoid => {}
        }
        Ok(())
    }

    /// Weight and bias shapes for parametrised layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d(c) => Some((
                vec![c.out_channels, c.in_channels, c.kernel_size, c.kernel_size],
                vec![c.out_channels],
            )),
            LayerSpec::FullyConnected { in_dim, out_dim } => {
                Some((vec![out_dim, in_dim], vec![out_dim]))
            }
            _ => None,
        }
    }

    /// Fan-in and fan-out used by the Xavier initialiser.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv2d(c) => {
                let kk = c.kernel_size * c.kernel_size;
                Some((c.in_channels * kk, c.out_channels * kk))
            }
            LayerSpec::FullyConnected { in_dim, out_dim } => Some((in_dim, out_dim)),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d(_) => "conv2d",
            LayerSpec::FullyConnected { .. } => "fully_connected",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Sigmoid => "sigmoid",
        }
    }
}

fn check_fc_params<T: Scalar>(
    op: &'static str,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(usize, usize), NnError> {
    if w.shape().len() != 2 {
        return Err(NnError::Dimension {
            op,
            axis: "weight_rank",
            expected: 2,
            found: w.shape().len(),
        });
    }
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    if b.len() != out_dim {
        return Err(NnError::Dimension {
            op,
            axis: "out_dim",
            expected: out_dim,
            found: b.len(),
        });
    }
    Ok((out_dim, in_dim))
}

/// Rows of an `[.., in_dim]` input viewed as a matrix.
fn fc_rows<T: Scalar>(op: &'static str, x: &Tensor<T>, in_dim: usize) -> Result<usize, NnError> {
    let last = x.shape().last().copied().unwrap_or(0);
    if last != in_dim {
        return Err(NnError::Dimension {
            op,
            axis: "in_dim",
            expected: in_dim,
            found: last,
        });
    }
    Ok(x.len() / in_dim)
}

/// `y = W x + b` for `x` of shape `[in_dim]` or `[rows, in_dim]`.
pub fn fc_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let (out_dim, in_dim) = check_fc_params("fc_forward", w, b)?;
    let rows = fc_rows("fc_forward", x, in_dim)?;
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().expect("non-empty shape") = out_dim;
    Tensor::from_vec(&out_shape, fc_forward_raw(x.data(), rows, w, b))
}

pub(crate) fn fc_forward_raw<T: Scalar>(x: &[T], rows: usize, w: &Tensor<T>, b: &Tensor<T>) -> Vec<T> {
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    let mut y = Vec::with_capacity(rows * out_dim);
    for _ in 0..rows {
        y.extend_from_slice(b.data());
    }
    T::gemm(false, true, rows, out_dim, in_dim, T::one(), x, w.data(), T::one(), &mut y);
    y
}

/// Reverse pass of [`fc_forward`]. Accumulates into `grads` when given and
/// returns the gradient with respect to `x`.
pub fn fc_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    grads: Option<(&mut Tensor<T>, &mut Tensor<T>)>,
) -> Result<Tensor<T>, NnError> {
    if w.shape().len() != 2 {
        return Err(NnError::Dimension {
            op: "fc_backward",
            axis: "weight_rank",
            expected: 2,
            found: w.shape().len(),
        });
    }
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    let rows = fc_rows("fc_backward", x, in_dim)?;
    if dy.len() != rows * out_dim {
        return Err(NnError::Dimension {
            op: "fc_backward",
            axis: "out_dim",
            expected: rows * out_dim,
            found: dy.len(),
        });
    }
    Tensor::from_vec(x.shape(), fc_backward_raw(x.data(), rows, w, dy.data(), grads))
}

pub(crate) fn fc_backward_raw<T: Scalar>(
    x: &[T],
    rows: usize,
    w: &Tensor<T>,
    dy: &[T],
    grads: Option<(&mut Tensor<T>, &mut Tensor<T>)>,
) -> Vec<T> {
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    if let Some((dw, db)) = grads {
        T::gemm(true, false, out_dim, in_dim, rows, T::one(), dy, x, T::one(), dw.data_mut());
        let dbd = db.data_mut();
        for row in dy.chunks_exact(out_dim) {
            for (acc, &g) in dbd.iter_mut().zip(row) {
                *acc += g;
            }
        }
    }
    let mut dx = vec![T::zero(); rows * in_dim];
    T::gemm(false, false, rows, in_dim, out_dim, T::one(), dy, w.data(), T::zero(), &mut dx);
    dx
}

/// Batch size and spatial extents of one convolution application.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub(crate) fn new(spec: &Conv2dSpec, batch: usize, h: usize, w: usize) -> Result<Self, NnError> {
        let (oh, ow) = spec.output_hw(h, w)?;
        Ok(Self { batch, h, w, oh, ow })
    }
}

fn conv_geometry<T: Scalar>(
    op: &'static str,
    x: &Tensor<T>,
    spec: &Conv2dSpec,
) -> Result<ConvGeometry, NnError> {
    let s = x.shape();
    let (batch, c, h, w) = match *s {
        [c, h, w] => (1, c, h, w),
        [b, c, h, w] => (b, c, h, w),
        _ => {
            return Err(NnError::Dimension {
                op,
                axis: "rank",
                expected: 4,
                found: s.len(),
            })
        }
    };
    if c != spec.in_channels {
        return Err(NnError::Dimension {
            op,
            axis: "in_channels",
            expected: spec.in_channels,
            found: c,
        });
    }
    ConvGeometry::new(spec, batch, h, w)
}

fn check_conv_params<T: Scalar>(
    spec: &Conv2dSpec,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<(), NnError> {
    let want = [
        spec.out_channels,
        spec.in_channels,
        spec.kernel_size,
        spec.kernel_size,
    ];
    if w.shape() != want {
        let axis = if w.shape().len() != 4 {
            "weight_rank"
        } else if w.shape()[0] != want[0] {
            "out_channels"
        } else if w.shape()[1] != want[1] {
            "in_channels"
        } else {
            "kernel_size"
        };
        return Err(NnError::Dimension {
            op: "conv2d",
            axis,
            expected: want.iter().product(),
            found: w.len(),
        });
    }
    if let Some(b) = b {
        if b.len() != spec.out_channels {
            return Err(NnError::Dimension {
                op: "conv2d",
                axis: "out_channels",
                expected: spec.out_channels,
                found: b.len(),
            });
        }
    }
    Ok(())
}

/// Unfolds one `[C, H, W]` image into a `[C*k*k, oh*ow]` patch matrix.
fn im2col<T: Scalar>(x: &[T], spec: &Conv2dSpec, g: &ConvGeometry, col: &mut [T]) {
    let k = spec.kernel_size;
    let n = g.oh * g.ow;
    for c in 0..spec.in_channels {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut col[((c * k + ki) * k + kj) * n..][..n];
                for oy in 0..g.oh {
                    let iy = (oy * spec.stride + ki) as isize - spec.padding as isize;
                    let dst = &mut row[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * spec.stride + kj) as isize - spec.padding as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Folds a patch-matrix gradient back onto the `[C, H, W]` image, summing
/// overlapping contributions.
fn col2im<T: Scalar>(col: &[T], spec: &Conv2dSpec, g: &ConvGeometry, dx: &mut [T]) {
    let k = spec.kernel_size;
    let n = g.oh * g.ow;
    for c in 0..spec.in_channels {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &col[((c * k + ki) * k + kj) * n..][..n];
                for oy in 0..g.oh {
                    let iy = (oy * spec.stride + ki) as isize - spec.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = iy as usize * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * spec.stride + kj) as isize - spec.padding as isize;
                        if ix >= 0 && ix < g.w as isize {
                            plane[base + ix as usize] += row[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded strided cross-correlation. Accepts `[C, H, W]` or
/// `[B, C, H, W]` inputs and keeps the batch axis if present.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    spec: &Conv2dSpec,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    check_conv_params(spec, w, Some(b))?;
    let g = conv_geometry("conv2d_forward", x, spec)?;
    let out_shape = if x.shape().len() == 3 {
        vec![spec.out_channels, g.oh, g.ow]
    } else {
        vec![g.batch, spec.out_channels, g.oh, g.ow]
    };
    Tensor::from_vec(&out_shape, conv2d_forward_raw(x.data(), spec, &g, w, b))
}

pub(crate) fn conv2d_forward_raw<T: Scalar>(
    x: &[T],
    spec: &Conv2dSpec,
    g: &ConvGeometry,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Vec<T> {
    let n = g.oh * g.ow;
    let kdim = spec.patch_len();
    let in_len = spec.in_channels * g.h * g.w;
    let out_len = spec.out_channels * n;
    let mut y = vec![T::zero(); g.batch * out_len];
    let mut col = vec![T::zero(); kdim * n];
    for s in 0..g.batch {
        im2col(&x[s * in_len..(s + 1) * in_len], spec, g, &mut col);
        let ys = &mut y[s * out_len..(s + 1) * out_len];
        for (row, &bias) in ys.chunks_exact_mut(n).zip(b.data()) {
            row.fill(bias);
        }
        T::gemm(false, false, spec.out_channels, n, kdim, T::one(), w.data(), &col, T::one(), ys);
    }
    y
}

/// Reverse pass of [`conv2d_forward`].
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    spec: &Conv2dSpec,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    grads: Option<(&mut Tensor<T>, &mut Tensor<T>)>,
) -> Result<Tensor<T>, NnError> {
    check_conv_params(spec, w, None)?;
    let g = conv_geometry("conv2d_backward", x, spec)?;
    let out_len = spec.out_channels * g.oh * g.ow;
    if dy.len() != g.batch * out_len {
        return Err(NnError::Dimension {
            op: "conv2d_backward",
            axis: "output",
            expected: g.batch * out_len,
            found: dy.len(),
        });
    }
    Tensor::from_vec(x.shape(), conv2d_backward_raw(x.data(), spec, &g, w, dy.data(), grads))
}

pub(crate) fn conv2d_backward_raw<T: Scalar>(
    x: &[T],
    spec: &Conv2dSpec,
    g: &ConvGeometry,
    w: &Tensor<T>,
    dy: &[T],
    mut grads: Option<(&mut Tensor<T>, &mut Tensor<T>)>,
) -> Vec<T> {
    let n = g.oh * g.ow;
    let kdim = spec.patch_len();
    let in_len = spec.in_channels * g.h * g.w;
    let out_len = spec.out_channels * n;
    let mut dx = vec![T::zero(); g.batch * in_len];
    let mut col = vec![T::zero(); kdim * n];
    let mut dcol = vec![T::zero(); kdim * n];
    for s in 0..g.batch {
        let dys = &dy[s * out_len..(s + 1) * out_len];
        if let Some((dw, db)) = grads.as_mut() {
            im2col(&x[s * in_len..(s + 1) * in_len], spec, g, &mut col);
            T::gemm(false, true, spec.out_channels, kdim, n, T::one(), dys, &col, T::one(), dw.data_mut());
            for (acc, row) in db.data_mut().iter_mut().zip(dys.chunks_exact(n)) {
                *acc += row.iter().copied().sum::<T>();
            }
        }
        T::gemm(true, false, kdim, n, spec.out_channels, T::one(), w.data(), dys, T::zero(), &mut dcol);
        col2im(&dcol, spec, g, &mut dx[s * in_len..(s + 1) * in_len]);
    }
    dx
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, alpha: f64) -> Tensor<T> {
    let a = T::of(alpha);
    x.map(|v| if v > T::zero() { v } else { a * v })
}

pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, alpha: f64) -> Tensor<T> {
    let a = T::of(alpha);
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { a * g })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

#[inline]
/// Saturates at the representable values nearest 0 and 1, never at the bounds.
fn logistic<T: Scalar>(v: T) -> T {
    let y = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let below_one = T::one() - T::epsilon() / (T::one() + T::one());
    y.max(T::min_positive_value()).min(below_one)
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(logistic)
}

/// Gradient through the logistic function given its output `y`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&p, &g)| g * p * (T::one() - p))
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn fc_identity_and_hand_sum() {
        let w = t(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b = t(&[2], vec![0.0, 0.0]);
        let y = fc_forward(&t(&[2], vec![3.0, -1.0]), &w, &b).unwrap();
        assert_eq!(y.data(), &[3.0, -1.0]);

        let w = t(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2], vec![0.5, -0.5]);
        let y = fc_forward(&t(&[2], vec![1.0, 1.0]), &w, &b).unwrap();
        assert_eq!(y.data(), &[3.5, 6.5]);

        let y = fc_forward(&t(&[2], vec![0.0, 0.0]), &w, &b).unwrap();
        assert_eq!(y.data(), b.data());
    }

    #[test]
    fn fc_shape_mismatch_names_axis() {
        let w = t(&[2, 3], vec![0.0; 6]);
        let b = t(&[2], vec![0.0; 2]);
        match fc_forward(&t(&[2], vec![1.0, 1.0]), &w, &b) {
            Err(NnError::Dimension { axis, expected, found, .. }) => {
                assert_eq!((axis, expected, found), ("in_dim", 3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_b = t(&[3], vec![0.0; 3]);
        let err = fc_forward(&t(&[3], vec![0.0; 3]), &w, &bad_b).unwrap_err();
        assert!(err.to_string().contains("out_dim"));
    }

    #[test]
    fn conv_two_by_two_ones_kernel() {
        let x = t(&[1, 3, 3], (1..=9).map(f64::from).collect());
        let spec = Conv2dSpec {
            in_channels: 1,
            out_channels: 1,
            kernel_size: 2,
            stride: 1,
            padding: 0,
        };
        let w = t(&[1, 1, 2, 2], vec![1.0; 4]);
        let b = t(&[1], vec![0.0]);
        let y = conv2d_forward(&x, &spec, &w, &b).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn conv_identity_kernel_and_zero_input() {
        let spec = Conv2dSpec {
            in_channels: 1,
            out_channels: 1,
            kernel_size: 1,
            stride: 1,
            padding: 0,
        };
        let x = t(&[1, 2, 3], vec![0.5, -1.0, 2.0, 7.0, 0.0, -3.5]);
        let y = conv2d_forward(&x, &spec, &t(&[1, 1, 1, 1], vec![1.0]), &t(&[1], vec![0.0]))
            .unwrap();
        assert_eq!(y.data(), x.data());

        let spec = Conv2dSpec {
            in_channels: 2,
            out_channels: 3,
            kernel_size: 3,
            stride: 2,
            padding: 1,
        };
        let w = Tensor::from_fn(&[3, 2, 3, 3], |i| i as f64 * 0.1);
        let b = t(&[3], vec![1.5, -2.0, 0.25]);
        let y = conv2d_forward(&Tensor::zeros(&[2, 5, 5]), &spec, &w, &b).unwrap();
        assert_eq!(y.shape(), &[3, 3, 3]);
        for (c, plane) in y.data().chunks(9).enumerate() {
            assert!(plane.iter().all(|&v| v == b.data()[c]));
        }
    }

    #[test]
    fn conv_kernel_larger_than_padded_input() {
        let spec = Conv2dSpec {
            in_channels: 1,
            out_channels: 1,
            kernel_size: 5,
            stride: 1,
            padding: 1,
        };
        let err = conv2d_forward(
            &Tensor::<f64>::zeros(&[1, 2, 2]),
            &spec,
            &Tensor::zeros(&[1, 1, 5, 5]),
            &Tensor::zeros(&[1]),
        )
        .unwrap_err();
        assert!(matches!(err, NnError::Dimension { axis: "height", .. }));
    }

    #[test]
    fn leaky_relu_values() {
        let y = leaky_relu(&t(&[3], vec![5.0, -2.0, 0.0]), 0.01);
        assert_eq!(y.data()[0], 5.0);
        assert!((y.data()[1] + 0.02).abs() < 1e-15);
        assert_eq!(y.data()[2], 0.0);
    }

    #[test]
    fn sigmoid_values() {
        let y = sigmoid(&t(&[2], vec![0.0, 30.0]));
        assert_eq!(y.data()[0], 0.5);
        let eps = 1.0 - y.data()[1];
        assert!(eps > 0.0 && eps < 1e-13);
        let xs: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.37).collect();
        let pos = sigmoid(&t(&[xs.len()], xs.clone()));
        let neg = sigmoid(&t(&[xs.len()], xs.iter().map(|v| -v).collect()));
        for (a, b) in pos.data().iter().zip(neg.data()) {
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_spec_validation() {
        assert!(LayerSpec::LeakyRelu { alpha: 1.0 }.validate().is_err());
        assert!(LayerSpec::LeakyRelu { alpha: 0.0 }.validate().is_err());
        assert!(LayerSpec::LeakyRelu { alpha: 0.01 }.validate().is_ok());
        let bad = Conv2dSpec {
            in_channels: 1,
            out_channels: 1,
            kernel_size: 0,
            stride: 1,
            padding: 0,
        };
        assert!(LayerSpec::Conv2d(bad).validate().is_err());
        let bad = Conv2dSpec {
            kernel_size: 3,
            stride: 0,
            ..bad
        };
        assert!(LayerSpec::Conv2d(bad).validate().is_err());
    }
}
