//! Exact x2 spatial resamplers used by the prediction-rescaling paths.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Transposed convolution with a per-channel 2x2 kernel at stride 2: each
/// input pixel expands into its own 2x2 output block, scaled by that
/// channel's kernel. Doubles both spatial extents exactly. Channel mixing, if
/// wanted, is a separate affine map.
///
/// `x` is `[h,w,c]` with `h == w`; `kernel` is `[c,2,2]`.
pub fn deconv_2x<E: Scalar>(x: &Tensor<E>, kernel: &Tensor<E>) -> Result<Tensor<E>> {
    let (h, w, c) = x.shape3("deconv_2x")?;
    if h != w {
        return Err(Error::BadShape {
            op: "deconv_2x",
            expected: "a square spatial grid",
            shape: x.shape().to_vec(),
        });
    }
    if kernel.shape() != [c, 2, 2] {
        return Err(Error::ShapeMismatch {
            op: "deconv_2x",
            lhs: x.shape().to_vec(),
            rhs: kernel.shape().to_vec(),
        });
    }
    let src = x.data();
    let ker = kernel.data();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![E::zero(); oh * ow * c];
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let v = src[(i * w + j) * c + ch];
                for di in 0..2 {
                    for dj in 0..2 {
                        let k = ker[ch * 4 + di * 2 + dj];
                        out[((2 * i + di) * ow + (2 * j + dj)) * c + ch] = v * k;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_op(
        vec![oh, ow, c],
        out,
        vec![x.clone(), kernel.clone()],
        move |parents, g| {
            let src = parents[0].data();
            let ker = parents[1].data();
            let mut dx = vec![E::zero(); h * w * c];
            let mut dk = vec![E::zero(); c * 4];
            for i in 0..h {
                for j in 0..w {
                    for ch in 0..c {
                        let v = src[(i * w + j) * c + ch];
                        let mut acc = E::zero();
                        for di in 0..2 {
                            for dj in 0..2 {
                                let gv = g[((2 * i + di) * ow + (2 * j + dj)) * c + ch];
                                acc += gv * ker[ch * 4 + di * 2 + dj];
                                dk[ch * 4 + di * 2 + dj] += gv * v;
                            }
                        }
                        dx[(i * w + j) * c + ch] = acc;
                    }
                }
            }
            vec![Some(dx), Some(dk)]
        },
    ))
}

/// Mean over non-overlapping 2x2 blocks: `[h,w,c] -> [h/2,w/2,c]`.
pub fn avgpool_2x<E: Scalar>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (h, w, c) = x.shape3("avgpool_2x")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::BadShape {
            op: "avgpool_2x",
            expected: "even spatial extents",
            shape: x.shape().to_vec(),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = E::from_f64(0.25);
    let src = x.data();
    let mut out = vec![E::zero(); oh * ow * c];
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut acc = E::zero();
                for di in 0..2 {
                    for dj in 0..2 {
                        acc += src[((2 * i + di) * w + (2 * j + dj)) * c + ch];
                    }
                }
                out[(i * ow + j) * c + ch] = acc * quarter;
            }
        }
    }
    Ok(Tensor::from_op(
        vec![oh, ow, c],
        out,
        vec![x.clone()],
        move |_, g| {
            let mut dx = vec![E::zero(); h * w * c];
            for i in 0..oh {
                for j in 0..ow {
                    for ch in 0..c {
                        let gv = g[(i * ow + j) * c + ch] * quarter;
                        for di in 0..2 {
                            for dj in 0..2 {
                                dx[((2 * i + di) * w + (2 * j + dj)) * c + ch] = gv;
                            }
                        }
                    }
                }
            }
            vec![Some(dx)]
        },
    ))
}
