//! Differentiable kernels over dense tensors.
//!
//! Every kernel is deterministic: identical inputs give bit-identical outputs
//! within one build and element type.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::util::worker_threads;

fn same_shape<E: Scalar>(op: &'static str, a: &Tensor<E>, b: &Tensor<E>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Elementwise sum.
pub fn add<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |_, g| vec![Some(g.to_vec()), Some(g.to_vec())],
    ))
}

/// Elementwise difference.
pub fn sub<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    same_shape("sub", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |_, g| {
            vec![
                Some(g.to_vec()),
                Some(g.iter().map(|&v| -v).collect()),
            ]
        },
    ))
}

/// Elementwise (Hadamard) product.
pub fn mul<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |parents, g| {
            let da = g
                .iter()
                .zip(parents[1].data())
                .map(|(&gv, &bv)| gv * bv)
                .collect();
            let db = g
                .iter()
                .zip(parents[0].data())
                .map(|(&gv, &av)| gv * av)
                .collect();
            vec![Some(da), Some(db)]
        },
    ))
}

/// Multiply every element by a constant.
pub fn scale<E: Scalar>(a: &Tensor<E>, factor: f64) -> Tensor<E> {
    let c = E::from_f64(factor);
    let data = a.data().iter().map(|&x| x * c).collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], move |_, g| {
        vec![Some(g.iter().map(|&v| v * c).collect())]
    })
}

/// Sum of all elements, as a scalar tensor.
pub fn sum<E: Scalar>(a: &Tensor<E>) -> Tensor<E> {
    let mut acc = E::zero();
    for &v in a.data() {
        acc += v;
    }
    let n = a.len();
    Tensor::from_op(vec![1], vec![acc], vec![a.clone()], move |_, g| {
        vec![Some(vec![g[0]; n])]
    })
}

/// GELU in its tanh form.
pub fn gelu<E: Scalar>(a: &Tensor<E>) -> Tensor<E> {
    let c = E::from_f64(0.7978845608028654); // sqrt(2/pi)
    let k = E::from_f64(0.044715);
    let half = E::from_f64(0.5);
    let one = E::one();
    let three = E::from_f64(3.0);
    let data = a
        .data()
        .iter()
        .map(|&x| {
            let u = c * (x + k * x * x * x);
            half * x * (one + u.tanh())
        })
        .collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], move |parents, g| {
        let dx = parents[0]
            .data()
            .iter()
            .zip(g)
            .map(|(&x, &gv)| {
                let u = c * (x + k * x * x * x);
                let t = u.tanh();
                let du = c * (one + three * k * x * x);
                gv * (half * (one + t) + half * x * (one - t * t) * du)
            })
            .collect();
        vec![Some(dx)]
    })
}

pub(crate) fn matmul_raw<E: Scalar>(a: &[E], b: &[E], out: &mut [E], m: usize, k: usize, n: usize) {
    let threads = worker_threads();
    if threads > 1 && m >= 2 * threads && m * k * n >= 1 << 18 {
        let rows_per = m.div_ceil(threads);
        let chunks: Vec<(usize, &mut [E])> = out
            .chunks_mut(rows_per * n)
            .enumerate()
            .map(|(i, c)| (i * rows_per, c))
            .collect();
        std::thread::scope(|scope| {
            for (row0, chunk) in chunks {
                scope.spawn(move || {
                    matmul_block(a, b, chunk, row0, k, n);
                });
            }
        });
    } else {
        matmul_block(a, b, out, 0, k, n);
    }
}

/// Rows `row0..row0+chunk_rows` of `a @ b`, written to `out`. Each output row
/// is produced by exactly one thread with the same sequential arithmetic, so
/// results do not depend on the thread count.
fn matmul_block<E: Scalar>(a: &[E], b: &[E], out: &mut [E], row0: usize, k: usize, n: usize) {
    for (local_i, out_row) in out.chunks_mut(n).enumerate() {
        let i = row0 + local_i;
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `a[m,n] @ b[k,n]^T -> [m,k]`.
fn matmul_nt_raw<E: Scalar>(a: &[E], b: &[E], out: &mut [E], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = E::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out[i * k + p] = acc;
        }
    }
}

/// `a[m,k]^T @ g[m,n] -> [k,n]`.
fn matmul_tn_raw<E: Scalar>(a: &[E], g: &[E], out: &mut [E], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

/// Matrix product of `[m,k]` and `[k,n]`.
pub fn matmul<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (m, ka) = a.shape2("matmul")?;
    let (kb, n) = b.shape2("matmul")?;
    if ka != kb {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let k = ka;
    let mut out = vec![E::zero(); m * n];
    matmul_raw(a.data(), b.data(), &mut out, m, k, n);
    Ok(Tensor::from_op(
        vec![m, n],
        out,
        vec![a.clone(), b.clone()],
        move |parents, g| {
            let mut da = vec![E::zero(); m * k];
            matmul_nt_raw(g, parents[1].data(), &mut da, m, n, k);
            let mut db = vec![E::zero(); k * n];
            matmul_tn_raw(parents[0].data(), g, &mut db, m, k, n);
            vec![Some(da), Some(db)]
        },
    ))
}

/// Transpose of a rank-2 tensor.
pub fn transpose2<E: Scalar>(a: &Tensor<E>) -> Result<Tensor<E>> {
    let (r, c) = a.shape2("transpose2")?;
    let src = a.data();
    let mut out = vec![E::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = src[i * c + j];
        }
    }
    Ok(Tensor::from_op(
        vec![c, r],
        out,
        vec![a.clone()],
        move |_, g| {
            let mut dg = vec![E::zero(); r * c];
            for j in 0..c {
                for i in 0..r {
                    dg[i * c + j] = g[j * r + i];
                }
            }
            vec![Some(dg)]
        },
    ))
}

/// Reinterpret the buffer under a new shape with the same element count.
pub fn reshape<E: Scalar>(a: &Tensor<E>, shape: &[usize]) -> Result<Tensor<E>> {
    let count: usize = shape.iter().product();
    if count != a.len() {
        return Err(Error::ShapeMismatch {
            op: "reshape",
            lhs: a.shape().to_vec(),
            rhs: shape.to_vec(),
        });
    }
    Ok(Tensor::from_op(
        shape.to_vec(),
        a.to_vec(),
        vec![a.clone()],
        |_, g| vec![Some(g.to_vec())],
    ))
}

/// Add a `[d]` row vector to every row of `[n,d]`.
pub fn add_row<E: Scalar>(x: &Tensor<E>, row: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, d) = x.shape2("add_row")?;
    if row.shape() != [d] {
        return Err(Error::ShapeMismatch {
            op: "add_row",
            lhs: x.shape().to_vec(),
            rhs: row.shape().to_vec(),
        });
    }
    let r = row.data();
    let data = x
        .data()
        .chunks(d)
        .flat_map(|xs| xs.iter().zip(r).map(|(&a, &b)| a + b).collect::<Vec<_>>())
        .collect();
    Ok(Tensor::from_op(
        vec![n, d],
        data,
        vec![x.clone(), row.clone()],
        move |_, g| {
            let mut dr = vec![E::zero(); d];
            for grow in g.chunks(d) {
                for (acc, &v) in dr.iter_mut().zip(grow) {
                    *acc += v;
                }
            }
            vec![Some(g.to_vec()), Some(dr)]
        },
    ))
}

/// Affine map `x[n,in] @ w[in,out] + b[out]`.
pub fn linear<E: Scalar>(x: &Tensor<E>, w: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    add_row(&matmul(x, w)?, b)
}

/// Row-stabilized softmax over the last axis of `[r,c]`.
pub fn softmax_rows<E: Scalar>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (r, c) = x.shape2("softmax_rows")?;
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "softmax_rows" });
    }
    let mut out = vec![E::zero(); r * c];
    for (row_in, row_out) in x.data().chunks(c).zip(out.chunks_mut(c)) {
        let mut max = row_in[0];
        for &v in row_in {
            max = max.maximum(v);
        }
        let mut denom = E::zero();
        for (o, &v) in row_out.iter_mut().zip(row_in) {
            let e = (v - max).exp();
            *o = e;
            denom += e;
        }
        for o in row_out.iter_mut() {
            *o = *o / denom;
        }
    }
    let out_copy = out.clone();
    Ok(Tensor::from_op(
        vec![r, c],
        out,
        vec![x.clone()],
        move |_, g| {
            let mut dx = vec![E::zero(); r * c];
            for ((s_row, g_row), dx_row) in out_copy
                .chunks(c)
                .zip(g.chunks(c))
                .zip(dx.chunks_mut(c))
            {
                let mut dot = E::zero();
                for (&s, &gv) in s_row.iter().zip(g_row) {
                    dot += s * gv;
                }
                for ((d, &s), &gv) in dx_row.iter_mut().zip(s_row).zip(g_row) {
                    *d = s * (gv - dot);
                }
            }
            vec![Some(dx)]
        },
    ))
}

/// Layer normalization over the last axis, then a learned affine map.
pub fn layer_norm<E: Scalar>(
    x: &Tensor<E>,
    gain: &Tensor<E>,
    bias: &Tensor<E>,
    eps: f64,
) -> Result<Tensor<E>> {
    assert!(eps > 0.0, "layer_norm: eps must be positive");
    let d = *x.shape().last().ok_or(Error::BadShape {
        op: "layer_norm",
        expected: "a tensor with at least one axis",
        shape: vec![],
    })?;
    if gain.shape() != [d] || bias.shape() != [d] {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    let rows = x.len() / d;
    let eps = E::from_f64(eps);
    let inv_d = E::one() / E::from_f64(d as f64);
    let g = gain.data();
    let b = bias.data();
    let mut out = vec![E::zero(); x.len()];
    let mut xhat = vec![E::zero(); x.len()];
    let mut inv_std = vec![E::zero(); rows];
    for (i, (row, (out_row, xhat_row))) in x
        .data()
        .chunks(d)
        .zip(out.chunks_mut(d).zip(xhat.chunks_mut(d)))
        .enumerate()
    {
        let mut mean = E::zero();
        for &v in row {
            mean += v;
        }
        mean = mean * inv_d;
        let mut var = E::zero();
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var = var * inv_d;
        let inv = E::one() / (var + eps).sqrt();
        inv_std[i] = inv;
        for (((xh, o), &v), (&gv, &bv)) in xhat_row
            .iter_mut()
            .zip(out_row.iter_mut())
            .zip(row)
            .zip(g.iter().zip(b))
        {
            *xh = (v - mean) * inv;
            *o = gv * *xh + bv;
        }
    }
    let gain_copy = gain.to_vec();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        out,
        vec![x.clone(), gain.clone(), bias.clone()],
        move |_, grad| {
            let mut dx = vec![E::zero(); rows * d];
            let mut dgain = vec![E::zero(); d];
            let mut dbias = vec![E::zero(); d];
            for (i, ((g_row, xh_row), dx_row)) in grad
                .chunks(d)
                .zip(xhat.chunks(d))
                .zip(dx.chunks_mut(d))
                .enumerate()
            {
                let mut mean_dxh = E::zero();
                let mut mean_dxh_xh = E::zero();
                for (j, (&gv, &xh)) in g_row.iter().zip(xh_row).enumerate() {
                    dgain[j] += gv * xh;
                    dbias[j] += gv;
                    let dxh = gv * gain_copy[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xh;
                }
                mean_dxh = mean_dxh * inv_d;
                mean_dxh_xh = mean_dxh_xh * inv_d;
                let inv = inv_std[i];
                for j in 0..d {
                    let dxh = g_row[j] * gain_copy[j];
                    dx_row[j] = inv * (dxh - mean_dxh - xh_row[j] * mean_dxh_xh);
                }
            }
            vec![Some(dx), Some(dgain), Some(dbias)]
        },
    ))
}

/// Select rows of `[n,d]` by index, in the given order.
pub fn gather_rows<E: Scalar>(x: &Tensor<E>, indices: &[usize]) -> Result<Tensor<E>> {
    let (n, d) = x.shape2("gather_rows")?;
    for &i in indices {
        if i >= n {
            return Err(Error::IndexOutOfBounds {
                op: "gather_rows",
                index: i,
                len: n,
            });
        }
    }
    let src = x.data();
    let mut out = Vec::with_capacity(indices.len() * d);
    for &i in indices {
        out.extend_from_slice(&src[i * d..(i + 1) * d]);
    }
    let idx = indices.to_vec();
    Ok(Tensor::from_op(
        vec![indices.len(), d],
        out,
        vec![x.clone()],
        move |_, g| {
            let mut dx = vec![E::zero(); n * d];
            for (&i, g_row) in idx.iter().zip(g.chunks(d)) {
                for (acc, &v) in dx[i * d..(i + 1) * d].iter_mut().zip(g_row) {
                    *acc += v;
                }
            }
            vec![Some(dx)]
        },
    ))
}

/// Place `rows[m,d]` into a zero `[n,d]` tensor at the given row indices.
/// Duplicate indices accumulate.
pub fn scatter_rows<E: Scalar>(rows: &Tensor<E>, indices: &[usize], n: usize) -> Result<Tensor<E>> {
    let (m, d) = rows.shape2("scatter_rows")?;
    if indices.len() != m {
        return Err(Error::ShapeMismatch {
            op: "scatter_rows",
            lhs: vec![m, d],
            rhs: vec![indices.len()],
        });
    }
    for &i in indices {
        if i >= n {
            return Err(Error::IndexOutOfBounds {
                op: "scatter_rows",
                index: i,
                len: n,
            });
        }
    }
    let mut out = vec![E::zero(); n * d];
    for (&i, row) in indices.iter().zip(rows.data().chunks(d)) {
        for (o, &v) in out[i * d..(i + 1) * d].iter_mut().zip(row) {
            *o += v;
        }
    }
    let idx = indices.to_vec();
    Ok(Tensor::from_op(
        vec![n, d],
        out,
        vec![rows.clone()],
        move |_, g| {
            let mut dr = Vec::with_capacity(idx.len() * d);
            for &i in &idx {
                dr.extend_from_slice(&g[i * d..(i + 1) * d]);
            }
            vec![Some(dr)]
        },
    ))
}

/// Columns `[start, start+len)` of `[n,d]`.
pub fn slice_cols<E: Scalar>(x: &Tensor<E>, start: usize, len: usize) -> Result<Tensor<E>> {
    let (n, d) = x.shape2("slice_cols")?;
    if start + len > d {
        return Err(Error::IndexOutOfBounds {
            op: "slice_cols",
            index: start + len,
            len: d,
        });
    }
    let src = x.data();
    let mut out = Vec::with_capacity(n * len);
    for row in src.chunks(d) {
        out.extend_from_slice(&row[start..start + len]);
    }
    Ok(Tensor::from_op(
        vec![n, len],
        out,
        vec![x.clone()],
        move |_, g| {
            let mut dx = vec![E::zero(); n * d];
            for (dx_row, g_row) in dx.chunks_mut(d).zip(g.chunks(len)) {
                dx_row[start..start + len].copy_from_slice(g_row);
            }
            vec![Some(dx)]
        },
    ))
}

/// Concatenate rank-2 tensors with equal row counts along the column axis.
pub fn concat_cols<E: Scalar>(parts: &[Tensor<E>]) -> Result<Tensor<E>> {
    assert!(!parts.is_empty(), "concat_cols: at least one part");
    let (n, _) = parts[0].shape2("concat_cols")?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (np, dp) = p.shape2("concat_cols")?;
        if np != n {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: parts[0].shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        widths.push(dp);
    }
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(n * total);
    for i in 0..n {
        for (p, &w) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data()[i * w..(i + 1) * w]);
        }
    }
    let widths_copy = widths.clone();
    Ok(Tensor::from_op(
        vec![n, total],
        out,
        parts.to_vec(),
        move |_, g| {
            let mut grads: Vec<Vec<E>> = widths_copy
                .iter()
                .map(|&w| Vec::with_capacity(n * w))
                .collect();
            for g_row in g.chunks(total) {
                let mut offset = 0;
                for (gp, &w) in grads.iter_mut().zip(&widths_copy) {
                    gp.extend_from_slice(&g_row[offset..offset + w]);
                    offset += w;
                }
            }
            grads.into_iter().map(Some).collect()
        },
    ))
}

/// Broadcast a `[d]` vector into `n` identical rows.
pub fn repeat_row<E: Scalar>(row: &Tensor<E>, n: usize) -> Result<Tensor<E>> {
    let d = match row.shape() {
        [d] => *d,
        s => {
            return Err(Error::BadShape {
                op: "repeat_row",
                expected: "a rank-1 tensor",
                shape: s.to_vec(),
            })
        }
    };
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        out.extend_from_slice(row.data());
    }
    Ok(Tensor::from_op(
        vec![n, d],
        out,
        vec![row.clone()],
        move |_, g| {
            let mut dr = vec![E::zero(); d];
            for g_row in g.chunks(d) {
                for (acc, &v) in dr.iter_mut().zip(g_row) {
                    *acc += v;
                }
            }
            vec![Some(dr)]
        },
    ))
}
