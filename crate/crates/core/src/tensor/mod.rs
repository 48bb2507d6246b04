//! Dense tensors with reverse-mode differentiation.
//!
//! A [`Tensor`] is an immutable handle to a shaped buffer plus an optional
//! trace describing how it was computed. Kernels build new tensors and attach
//! a backward closure; [`backward`] replays the graph from a scalar loss and
//! returns per-leaf gradients. Leaves come from a [`ParamStore`], which owns
//! the mutable parameter state between steps.
//!
//! Element type is `f32` or `f64` per run via the [`Scalar`] bound; gradient
//! verification suites run in `f64`.

mod conv;
mod gradcheck;
mod ops;
mod params;
#[cfg(test)]
mod tests;

pub use conv::{avgpool_2x, deconv_2x};
pub use gradcheck::{finite_diff_check, FdReport};
pub use ops::{
    add, add_row, concat_cols, gather_rows, gelu, linear, matmul, mul, repeat_row, reshape, scale,
    scatter_rows, slice_cols, softmax_rows, layer_norm, sub, sum, transpose2,
};
pub use params::{ParamEntry, ParamStore};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Element type of a tensor buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<DType> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DType::F32 => write!(f, "f32"),
            DType::F64 => write!(f, "f64"),
        }
    }
}

/// Floating-point element of a tensor.
pub trait Scalar:
    Copy
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + Send
    + Sync
    + 'static
{
    const DTYPE: DType;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn zero() -> Self;
    fn one() -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! impl_scalar {
    ($ty:ty, $dtype:expr) => {
        impl Scalar for $ty {
            const DTYPE: DType = $dtype;
            fn from_f64(v: f64) -> Self {
                v as $ty
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn zero() -> Self {
                0.0
            }
            fn one() -> Self {
                1.0
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            fn tanh(self) -> Self {
                self.tanh()
            }
            fn abs(self) -> Self {
                self.abs()
            }
            fn maximum(self, other: Self) -> Self {
                self.max(other)
            }
            fn is_finite(self) -> bool {
                <$ty>::is_finite(self)
            }
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn read_le(bytes: &[u8]) -> Self {
                <$ty>::from_le_bytes(bytes.try_into().expect("scalar byte width"))
            }
        }
    };
}

impl_scalar!(f32, DType::F32);
impl_scalar!(f64, DType::F64);

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

type BackwardFn<E> = Box<dyn Fn(&[Tensor<E>], &[E]) -> Vec<Option<Vec<E>>>>;

enum Trace<E: Scalar> {
    /// Constant: gradients do not flow past it.
    None,
    /// Parameter leaf: gradients accumulate under its node id.
    Leaf,
    /// Result of a kernel; `backward` maps the output gradient to per-parent
    /// contributions aligned with `parents`.
    Op {
        parents: Vec<Tensor<E>>,
        backward: BackwardFn<E>,
    },
}

struct Inner<E: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Rc<Vec<E>>,
    trace: Trace<E>,
}

/// Immutable handle to a shaped buffer, cheaply cloneable.
pub struct Tensor<E: Scalar> {
    inner: Rc<Inner<E>>,
}

impl<E: Scalar> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Scalar> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("traced", &self.is_traced())
            .finish()
    }
}

impl<E: Scalar> Tensor<E> {
    fn new(shape: Vec<usize>, data: Rc<Vec<E>>, trace: Trace<E>) -> Self {
        debug_assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data length mismatch"
        );
        Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                trace,
            }),
        }
    }

    /// Constant tensor; gradients never flow into it.
    pub fn from_vec(shape: Vec<usize>, data: Vec<E>) -> Self {
        Tensor::new(shape, Rc::new(data), Trace::None)
    }

    pub fn from_f64s(shape: Vec<usize>, data: &[f64]) -> Self {
        Tensor::from_vec(shape, data.iter().map(|&v| E::from_f64(v)).collect())
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::from_vec(shape, vec![E::zero(); n])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(vec![1], vec![E::from_f64(v)])
    }

    /// Parameter leaf sharing the store's buffer.
    pub(crate) fn leaf(shape: Vec<usize>, data: Rc<Vec<E>>) -> Self {
        Tensor::new(shape, data, Trace::Leaf)
    }

    /// Kernel output. Falls back to a constant when no parent is traced, so
    /// dead graph segments cost nothing and detachment propagates.
    pub(crate) fn from_op<F>(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward: F,
    ) -> Self
    where
        F: Fn(&[Tensor<E>], &[E]) -> Vec<Option<Vec<E>>> + 'static,
    {
        if parents.iter().any(|p| p.is_traced()) {
            Tensor::new(
                shape,
                Rc::new(data),
                Trace::Op {
                    parents,
                    backward: Box::new(backward),
                },
            )
        } else {
            Tensor::from_vec(shape, data)
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<E> {
        self.inner.data.as_ref().clone()
    }

    pub fn is_traced(&self) -> bool {
        !matches!(self.inner.trace, Trace::None)
    }

    /// Same data, no trace: severs the differentiation graph here.
    pub fn detach(&self) -> Tensor<E> {
        Tensor::new(self.inner.shape.clone(), Rc::clone(&self.inner.data), Trace::None)
    }

    pub fn scalar_value(&self) -> E {
        assert_eq!(self.len(), 1, "scalar_value on non-scalar tensor");
        self.inner.data[0]
    }

    pub(crate) fn shape2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::BadShape {
                op,
                expected: "a rank-2 tensor",
                shape: s.to_vec(),
            }),
        }
    }

    pub(crate) fn shape3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape() {
            [h, w, c] => Ok((*h, *w, *c)),
            s => Err(Error::BadShape {
                op,
                expected: "a rank-3 tensor",
                shape: s.to_vec(),
            }),
        }
    }
}

/// Gradients keyed by leaf node, produced by [`backward`].
pub struct Gradients<E: Scalar> {
    grads: HashMap<u64, Vec<E>>,
}

impl<E: Scalar> Gradients<E> {
    pub fn get(&self, tensor: &Tensor<E>) -> Option<&[E]> {
        self.grads.get(&tensor.id()).map(|v| v.as_slice())
    }

    /// Gradient of a leaf, zeros when no gradient flowed into it.
    pub fn get_or_zeros(&self, tensor: &Tensor<E>) -> Vec<E> {
        self.grads
            .get(&tensor.id())
            .cloned()
            .unwrap_or_else(|| vec![E::zero(); tensor.len()])
    }

    pub(crate) fn by_id(&self, id: u64) -> Option<&[E]> {
        self.grads.get(&id).map(|v| v.as_slice())
    }
}

/// Reverse-mode sweep from a scalar loss.
///
/// Repeated calls on a fresh forward pass give identical results: traversal
/// order is fixed by the recorded parent order.
pub fn backward<E: Scalar>(loss: &Tensor<E>) -> Result<Gradients<E>> {
    if loss.len() != 1 {
        return Err(Error::NonScalarLoss {
            shape: loss.shape().to_vec(),
        });
    }
    if !loss.is_traced() {
        return Err(Error::UntracedLoss);
    }

    // Post-order DFS over traced ancestors; reversed, every consumer of a
    // node is processed before the node itself.
    enum Frame<E: Scalar> {
        Enter(Tensor<E>),
        Exit(Tensor<E>),
    }
    let mut order: Vec<Tensor<E>> = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack = vec![Frame::Enter(loss.clone())];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Enter(t) => {
                if !visited.insert(t.id()) {
                    continue;
                }
                stack.push(Frame::Exit(t.clone()));
                if let Trace::Op { parents, .. } = &t.inner.trace {
                    for p in parents {
                        if p.is_traced() && !visited.contains(&p.id()) {
                            stack.push(Frame::Enter(p.clone()));
                        }
                    }
                }
            }
            Frame::Exit(t) => order.push(t),
        }
    }

    let mut grads: HashMap<u64, Vec<E>> = HashMap::new();
    grads.insert(loss.id(), vec![E::one()]);

    for node in order.iter().rev() {
        let Some(grad_out) = grads.get(&node.id()).cloned() else {
            continue;
        };
        if let Trace::Op { parents, backward } = &node.inner.trace {
            let contributions = backward(parents, &grad_out);
            debug_assert_eq!(contributions.len(), parents.len());
            for (parent, contribution) in parents.iter().zip(contributions) {
                if !parent.is_traced() {
                    continue;
                }
                let Some(c) = contribution else { continue };
                debug_assert_eq!(c.len(), parent.len(), "gradient shape mismatch");
                match grads.entry(parent.id()) {
                    std::collections::hash_map::Entry::Occupied(mut e) => {
                        for (acc, v) in e.get_mut().iter_mut().zip(&c) {
                            *acc += *v;
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(c);
                    }
                }
            }
        }
    }

    // Interior gradients are dropped; only leaves remain addressable.
    Ok(Gradients { grads })
}
