//! Dense tensors with reverse-mode differentiation.
//!
//! A [`Tensor`] is a shared handle to a dense, row-major value array with an
//! optional gradient slot. Operations are recorded on a [`Graph`], which
//! replays them in exact reverse construction order during
//! [`Graph::backward`]. The op set is deliberately small: embedding lookups,
//! 1-D convolution banks, global max pooling, dense layers, dropout,
//! elementwise addition, concatenation, and a numerically stable
//! sigmoid-cross-entropy loss.

mod adam;
mod graph;

pub use adam::{clip_grad_norm, Adam};
pub use graph::{Activation, Graph};

use std::fmt;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use num_traits::Float;
use rand::distr::uniform::SampleUniform;
use thiserror::Error;

/// Element type of a tensor. `f64` is the default precision; `f32` is the
/// speed option.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::F32 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F64),
            1 => Some(Dtype::F32),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F64 => "f64",
            Dtype::F32 => "f32",
        }
    }
}

/// Scalar element trait implemented by `f64` and `f32`.
pub trait Scalar:
    Float + SampleUniform + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    const DTYPE: Dtype;
    /// Size of one element in serialized (little-endian) form.
    const BYTES: usize;

    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// Reads one element from exactly `Self::BYTES` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
    const BYTES: usize = 8;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn into_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("f64 needs 8 bytes"))
    }
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
    const BYTES: usize = 4;

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn into_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("f32 needs 4 bytes"))
    }
}

/// Converts an `f64` literal to the working scalar type.
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x)
}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("data length {got} does not match shape product {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: id {id} at position {position} out of range for table of {rows} rows")]
    IdOutOfRange {
        op: &'static str,
        id: usize,
        position: usize,
        rows: usize,
    },
    #[error("conv1d: filter width {width} exceeds input length {len}")]
    WindowTooLong { width: usize, len: usize },
    #[error("global_max_pool: empty temporal axis")]
    EmptyTemporalAxis,
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidDropoutRate(f64),
    #[error("bce_with_logits: label {0} is not 0 or 1")]
    NonBinaryLabel(f64),
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarLoss { numel: usize },
    #[error("backward already run on this graph; reset gradients and rebuild")]
    BackwardAlreadyRun,
}

struct TensorInner<T> {
    shape: Vec<usize>,
    data: RwLock<Vec<T>>,
    grad: Mutex<Option<Vec<T>>>,
    requires_grad: bool,
}

/// Shared handle to a dense row-major value array with an optional gradient
/// slot. Clones share storage. Data is immutable during forward/backward
/// passes; only optimizer updates rewrite it.
pub struct Tensor<T: Scalar>(Arc<TensorInner<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Arc::clone(&self.0))
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    fn new(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor(Arc::new(TensorInner {
            shape,
            data: RwLock::new(data),
            grad: Mutex::new(None),
            requires_grad,
        })))
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        Self::new(shape, data, false)
    }

    /// A leaf tensor that participates in gradient accumulation.
    pub fn param(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        Self::new(shape, data, true)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![T::zero(); n], false).expect("consistent by construction")
    }

    pub fn scalar(value: T) -> Self {
        Self::new(vec![1], vec![value], false).expect("consistent by construction")
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Read access to the backing array.
    pub fn data(&self) -> RwLockReadGuard<'_, Vec<T>> {
        self.0.data.read().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data().clone()
    }

    /// Single element of a scalar tensor.
    pub fn item(&self) -> T {
        let data = self.data();
        assert_eq!(data.len(), 1, "item() on non-scalar tensor");
        data[0]
    }

    /// Overwrites the backing array. Only optimizers and initialization use
    /// this; shape must be preserved.
    pub fn set_data(&self, values: &[T]) {
        let mut data = self.0.data.write().expect("tensor data lock poisoned");
        assert_eq!(values.len(), data.len(), "set_data length mismatch");
        data.copy_from_slice(values);
    }

    /// In-place mutation of the backing array (optimizer step).
    pub fn map_data_mut(&self, f: impl FnOnce(&mut [T])) {
        let mut data = self.0.data.write().expect("tensor data lock poisoned");
        f(&mut data);
    }

    /// Current gradient, or zeros when none has been accumulated.
    pub fn grad(&self) -> Vec<T> {
        let guard = self.0.grad.lock().expect("tensor grad lock poisoned");
        match &*guard {
            Some(g) => g.clone(),
            None => vec![T::zero(); self.numel()],
        }
    }

    pub fn has_grad(&self) -> bool {
        self.0
            .grad
            .lock()
            .expect("tensor grad lock poisoned")
            .is_some()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("tensor grad lock poisoned") = None;
    }

    /// Runs `f` on the gradient buffer, allocating zeros on first use.
    pub(crate) fn with_grad<R>(&self, f: impl FnOnce(&mut [T]) -> R) -> R {
        let mut guard = self.0.grad.lock().expect("tensor grad lock poisoned");
        let g = guard.get_or_insert_with(|| vec![T::zero(); self.numel()]);
        f(g)
    }

    pub(crate) fn accumulate_grad(&self, delta: &[T]) {
        self.with_grad(|g| {
            debug_assert_eq!(g.len(), delta.len());
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi = *gi + *di;
            }
        });
    }

    /// Gradient snapshot if one has been accumulated.
    pub(crate) fn grad_snapshot(&self) -> Option<Vec<T>> {
        self.0
            .grad
            .lock()
            .expect("tensor grad lock poisoned")
            .clone()
    }

    pub(crate) fn seed_grad_ones(&self) {
        self.with_grad(|g| {
            for gi in g.iter_mut() {
                *gi = T::one();
            }
        });
    }

    /// True when both handles point at the same storage.
    pub fn same_storage(&self, other: &Tensor<T>) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn assert_finite(&self, op: &'static str) -> Result<(), TensorError> {
        if self.data().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::NonFinite { op })
        }
    }
}
