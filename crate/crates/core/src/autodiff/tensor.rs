use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {op} got {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },
    #[error("shape {shape:?} has {expected} elements but {actual} values were given")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("index {index} out of range for {op} on shape {shape:?}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        shape: Vec<usize>,
    },
    #[error("log requires strictly positive inputs, got {value}")]
    LogDomain { value: f64 },
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("{0}")]
    Usage(String),
}

struct TensorInner {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Dense n-dimensional value array, row-major, 64-bit.
///
/// `Tensor` is a cheap handle (`Rc` inside); clones share storage. Parameters
/// are tensors with `requires_grad` set; [`crate::autodiff::Graph::backward`]
/// accumulates into their `grad` buffers until [`Tensor::zero_grad`].
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<TensorInner>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            inner: Rc::new(RefCell::new(TensorInner {
                shape: shape.to_vec(),
                data,
                requires_grad: false,
                grad: None,
            })),
        })
    }

    /// A trainable tensor: `requires_grad` set, gradient buffer zeroed.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        let t = Self::new(shape, data)?;
        t.set_requires_grad(true);
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n]).expect("zeros: consistent by construction")
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(&[1], vec![v]).expect("scalar: consistent by construction")
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(&[n], data).expect("vector: consistent by construction")
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn rank(&self) -> usize {
        self.inner.borrow().shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// Scalar value; panics if the tensor has more than one element.
    pub fn value(&self) -> f64 {
        let inner = self.inner.borrow();
        assert_eq!(inner.data.len(), 1, "value() on non-scalar tensor");
        inner.data[0]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.inner.borrow().data[i]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn set_requires_grad(&self, on: bool) {
        let mut inner = self.inner.borrow_mut();
        if on && inner.grad.is_none() {
            inner.grad = Some(vec![0.0; inner.data.len()]);
        }
        inner.requires_grad = on;
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        let mut inner = self.inner.borrow_mut();
        if let Some(g) = inner.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        if inner.grad.is_none() {
            inner.grad = Some(vec![0.0; inner.data.len()]);
        }
        let g = inner.grad.as_mut().expect("grad just ensured");
        debug_assert_eq!(g.len(), delta.len());
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// Overwrite the values in place (shape is fixed). Used by optimizers
    /// and checkpoint loading.
    pub fn set_data(&self, data: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), data.len(), "set_data length mismatch");
        inner.data.copy_from_slice(data);
    }

    /// Apply `f` to each (value, grad) pair in place.
    pub fn update_with_grad(&self, mut f: impl FnMut(&mut f64, f64)) {
        let mut inner = self.inner.borrow_mut();
        let grad = match inner.grad.take() {
            Some(g) => g,
            None => return,
        };
        for (v, g) in inner.data.iter_mut().zip(grad.iter()) {
            f(v, *g);
        }
        inner.grad = Some(grad);
    }

    pub fn all_finite(&self) -> bool {
        self.inner.borrow().data.iter().all(|v| v.is_finite())
    }

    /// Stable identity of the underlying storage, used by the graph to
    /// recognize a tensor it has already registered.
    pub(crate) fn id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    /// Run `f` over the raw data without copying.
    pub fn with_data<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.inner.borrow().data)
    }

    /// A detached copy: same shape and values, no gradient tracking,
    /// fresh storage.
    pub fn detached(&self) -> Tensor {
        let inner = self.inner.borrow();
        Tensor::new(&inner.shape, inner.data.clone()).expect("detached: shapes consistent")
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .field("data", &inner.data)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_consistency_enforced() {
        let err = Tensor::new(&[2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { expected: 6, actual: 5, .. }));
    }

    #[test]
    fn grad_accumulates_until_zeroed() {
        let t = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        t.accumulate_grad(&[0.5, 0.5]);
        t.accumulate_grad(&[1.0, 1.0]);
        assert_eq!(t.grad().unwrap(), vec![1.5, 1.5]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn clones_share_storage() {
        let t = Tensor::vector(vec![1.0, 2.0]);
        let u = t.clone();
        u.set_data(&[3.0, 4.0]);
        assert_eq!(t.to_vec(), vec![3.0, 4.0]);
        assert_eq!(t.id(), u.id());
        assert_ne!(t.id(), t.detached().id());
    }
}
