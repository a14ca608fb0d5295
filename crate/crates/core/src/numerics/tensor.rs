//! Dense row-major 64-bit tensors.
//!
//! All model math runs in `f64`; gradient buffers live next to the data so
//! a parameter and its accumulated gradient travel together.

use rand::Rng;

/// Dense multi-dimensional array of `f64` in row-major order, with an
/// optional gradient buffer of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![0.0; numel])
    }

    /// Shape `[1]` tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![1], vec![value])
    }

    /// Rank-1 tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    /// Rank-2 tensor from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    /// Entries drawn i.i.d. from `uniform(lo, hi)`.
    pub fn uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor::new(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(
            self.shape.len(),
            2,
            "rows() on rank-{} tensor",
            self.shape.len()
        );
        self.shape[0]
    }

    /// Number of columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(
            self.shape.len(),
            2,
            "cols() on rank-{} tensor",
            self.shape.len()
        );
        self.shape[1]
    }

    /// Element `(i, j)` of a rank-2 tensor.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        let cols = self.cols();
        self.data[i * cols + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, value: f64) {
        let cols = self.cols();
        self.data[i * cols + j] = value;
    }

    /// Gradient buffer, allocating a zeroed one on first use.
    pub fn grad_mut(&mut self) -> &mut Vec<f64> {
        let numel = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; numel])
    }

    /// Accumulated gradient, or zeros if backward never reached this tensor.
    pub fn grad_or_zeros(&self) -> Vec<f64> {
        match &self.grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.data.len()],
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }
}
