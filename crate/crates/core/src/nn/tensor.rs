use crate::error::{Error, Result};

/// Rank-4 array laid out as (batch, channels, rows, cols), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 4], value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn rows(&self) -> usize {
        self.dims[2]
    }

    pub fn cols(&self) -> usize {
        self.dims[3]
    }

    /// (channels, rows, cols)
    pub fn sample_dims(&self) -> (usize, usize, usize) {
        (self.dims[1], self.dims[2], self.dims[3])
    }

    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    pub fn sample_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, r: usize, col: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + r) * self.dims[3] + col
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, r: usize, col: usize) -> f64 {
        self.data[self.index(n, c, r, col)]
    }

    /// Contiguous (rows x cols) plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &mut self.data[start..start + len]
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    /// Same data viewed with new dims of equal size.
    pub fn reshape(self, dims: [usize; 4]) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks equally-shaped single samples into one batch.
    pub fn stack(samples: &[Tensor4]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::ShapeMismatch("empty stack".into()))?;
        let mut data = Vec::with_capacity(first.data.len() * samples.len());
        let mut n = 0;
        for s in samples {
            if s.sample_dims() != first.sample_dims() {
                return Err(Error::ShapeMismatch(
                    "stacking tensors of different shapes".into(),
                ));
            }
            n += s.batch();
            data.extend_from_slice(&s.data);
        }
        let (c, h, w) = first.sample_dims();
        Self::from_vec([n, c, h, w], data)
    }
}
