use super::NnError;

/// Dense C×h×w tensor of f64, row-major in (c, y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn from_values(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f64>,
    ) -> Result<Self, NnError> {
        if values.len() != channels * height * width {
            return Err(NnError::ShapeMismatch {
                expected: (channels, height, width),
                got: (values.len(), 1, 1),
            });
        }
        Ok(Tensor {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.values[i] = v;
    }

    #[inline]
    pub fn add_at(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.values[i] += v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<(), NnError> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(NnError::NonFiniteInput)
        }
    }

    pub fn ensure_same_shape(&self, other: &Tensor) -> Result<(), NnError> {
        if self.shape() != other.shape() {
            return Err(NnError::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }

    /// Per-channel mean over the spatial grid.
    pub fn global_avg_pool(&self) -> Vec<f64> {
        let n = (self.height * self.width) as f64;
        (0..self.channels)
            .map(|c| {
                let start = c * self.height * self.width;
                let end = start + self.height * self.width;
                self.values[start..end].iter().sum::<f64>() / n
            })
            .collect()
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape(), other.shape());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    /// Σ self ⊙ other, accumulated with Neumaier compensation so the result
    /// is accurate to a few ulps. The gradient checker differences two nearly
    /// equal losses, so a plain running sum's rounding drift would dominate
    /// the finite-difference signal.
    pub fn dot(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for (&a, &b) in self.values.iter().zip(&other.values) {
            let term = a * b;
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    /// Uniformly random values in [-1, 1) from a seeded generator.
    pub fn random(channels: usize, height: usize, width: usize, rng: &mut impl rand::Rng) -> Self {
        let values = (0..channels * height * width)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        Tensor {
            channels,
            height,
            width,
            values,
        }
    }
}
