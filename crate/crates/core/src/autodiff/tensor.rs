use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{CMat, C64, ZERO};
use crate::{Error, Result};

/// Dense complex tensor, row-major.
///
/// Tensors built from real data carry a `real` flag: every entry then has a
/// zero imaginary part, and kernels take the cheaper real code path.
#[derive(Debug, Clone, PartialEq)]
pub struct CTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
    real: bool,
}

impl CTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        CTensor {
            shape: shape.to_vec(),
            data: vec![ZERO; shape.iter().product()],
            real: true,
        }
    }

    pub fn zeros_like(other: &CTensor) -> Self {
        CTensor {
            shape: other.shape.clone(),
            data: vec![ZERO; other.data.len()],
            real: other.real,
        }
    }

    pub fn scalar(x: f64) -> Self {
        CTensor {
            shape: Vec::new(),
            data: vec![C64::new(x, 0.0)],
            real: true,
        }
    }

    pub fn from_real(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        check_len(shape, values.len())?;
        Ok(CTensor {
            shape: shape.to_vec(),
            data: values.into_iter().map(|x| C64::new(x, 0.0)).collect(),
            real: true,
        })
    }

    pub fn from_complex(shape: &[usize], data: Vec<C64>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(CTensor {
            shape: shape.to_vec(),
            data,
            real: false,
        })
    }

    pub fn from_cmat(m: &CMat) -> Self {
        CTensor {
            shape: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
            real: false,
        }
    }

    /// Stacks equally sized matrices into a `[n, rows, cols]` tensor.
    pub fn stack_cmats(ms: &[CMat]) -> Result<Self> {
        let (r, c) = ms.first().map_or((0, 0), CMat::shape);
        let mut data = Vec::with_capacity(ms.len() * r * c);
        for m in ms {
            if m.shape() != (r, c) {
                return Err(Error::shape("stacking matrices of different shapes"));
            }
            data.extend_from_slice(m.as_slice());
        }
        Ok(CTensor {
            shape: vec![ms.len(), r, c],
            data,
            real: false,
        })
    }

    pub(crate) fn raw(shape: Vec<usize>, data: Vec<C64>, real: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        CTensor { shape, data, real }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn is_real(&self) -> bool {
        self.real
    }

    /// Real parts, row-major.
    pub fn re(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    /// Value of a scalar (or single-element) tensor's real part.
    pub fn item(&self) -> f64 {
        self.data[0].re
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Matrix `b` of a `[.., rows, cols]` tensor, batch dimensions flattened.
    pub fn matrix(&self, b: usize) -> CMat {
        let (r, c) = self.last2();
        CMat::from_vec(r, c, self.data[b * r * c..(b + 1) * r * c].to_vec()).expect("slice length matches")
    }

    pub fn to_cmat(&self) -> Result<CMat> {
        if self.ndim() != 2 {
            return Err(Error::shape("to_cmat needs a 2-d tensor"));
        }
        Ok(self.matrix(0))
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        check_len(shape, self.data.len())?;
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn max_abs_diff(&self, other: &CTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Drops imaginary parts and marks the tensor real.
    pub(crate) fn project_real(&mut self) {
        for z in &mut self.data {
            z.im = 0.0;
        }
        self.real = true;
    }

    pub(crate) fn add_assign(&mut self, other: &CTensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        self.real &= other.real;
    }

    pub(crate) fn last2(&self) -> (usize, usize) {
        let n = self.shape.len();
        match n {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => (self.shape[n - 2], self.shape[n - 1]),
        }
    }

    pub(crate) fn batch(&self) -> usize {
        if self.shape.len() <= 2 {
            1
        } else {
            self.shape[..self.shape.len() - 2].iter().product()
        }
    }

    pub(crate) fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let want: usize = shape.iter().product();
    if want != len {
        return Err(Error::shape(alloc::format!(
            "shape {shape:?} needs {want} entries, got {len}"
        )));
    }
    Ok(())
}
