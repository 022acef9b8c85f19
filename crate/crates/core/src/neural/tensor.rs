use crate::error::{Error, Result};

/// Dense rank-4 array laid out as channels x frames x rows x cols.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::Shape(format!(
                "tensor {dims:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "tensor value {i} is not finite: {}",
                data[i]
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub(crate) fn from_parts_unchecked(dims: [usize; 4], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.dims[0]
    }

    pub fn frames(&self) -> usize {
        self.dims[1]
    }

    pub fn rows(&self) -> usize {
        self.dims[2]
    }

    pub fn cols(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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
    pub fn index(&self, c: usize, t: usize, h: usize, w: usize) -> usize {
        ((c * self.dims[1] + t) * self.dims[2] + h) * self.dims[3] + w
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(c, t, h, w)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, h: usize, w: usize, v: f64) {
        let i = self.index(c, t, h, w);
        self.data[i] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(Tensor4::new([1, 2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Tensor4::new([1, 1, 1, 1], vec![f64::NAN]).is_err());
        let t = Tensor4::new([2, 1, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(t.get(1, 0, 1, 2), 11.0);
        assert_eq!(t.index(1, 0, 0, 0), 6);
    }
}
