use crate::scalar::Real;

/// Interleaved RGB image, row-major, values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![T::zero(); width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [T; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [T; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [T; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// 2x2 box-filter downsampling; odd trailing rows/columns are dropped.
    pub fn downsample_2x(&self) -> Self {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        if self.width < 2 || self.height < 2 {
            return Self::from_fn(w, h, |x, y| {
                self.get(x.min(self.width - 1), y.min(self.height - 1))
            });
        }
        let quarter = T::lit(0.25);
        Self::from_fn(w, h, |x, y| {
            let mut acc = [T::zero(); 3];
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let p = self.get(2 * x + dx, 2 * y + dy);
                for c in 0..3 {
                    acc[c] += p[c];
                }
            }
            acc.map(|v| v * quarter)
        })
    }

    pub fn mean_abs_diff(&self, other: &Self) -> T {
        assert!(self.same_shape(other));
        let n = T::lit(self.data.len().max(1) as f64);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .sum::<T>()
            / n
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}
