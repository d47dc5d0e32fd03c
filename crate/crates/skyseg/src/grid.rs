//! Row-major raster container shared by frames, masks and derived channels.

/// A dense `rows x cols` raster. `(i, j)` indexes row `i`, column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "grid data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols);
        i * self.cols + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        let k = self.idx(i, j);
        self.data[k] = value;
    }

    /// Access with indices clamped to the grid bounds (replicate padding).
    #[inline]
    pub fn get_clamped(&self, i: isize, j: isize) -> &T {
        let i = i.clamp(0, self.rows as isize - 1) as usize;
        let j = j.clamp(0, self.cols as isize - 1) as usize;
        self.get(i, j)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(&mut f).collect(),
        }
    }
}

impl<T: Clone> Grid<T> {
    pub fn fill(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl Grid<f64> {
    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &Grid<f64>) -> Grid<f64> {
        assert!(self.same_shape(other), "shape mismatch");
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let g = Grid::from_vec(2, 3, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(*g.get(0, 2), 2);
        assert_eq!(*g.get(1, 0), 3);
    }

    #[test]
    fn clamped_access_replicates_borders() {
        let g = Grid::from_vec(2, 2, vec![1, 2, 3, 4]);
        assert_eq!(*g.get_clamped(-1, -1), 1);
        assert_eq!(*g.get_clamped(5, 0), 3);
        assert_eq!(*g.get_clamped(1, 9), 4);
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn shape_mismatch_panics() {
        let _ = Grid::from_vec(2, 2, vec![1]);
    }
}
