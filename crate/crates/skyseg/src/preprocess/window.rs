//! Persistent model of the camera's outdoor lens artifacts.
//!
//! Dust and dried water stains on the outdoor germanium window add a
//! stationary offset pattern to every frame. The model keeps a FIFO ring of
//! the most recent clear-sky observations and publishes their per-pixel
//! median as the stain pattern `W`; correcting a frame subtracts `W`.
//!
//! What gets buffered is the caller's choice: the preprocessing pipeline
//! inserts clear-sky *residuals* (frame minus its fitted background
//! irradiance), so the median isolates the stains rather than the whole sky
//! background and corrected temperatures stay physical.

use std::collections::VecDeque;

use crate::grid::Grid;

/// Ring capacity: the model remembers this many clear-sky observations and
/// forgets the oldest beyond it.
pub const WINDOW_CAPACITY: usize = 250;

#[derive(Debug, Clone, Default)]
pub struct WindowModel {
    buffer: VecDeque<Grid<f64>>,
    pattern: Option<Grid<f64>>,
}

impl WindowModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Current stain pattern, `None` until the first observation arrives.
    pub fn pattern(&self) -> Option<&Grid<f64>> {
        self.pattern.as_ref()
    }

    /// Inserts one clear-sky observation, evicting the oldest past capacity,
    /// and recomputes the per-pixel median.
    pub fn push(&mut self, observation: &Grid<f64>) {
        if let Some(first) = self.buffer.front() {
            assert!(first.same_shape(observation), "window observation shape mismatch");
        }
        if self.buffer.len() == WINDOW_CAPACITY {
            self.buffer.pop_front();
        }
        self.buffer.push_back(observation.clone());
        self.recompute();
    }

    /// `T' = T - W`; with an empty buffer `W = 0`, so the frame passes
    /// through unchanged.
    pub fn apply(&self, t: &Grid<f64>) -> Grid<f64> {
        match &self.pattern {
            None => t.clone(),
            Some(w) => t.sub(w),
        }
    }

    fn recompute(&mut self) {
        let first = self.buffer.front().expect("non-empty buffer");
        let (rows, cols) = (first.rows(), first.cols());
        let n = self.buffer.len();
        let mut values = vec![0.0; n];
        let mut out = Vec::with_capacity(rows * cols);
        for p in 0..rows * cols {
            for (slot, frame) in values.iter_mut().zip(&self.buffer) {
                *slot = frame.data()[p];
            }
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Even counts take the midpoint of the two central values.
            let median = if n % 2 == 1 {
                values[n / 2]
            } else {
                0.5 * (values[n / 2 - 1] + values[n / 2])
            };
            out.push(median);
        }
        self.pattern = Some(Grid::from_vec(rows, cols, out));
    }
}
