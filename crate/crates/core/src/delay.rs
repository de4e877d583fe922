//! Fixed-capacity delay lines for the online extractors.

/// Ring buffer of the last `capacity` sample vectors, zero-initialized.
#[derive(Debug, Clone)]
pub(crate) struct VectorDelayLine {
    data: Vec<f64>,
    channels: usize,
    capacity: usize,
    head: usize,
}

impl VectorDelayLine {
    pub fn new(channels: usize, capacity: usize) -> Self {
        Self { data: vec![0.0; channels * capacity], channels, capacity, head: 0 }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.channels);
        self.head = (self.head + self.capacity - 1) % self.capacity;
        let start = self.head * self.channels;
        self.data[start..start + self.channels].copy_from_slice(x);
    }

    /// The vector pushed `steps_back` pushes ago (0 = most recent).
    pub fn get(&self, steps_back: usize) -> &[f64] {
        debug_assert!(steps_back < self.capacity);
        let slot = (self.head + steps_back) % self.capacity;
        let start = slot * self.channels;
        &self.data[start..start + self.channels]
    }
}

/// Ring buffer of the last `capacity` scalars, zero-initialized.
#[derive(Debug, Clone)]
pub(crate) struct ScalarDelayLine {
    data: Vec<f64>,
    head: usize,
}

impl ScalarDelayLine {
    pub fn new(capacity: usize) -> Self {
        Self { data: vec![0.0; capacity], head: 0 }
    }

    pub fn push(&mut self, y: f64) {
        self.head = (self.head + self.data.len() - 1) % self.data.len();
        self.data[self.head] = y;
    }

    pub fn get(&self, steps_back: usize) -> f64 {
        debug_assert!(steps_back < self.data.len());
        self.data[(self.head + steps_back) % self.data.len()]
    }
}
