//! Dense row-major f64 matrices and optimizer-tracked parameters.

/// A dense `rows x cols` matrix of f64 stored row-major.
///
/// This is the only tensor shape the crate needs: token embeddings, projector
/// weights, prompt tables and conditioning sequences are all 2-D, and vectors
/// are carried as plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            rows * cols,
            data.len(),
            "tensor data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Tensor2 { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows: expected width {c}, got {}", row.len());
            data.extend_from_slice(row);
        }
        Tensor2 { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// self += scale * other (same shape).
    pub fn add_scaled(&mut self, other: &Tensor2, scale: f64) {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "add_scaled shape mismatch"
        );
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Bit-level equality; used by freeze checks where `==` on floats would
    /// conflate 0.0 and -0.0 or miss NaN payload changes.
    pub fn bits_eq(&self, other: &Tensor2) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Append a copy of every row of `other` (widths must agree).
    pub fn append_rows(&mut self, other: &Tensor2) {
        if self.rows == 0 && self.cols == 0 {
            self.cols = other.cols;
        }
        assert_eq!(self.cols, other.cols, "append_rows width mismatch");
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
    }

    pub fn push_row(&mut self, row: &[f64]) {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        assert_eq!(self.cols, row.len(), "push_row width mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    /// Copy of the given row range as a new tensor.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Tensor2 {
        assert!(range.end <= self.rows, "slice_rows out of range");
        let data = self.data[range.start * self.cols..range.end * self.cols].to_vec();
        Tensor2 {
            rows: range.len(),
            cols: self.cols,
            data,
        }
    }
}

/// A trainable tensor together with its gradient accumulator and AdamW state.
///
/// `trainable == false` freezes the tensor: the optimizer must leave `value`
/// bit-identical across any number of steps.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor2,
    pub grad: Tensor2,
    pub first_moment: Tensor2,
    pub second_moment: Tensor2,
    /// Number of optimizer steps applied; drives AdamW bias correction.
    pub steps: u64,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: Tensor2) -> Self {
        let (r, c) = (value.rows(), value.cols());
        Param {
            value,
            grad: Tensor2::zeros(r, c),
            first_moment: Tensor2::zeros(r, c),
            second_moment: Tensor2::zeros(r, c),
            steps: 0,
            trainable: true,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_get_set() {
        let mut t = Tensor2::zeros(2, 3);
        t.set(1, 2, 5.0);
        assert_eq!(t.get(1, 2), 5.0);
        assert_eq!(t.get(0, 0), 0.0);
        assert_eq!(t.row(1), &[0.0, 0.0, 5.0]);
    }

    #[test]
    #[should_panic(expected = "does not match")]
    fn length_mismatch_panics() {
        let _ = Tensor2::new(2, 2, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn bits_eq_distinguishes_signed_zero() {
        let a = Tensor2::new(1, 1, vec![0.0]);
        let b = Tensor2::new(1, 1, vec![-0.0]);
        assert_eq!(a, b);
        assert!(!a.bits_eq(&b));
    }

    #[test]
    fn add_scaled_accumulates() {
        let mut a = Tensor2::new(1, 2, vec![1.0, 2.0]);
        let b = Tensor2::new(1, 2, vec![10.0, 20.0]);
        a.add_scaled(&b, 0.5);
        assert_eq!(a.as_slice(), &[6.0, 12.0]);
    }

    #[test]
    fn append_rows_grows() {
        let mut a = Tensor2::zeros(0, 0);
        a.push_row(&[1.0, 2.0]);
        let b = Tensor2::new(2, 2, vec![3.0, 4.0, 5.0, 6.0]);
        a.append_rows(&b);
        assert_eq!(a.rows(), 3);
        assert_eq!(a.row(2), &[5.0, 6.0]);
    }
}
