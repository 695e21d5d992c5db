use crate::ingest::FlowTensor;

/// Row-compressed nonzero entries of one network input.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseInput {
    rows: usize,
    cols: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u16>,
    values: Vec<f32>,
}

impl SparseInput {
    pub fn from_dense(rows: usize, cols: usize, dense: &[f32]) -> Self {
        assert_eq!(dense.len(), rows * cols, "dense input has wrong length");
        let mut s = SparseInput {
            rows,
            cols,
            row_ptr: Vec::with_capacity(rows + 1),
            col_idx: Vec::new(),
            values: Vec::new(),
        };
        s.row_ptr.push(0);
        for r in 0..rows {
            for (c, &v) in dense[r * cols..(r + 1) * cols].iter().enumerate() {
                if v != 0.0 {
                    s.col_idx.push(c as u16);
                    s.values.push(v);
                }
            }
            s.row_ptr.push(s.values.len() as u32);
        }
        s
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// (column, value) pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f32)> + '_ {
        let lo = self.row_ptr[r] as usize;
        let hi = self.row_ptr[r + 1] as usize;
        self.col_idx[lo..hi].iter().zip(&self.values[lo..hi]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let mut d = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d[r * self.cols + c] = v;
            }
        }
        d
    }
}

impl From<&FlowTensor> for SparseInput {
    fn from(t: &FlowTensor) -> Self {
        let cols = FlowTensor::COLS;
        let mut s = SparseInput {
            rows: FlowTensor::ROWS,
            cols,
            row_ptr: Vec::with_capacity(FlowTensor::ROWS + 1),
            col_idx: Vec::new(),
            values: Vec::new(),
        };
        s.row_ptr.push(0);
        for r in 0..FlowTensor::ROWS {
            if r < t.packet_count() {
                for (c, &b) in t.row(r).iter().enumerate() {
                    if b != 0 {
                        s.col_idx.push(c as u16);
                        s.values.push(b as f32 / 255.0);
                    }
                }
            }
            s.row_ptr.push(s.values.len() as u32);
        }
        s
    }
}
