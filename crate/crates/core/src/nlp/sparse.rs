/// Row-wise sparse matrix; each row holds `(column, value)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRows {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        Self { ncols, rows: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn push_row(&mut self, row: Vec<(usize, f64)>) {
        debug_assert!(row.iter().all(|(c, _)| *c < self.ncols));
        self.rows.push(row);
    }

    pub fn from_dense(rows: &[Vec<f64>], ncols: usize) -> Self {
        let rows = rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, v)| (c, *v)).collect())
            .collect();
        Self { ncols, rows }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; self.ncols];
                for &(c, v) in r {
                    d[c] += v;
                }
                d
            })
            .collect()
    }

    /// `A x`
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(c, v)| v * x[c]).sum()).collect()
    }

    /// `out += Aᵀ y`
    pub fn mul_transpose_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                for &(c, v) in r {
                    out[c] += v * yi;
                }
            }
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Multiplies every column `c` by `col[c]` and every row `r` by `row[r]`.
    pub fn scale(&mut self, row: &[f64], col: &[f64]) {
        for (r, entries) in self.rows.iter_mut().enumerate() {
            for (c, v) in entries.iter_mut() {
                *v *= row[r] * col[*c];
            }
        }
    }
}
