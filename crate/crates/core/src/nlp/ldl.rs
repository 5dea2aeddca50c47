//! Envelope (skyline) LDLᵀ factorization of symmetric quasi-definite systems.
//!
//! Each row `i` stores the entries from its first structural nonzero up to the
//! diagonal. No pivoting is done; the caller orders unknowns so the envelope
//! stays narrow and adds regularization when a pivot has the wrong sign.

/// Lower envelope of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct Skyline {
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl Skyline {
    /// Builds an all-zero matrix whose row `i` spans `first[i]..=i`.
    pub fn with_profile(first: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            debug_assert!(f <= i);
            offset.push(total);
            total += i - f + 1;
        }
        offset.push(total);
        Self { first, offset, values: vec![0.0; total] }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored(&self) -> usize {
        self.values.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` at `(i, j)`; either triangle may be addressed.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(c >= self.first[r], "entry ({r}, {c}) outside envelope");
        self.values[self.offset[r] + c - self.first[r]] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.first[r] {
            0.0
        } else {
            self.values[self.offset[r] + c - self.first[r]]
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[self.offset[i]..self.offset[i + 1]]
    }

    /// `y = K x` using the symmetric envelope.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let f = self.first[i];
            let row = self.row(i);
            let diag = row[i - f];
            let mut acc = diag * x[i];
            for (k, &v) in row[..i - f].iter().enumerate() {
                let j = f + k;
                acc += v * x[j];
                y[j] += v * x[i];
            }
            y[i] += acc;
        }
        y
    }

    /// In-place `LDLᵀ`. Returns the factor, or the index of the first zero or
    /// non-finite pivot.
    pub fn factor(mut self) -> Result<LdlFactor, usize> {
        let n = self.dim();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            // Row i currently holds K(i, fi..=i). Turn it into u_ij = L_ij d_j.
            for j in fi..i {
                let fj = self.first[j];
                let start = fi.max(fj);
                let oj = self.offset[j];
                let mut s = self.values[oi + j - fi];
                if start < j {
                    let a = &self.values[oi + start - fi..oi + j - fi];
                    let b = &self.values[oj + start - fj..oj + j - fj];
                    s -= dot(a, b);
                }
                self.values[oi + j - fi] = s;
            }
            let mut d = self.values[oi + i - fi];
            for j in fi..i {
                let u = self.values[oi + j - fi];
                let l = u / diag[j];
                self.values[oi + j - fi] = l;
                d -= u * l;
            }
            if d == 0.0 || !d.is_finite() {
                return Err(i);
            }
            diag[i] = d;
            self.values[oi + i - fi] = 1.0;
        }
        Ok(LdlFactor { l: self, diag })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for m in 0..4 {
            acc[m] += a[4 * k + m] * b[4 * k + m];
        }
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    l: Skyline,
    diag: Vec<f64>,
}

impl LdlFactor {
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Number of positive pivots.
    pub fn positive_pivots(&self) -> usize {
        self.diag.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut x = b.to_vec();
        for i in 0..n {
            let f = self.l.first[i];
            let row = self.l.row(i);
            x[i] -= dot(&row[..i - f], &x[f..i]);
        }
        for i in 0..n {
            x[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let f = self.l.first[i];
            let row = self.l.row(i);
            let xi = x[i];
            for (k, &v) in row[..i - f].iter().enumerate() {
                x[f + k] -= v * xi;
            }
        }
        x
    }
}
