use nalgebra::{DMatrix, DVector};

/// Block quasi-Newton Hessian with Powell-damped BFGS updates per block.
/// Blocks may overlap, in which case their entries add. Variables not covered
/// by a block keep a fixed curvature, unit unless set with
/// [`BlockBfgs::with_fixed`].
#[derive(Debug, Clone)]
pub struct BlockBfgs {
    n: usize,
    blocks: Vec<(Vec<usize>, DMatrix<f64>)>,
    updated: Vec<bool>,
    free: Vec<usize>,
    diag: Vec<f64>,
}

impl BlockBfgs {
    pub fn new(n: usize, groups: &[Vec<usize>]) -> Self {
        let mut covered = vec![false; n];
        let blocks: Vec<_> = groups
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| {
                for &i in g {
                    covered[i] = true;
                }
                (g.clone(), DMatrix::identity(g.len(), g.len()))
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| !covered[i]).collect();
        let updated = vec![false; blocks.len()];
        let diag = vec![1.0; free.len()];
        Self { n, blocks, updated, free, diag }
    }

    /// Sets the curvature of uncovered variables; entries inside a block are
    /// ignored.
    pub fn with_fixed(mut self, fixed: &[(usize, f64)]) -> Self {
        for &(i, c) in fixed {
            if let Ok(k) = self.free.binary_search(&i) {
                self.diag[k] = c;
            }
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&[usize], &DMatrix<f64>)> {
        self.blocks.iter().map(|(i, m)| (i.as_slice(), m))
    }

    /// Uncovered variables with their fixed curvature.
    pub fn free(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.free.iter().copied().zip(self.diag.iter().copied())
    }

    /// Overwrites block `k` with a symmetric matrix.
    pub fn set_block(&mut self, k: usize, m: DMatrix<f64>) {
        assert_eq!(m.nrows(), self.blocks[k].0.len());
        self.blocks[k].1 = m;
        self.updated[k] = true;
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn reset(&mut self) {
        for (b, u) in self.blocks.iter_mut().zip(self.updated.iter_mut()) {
            b.1 = DMatrix::identity(b.0.len(), b.0.len());
            *u = false;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (idx, m) in &self.blocks {
            for (a, &i) in idx.iter().enumerate() {
                let mut s = 0.0;
                for (b, &j) in idx.iter().enumerate() {
                    s += m[(a, b)] * x[j];
                }
                y[i] += s;
            }
        }
        for (&i, &c) in self.free.iter().zip(&self.diag) {
            y[i] = c * x[i];
        }
        y
    }

    pub fn quad(&self, x: &[f64]) -> f64 {
        self.mul(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Damped update with step `s` and gradient change `y`.
    pub fn update(&mut self, s: &[f64], y: &[f64]) {
        for ((idx, h), first) in self.blocks.iter_mut().zip(self.updated.iter_mut()) {
            let sb = DVector::from_iterator(idx.len(), idx.iter().map(|&i| s[i]));
            let yb = DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]));
            let snorm = sb.amax();
            if snorm < 1e-14 || !yb.iter().all(|v| v.is_finite()) {
                continue;
            }
            let sy = sb.dot(&yb);
            if !*first && sy > 1e-12 * sb.norm() * yb.norm() {
                let scale = (yb.norm_squared() / sy).clamp(1e-6, 1e8);
                *h = DMatrix::identity(idx.len(), idx.len()) * scale;
            }
            let hs = &*h * &sb;
            let shs = sb.dot(&hs);
            if shs <= 0.0 || !shs.is_finite() {
                continue;
            }
            let r = if sy >= 0.2 * shs {
                yb
            } else {
                let theta = 0.8 * shs / (shs - sy);
                &yb * theta + &hs * (1.0 - theta)
            };
            let sr = sb.dot(&r);
            if sr <= 0.0 {
                continue;
            }
            *h -= &hs * hs.transpose() / shs;
            *h += &r * r.transpose() / sr;
            h.fill_upper_triangle_with_lower_triangle();
            *first = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secant_condition_holds_after_update() {
        let mut b = BlockBfgs::new(3, &[vec![0, 2]]);
        let s = [0.5, 1.0, -0.25];
        let y = [1.0, 7.0, 0.3];
        b.update(&s, &y);
        let hs = b.mul(&s);
        assert!((hs[0] - y[0]).abs() < 1e-12);
        assert!((hs[2] - y[2]).abs() < 1e-12);
        assert_eq!(hs[1], s[1]);
    }

    #[test]
    fn damping_keeps_positive_definite() {
        let mut b = BlockBfgs::new(2, &[vec![0, 1]]);
        b.update(&[1.0, 0.0], &[1.0, 0.0]);
        b.update(&[0.0, 1.0], &[0.0, -5.0]);
        let (_, m) = b.blocks().next().unwrap();
        let eig = m.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&e| e > 0.0));
    }
}
