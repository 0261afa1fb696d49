//! Band-diagonal matrices and LU elimination with partial pivoting.
//!
//! Row `i` of an `n x n` matrix with lower bandwidth `m1` and upper
//! bandwidth `m2` stores columns `i - m1 ..= i + m2`. Pivoting can widen
//! the upper band to `m1 + m2`; the compact storage keeps that fill by
//! left-aligning every candidate row on the current pivot column.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self { n, lower, upper, data: vec![0.0; n * (lower + upper + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.lower
    }

    pub fn upper(&self) -> usize {
        self.upper
    }

    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || j + self.lower < i || j > i + self.upper {
            return None;
        }
        Some(i * self.width() + (j + self.lower - i))
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("({i}, {j}) outside band"));
        self.data[s] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("({i}, {j}) outside band"));
        self.data[s] += value;
    }

    /// Zero row `i` and put `value` on its diagonal.
    pub fn set_unit_row(&mut self, i: usize, value: f64) {
        let w = self.width();
        self.data[i * w..(i + 1) * w].fill(0.0);
        self.set(i, i, value);
    }

    /// Nonzero entries of column `j`, excluding row `skip`.
    pub fn column_has_entries(&self, j: usize, skip: usize) -> bool {
        let lo = j.saturating_sub(self.upper);
        let hi = (j + self.lower).min(self.n.saturating_sub(1));
        (lo..=hi).any(|i| i != skip && self.get(i, j) != 0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let lu = BandedLu::factor(self)?;
        Ok(lu.solve(b))
    }
}

/// LU factors of a [`BandedMatrix`].
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    m1: usize,
    mm: usize,
    upper_rows: Vec<f64>,
    multipliers: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(matrix: &BandedMatrix) -> Result<Self> {
        let n = matrix.n;
        let m1 = matrix.lower;
        let mm = matrix.width();
        let mut a = matrix.data.clone();
        // rows above m1 have fewer than m1 subdiagonal slots; left-align them
        for i in 0..m1.min(n) {
            let s = m1 - i;
            let row = &mut a[i * mm..(i + 1) * mm];
            row.copy_within(s..mm, 0);
            row[mm - s..].fill(0.0);
        }
        let threshold = 64.0 * f64::EPSILON * matrix.max_abs();
        let mut multipliers = vec![0.0; n * m1.max(1)];
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last = (k + m1).min(n - 1);
            let mut piv = k;
            let mut best = a[k * mm].abs();
            for i in k + 1..=last {
                if a[i * mm].abs() > best {
                    best = a[i * mm].abs();
                    piv = i;
                }
            }
            if !(best > threshold) {
                return Err(Error::Singular(format!("no usable pivot in column {k}")));
            }
            pivots[k] = piv;
            if piv != k {
                for j in 0..mm {
                    a.swap(k * mm + j, piv * mm + j);
                }
            }
            let pivot = a[k * mm];
            for i in k + 1..=last {
                let factor = a[i * mm] / pivot;
                multipliers[k * m1 + (i - k - 1)] = factor;
                for j in 1..mm {
                    a[i * mm + j - 1] = a[i * mm + j] - factor * a[k * mm + j];
                }
                a[i * mm + mm - 1] = 0.0;
            }
        }
        Ok(Self { n, m1, mm, upper_rows: a, multipliers, pivots })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, m1, mm) = (self.n, self.m1, self.mm);
        let mut x = b.to_vec();
        for k in 0..n {
            let piv = self.pivots[k];
            if piv != k {
                x.swap(k, piv);
            }
            let last = (k + m1).min(n - 1);
            for i in k + 1..=last {
                x[i] -= self.multipliers[k * m1 + (i - k - 1)] * x[k];
            }
        }
        for i in (0..n).rev() {
            let row = &self.upper_rows[i * mm..(i + 1) * mm];
            let reach = mm.min(n - i);
            let mut acc = x[i];
            for kk in 1..reach {
                acc -= row[kk] * x[i + kk];
            }
            x[i] = acc / row[0];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, lower: usize, upper: usize, seed: u64) -> BandedMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandedMatrix::zeros(n, lower, upper);
        for i in 0..n {
            for j in i.saturating_sub(lower)..=(i + upper).min(n - 1) {
                // diagonal comparable to the off-diagonal so pivoting happens
                let v = if i == j {
                    rng.random_range(0.3..1.3) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
                } else {
                    rng.random_range(-1.0..1.0)
                };
                m.set(i, j, v);
            }
        }
        m
    }

    #[test]
    fn matches_dense_lu() {
        let shapes = [(7, 1, 1), (12, 3, 1), (20, 2, 4), (5, 0, 2), (30, 5, 0), (1, 0, 0), (40, 1, 3)];
        for (seed, &(n, lo, up)) in shapes.iter().enumerate() {
            let m = random_banded(n, lo, up, seed as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(99 + seed as u64);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = m.solve(&b).unwrap();
            let dense = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
            let xd = dense.lu().solve(&DVector::from_vec(b.clone())).unwrap();
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() < 1e-9 * (1.0 + xd[i].abs()), "n={n} lo={lo} up={up}");
            }
            let r = m.mul_vec(&x);
            for i in 0..n {
                assert!((r[i] - b[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut m = BandedMatrix::zeros(3, 1, 1);
        m.set(0, 0, 1.0);
        m.set(1, 0, 2.0);
        // column 1 and 2 rows are zero for row 2
        m.set(1, 2, 1.0);
        assert!(matches!(m.solve(&[1.0, 0.0, 0.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn out_of_band_reads_are_zero() {
        let m = BandedMatrix::zeros(4, 1, 1);
        assert_eq!(m.get(0, 3), 0.0);
        assert_eq!(m.get(3, 0), 0.0);
    }
}
