//! Dense column-major matrices over a [`Scalar`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    pub fn diagonal(entries: &[S]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, d) in entries.iter().enumerate() {
            m.set(i, i, d.clone());
        }
        m
    }

    pub fn from_columns(rows: usize, columns: Vec<Vec<S>>) -> Result<Self> {
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            if c.len() != rows {
                return Err(Error::Dimension(format!("column of length {} in a {rows}-row matrix", c.len())));
            }
            data.extend(c);
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[S] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [S] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> DenseMatrix<T> {
        DenseMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn to_f64(&self) -> DenseMatrix<f64> {
        self.map(|v| v.to_f64())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() + b.clone()).collect();
        Ok(DenseMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() - b.clone()).collect();
        Ok(DenseMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, c: &S) -> Self {
        self.map(|v| v.clone() * c.clone())
    }

    pub fn mul_vec(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!("vector of length {} for {} columns", x.len(), self.cols)));
        }
        let mut out = vec![S::zero(); self.rows];
        for (j, xj) in x.iter().enumerate() {
            if xj.is_zero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.col(j)) {
                if !a.is_zero() {
                    *o = o.clone() + a.clone() * xj.clone();
                }
            }
        }
        Ok(out)
    }

    /// Column-parallel product; each column is accumulated in a fixed order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let columns: Vec<Vec<S>> = (0..other.cols)
            .into_par_iter()
            .map(|j| self.mul_vec(other.col(j)).expect("shapes checked"))
            .collect();
        Self::from_columns(self.rows, columns)
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols
            && (0..self.cols).all(|j| {
                self.col(j)
                    .iter()
                    .enumerate()
                    .all(|(i, v)| if i == j { v.is_one() } else { v.is_zero() })
            })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max)
    }

    /// Gauss-Jordan solve of `self · X = rhs`. Floats use partial pivoting;
    /// rationals take the first nonzero pivot.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        let n = self.rows;
        if self.cols != n || rhs.rows != n {
            return Err(Error::Dimension("solve needs a square system".into()));
        }
        // Row-major working copies make row operations contiguous.
        let mut a: Vec<Vec<S>> = (0..n).map(|i| (0..n).map(|j| self.get(i, j).clone()).collect()).collect();
        let mut b: Vec<Vec<S>> = (0..n).map(|i| (0..rhs.cols).map(|j| rhs.get(i, j).clone()).collect()).collect();
        for col in 0..n {
            let mut best = col;
            let mut best_score = a[col][col].pivot_score();
            for (r, row) in a.iter().enumerate().skip(col + 1) {
                if best_score > 0.0 && S::MODE == crate::scalar::NumericMode::Rational {
                    break;
                }
                let s = row[col].pivot_score();
                if s > best_score {
                    best = r;
                    best_score = s;
                }
            }
            if best_score == 0.0 {
                return Err(Error::Singular);
            }
            a.swap(col, best);
            b.swap(col, best);
            let inv = S::one() / a[col][col].clone();
            for v in a[col].iter_mut() {
                *v = v.clone() * inv.clone();
            }
            for v in b[col].iter_mut() {
                *v = v.clone() * inv.clone();
            }
            let pivot_row = a[col].clone();
            let pivot_rhs = b[col].clone();
            for r in 0..n {
                if r == col || a[r][col].is_zero() {
                    continue;
                }
                let factor = a[r][col].clone();
                for (v, p) in a[r].iter_mut().zip(&pivot_row) {
                    if !p.is_zero() {
                        *v = v.clone() - factor.clone() * p.clone();
                    }
                }
                for (v, p) in b[r].iter_mut().zip(&pivot_rhs) {
                    if !p.is_zero() {
                        *v = v.clone() - factor.clone() * p.clone();
                    }
                }
            }
        }
        Ok(Self::from_fn(n, rhs.cols, |i, j| b[i][j].clone()))
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve(&Self::identity(self.rows))
    }
}
