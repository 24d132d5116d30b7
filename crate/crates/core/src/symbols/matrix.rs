use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::poly::Poly;

/// Dense matrix of polynomials in s₁, s₂, s₃.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Poly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![Poly::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Poly::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Poly) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn from_rational(m: &RatMatrix) -> Self {
        Self::from_fn(m.rows, m.cols, |i, j| Poly::constant(m[(i, j)].clone()))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Poly {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Poly) {
        self.entries[i * self.cols + j] = p;
    }

    pub fn entries(&self) -> &[Poly] {
        &self.entries
    }

    /// Largest total degree over all entries; −1 if every entry is zero.
    pub fn max_degree(&self) -> i32 {
        self.entries.iter().map(Poly::degree).max().unwrap_or(-1)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Poly::is_zero)
    }

    pub fn columns(&self, range: std::ops::Range<usize>) -> PolyMatrix {
        let start = range.start;
        PolyMatrix::from_fn(self.rows, range.len(), |i, j| self.get(i, start + j).clone())
    }

    pub fn mul(&self, o: &PolyMatrix) -> PolyMatrix {
        assert_eq!(self.cols, o.rows, "dimension mismatch");
        PolyMatrix::from_fn(self.rows, o.cols, |i, j| {
            let mut acc = Poly::zero();
            for k in 0..self.cols {
                let a = self.get(i, k);
                let b = o.get(k, j);
                if !a.is_zero() && !b.is_zero() {
                    acc = &acc + &(a * b);
                }
            }
            acc
        })
    }

    pub fn sub(&self, o: &PolyMatrix) -> PolyMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) - o.get(i, j))
    }

    pub fn neg(&self) -> PolyMatrix {
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| -self.get(i, j))
    }

    pub fn scale(&self, p: &Poly) -> PolyMatrix {
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * p)
    }

    pub fn scale_rational(&self, k: &BigRational) -> PolyMatrix {
        PolyMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).scale(k))
    }

    /// Numeric value at s = iξ.
    pub fn eval_at_xi(&self, xi: [f64; 3]) -> DMatrix<Complex64> {
        let s = xi.map(|x| Complex64::new(0.0, x));
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval_complex(s))
    }

    pub fn eval_rational(&self, s: &[BigRational; 3]) -> RatMatrix {
        RatMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval_rational(s))
    }

    /// Determinant by cofactor expansion; intended for the small reduced blocks.
    pub fn determinant(&self) -> Poly {
        assert_eq!(self.rows, self.cols, "determinant of non-square matrix");
        let idx: Vec<usize> = (0..self.cols).collect();
        self.minor_det(0, &idx)
    }

    fn minor_det(&self, row: usize, cols: &[usize]) -> Poly {
        if cols.is_empty() {
            return Poly::one();
        }
        let mut acc = Poly::zero();
        for (pos, &c) in cols.iter().enumerate() {
            let a = self.get(row, c);
            if a.is_zero() {
                continue;
            }
            let rest: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let term = a * &self.minor_det(row + 1, &rest);
            acc = if pos % 2 == 0 { &acc + &term } else { &acc - &term };
        }
        acc
    }

    /// Transposed cofactor matrix, so that M·adj(M) = det(M)·E.
    pub fn adjugate(&self) -> PolyMatrix {
        let n = self.rows;
        assert_eq!(n, self.cols);
        if n == 0 {
            return PolyMatrix::zeros(0, 0);
        }
        PolyMatrix::from_fn(n, n, |i, j| {
            let sub = PolyMatrix::from_fn(n - 1, n - 1, |r, c| {
                let rr = if r < j { r } else { r + 1 };
                let cc = if c < i { c } else { c + 1 };
                self.get(rr, cc).clone()
            });
            let d = sub.determinant();
            if (i + j) % 2 == 0 { d } else { -&d }
        })
    }
}

impl fmt::Display for PolyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Dense exact rational matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<BigRational>,
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![BigRational::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigRational::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> BigRational) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn mul(&self, o: &RatMatrix) -> RatMatrix {
        assert_eq!(self.cols, o.rows);
        RatMatrix::from_fn(self.rows, o.cols, |i, j| {
            let mut acc = BigRational::zero();
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if !a.is_zero() {
                    acc += a * &o[(k, j)];
                }
            }
            acc
        })
    }

    pub fn row(&self, i: usize) -> &[BigRational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Exact Gauss-Jordan elimination: determinant and, when it is nonzero, the inverse.
    pub fn det_and_inverse(&self) -> (BigRational, Option<RatMatrix>) {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = RatMatrix::identity(n);
        let mut det = BigRational::one();
        for col in 0..n {
            let Some(p) = (col..n).find(|&r| !a[(r, col)].is_zero()) else {
                return (BigRational::zero(), None);
            };
            if p != col {
                a.swap_rows(p, col);
                inv.swap_rows(p, col);
                det = -det;
            }
            let pivot = a[(col, col)].clone();
            det *= &pivot;
            let pinv = pivot.recip();
            for j in 0..n {
                a[(col, j)] *= &pinv;
                inv[(col, j)] *= &pinv;
            }
            for r in 0..n {
                if r == col || a[(r, col)].is_zero() {
                    continue;
                }
                let f = a[(r, col)].clone();
                for j in 0..n {
                    let t = &f * &a[(col, j)];
                    a[(r, j)] -= t;
                    let t = &f * &inv[(col, j)];
                    inv[(r, j)] -= t;
                }
            }
        }
        (det, Some(inv))
    }

    /// Rows forming a basis of the row space, chosen greedily in order, and the
    /// coordinates of every row in that basis.
    pub fn row_basis(&self) -> (Vec<usize>, Vec<Vec<BigRational>>) {
        let mut basis = Vec::new();
        let mut echelon: Vec<(usize, Vec<BigRational>)> = Vec::new();
        for i in 0..self.rows {
            let mut v = self.row(i).to_vec();
            for (p, row) in &echelon {
                if !v[*p].is_zero() {
                    let f = v[*p].clone();
                    for j in 0..self.cols {
                        v[j] -= &f * &row[j];
                    }
                }
            }
            if let Some(p) = v.iter().position(|x| !x.is_zero()) {
                let pinv = v[p].recip();
                for x in &mut v {
                    *x *= &pinv;
                }
                echelon.push((p, v));
                basis.push(i);
            }
        }
        let w = RatMatrix::from_fn(basis.len(), self.cols, |k, j| self[(basis[k], j)].clone());
        let gram = RatMatrix::from_fn(w.rows, w.rows, |a, b| {
            (0..w.cols).fold(BigRational::zero(), |acc, j| acc + &w[(a, j)] * &w[(b, j)])
        });
        let (_, gram_inv) = gram.det_and_inverse();
        let gram_inv = gram_inv.expect("basis rows are independent");
        let coords = (0..self.rows)
            .map(|i| {
                let rhs: Vec<BigRational> = (0..w.rows)
                    .map(|a| (0..w.cols).fold(BigRational::zero(), |acc, j| acc + &w[(a, j)] * &self[(i, j)]))
                    .collect();
                (0..w.rows)
                    .map(|a| (0..w.rows).fold(BigRational::zero(), |acc, b| acc + &gram_inv[(a, b)] * &rhs[b]))
                    .collect()
            })
            .collect();
        (basis, coords)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

impl std::ops::Index<(usize, usize)> for RatMatrix {
    type Output = BigRational;
    fn index(&self, (i, j): (usize, usize)) -> &BigRational {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RatMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut BigRational {
        &mut self.data[i * self.cols + j]
    }
}
