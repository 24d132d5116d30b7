//! Dense LU with partial pivoting, transpose solves and a 1-norm
//! condition estimate (Hager's method).

#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factors the row-major `n×n` matrix. `None` if a pivot vanishes.
    pub fn new(a: &[f64], n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = lu[k * n + k];
            let (top, bottom) = lu.split_at_mut((k + 1) * n);
            let row_k = &top[k * n..];
            for row in bottom.chunks_exact_mut(n) {
                let f = row[k] / piv;
                if f == 0.0 {
                    continue;
                }
                row[k] = f;
                for j in k + 1..n {
                    row[j] -= f * row_k[j];
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&x[i + 1..]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Solves Aᵀ x = b.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            y[i] /= self.lu[i * n + i];
            let yi = y[i];
            for j in i + 1..n {
                y[j] -= self.lu[i * n + j] * yi;
            }
        }
        for i in (0..n).rev() {
            let yi = y[i];
            for j in 0..i {
                y[j] -= self.lu[i * n + j] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Estimate of ‖A⁻¹‖₁.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.abs()).sum();
            let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bj, bv), (j, &v)| if v.abs() > bv { (j, v.abs()) } else { (bj, bv) });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[j] = 1.0;
        }
        est
    }
}

pub fn norm1(a: &[f64], n: usize) -> f64 {
    (0..n).map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn matvec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    a.chunks_exact(n).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(seed: u64, n: usize) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for i in 0..n {
            a[i * n + i] += n as f64 * 0.5;
        }
        a
    }

    proptest! {
        #[test]
        fn solve_and_transpose_solve(seed in 0u64..1000, n in 1usize..12) {
            let a = random_matrix(seed, n);
            let lu = DenseLu::new(&a, n).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
            let x = lu.solve(&b);
            let r = matvec(&a, n, &x);
            for i in 0..n { prop_assert!((r[i] - b[i]).abs() < 1e-10); }
            let at: Vec<f64> = (0..n * n).map(|k| a[(k % n) * n + k / n]).collect();
            let y = lu.solve_transpose(&b);
            let r = matvec(&at, n, &y);
            for i in 0..n { prop_assert!((r[i] - b[i]).abs() < 1e-10); }
        }
    }

    #[test]
    fn singular_is_rejected() {
        assert!(DenseLu::new(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }

    #[test]
    fn condition_of_diagonal() {
        let a = [1.0, 0.0, 0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 2.0];
        let lu = DenseLu::new(&a, 3).unwrap();
        let k = norm1(&a, 3) * lu.inverse_norm1_estimate();
        assert!((k - 200.0).abs() < 1e-9);
    }
}
