//! Banded LU factorization with partial pivoting (LAPACK `gbtf2` storage layout).

use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Column-major band storage with `2 kl + ku + 1` rows per column; the top `kl` rows hold
/// the fill-in produced by pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, ab: vec![0.0; ldab * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) + j * self.ldab
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry `(i, j)`; panics outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.ab[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    /// Scales row `i` (all stored entries) by `s`.
    pub fn scale_row(&mut self, i: usize, s: f64) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let k = self.idx(i, j);
            self.ab[k] *= s;
        }
    }

    /// Factors a copy of the matrix.
    pub fn factor(&self) -> Result<BandLu> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let mut ab = self.ab.clone();
        let mut ipiv = vec![0usize; n];
        let at = |i: usize, j: usize| kv + i - j + j * ldab;
        let mut ju = 0usize;
        let mut min_pivot = f64::INFINITY;
        let mut min_row = 0;
        let scale = self.ab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = ab[at(j, j)].abs();
            for i in 1..=km {
                let v = ab[at(j + i, j)].abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if best < min_pivot {
                min_pivot = best;
                min_row = j;
            }
            if best == 0.0 || best <= 1e-300 * scale.max(1e-300) {
                return Err(Error::Singular { pivot: best, row: j });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(at(j, c), at(j + jp, c));
                }
            }
            let piv = ab[at(j, j)];
            for i in 1..=km {
                ab[at(j + i, j)] /= piv;
            }
            for c in j + 1..=ju {
                let u = ab[at(j, c)];
                if u != 0.0 {
                    let col = c * ldab;
                    let lcol = j * ldab;
                    for i in 1..=km {
                        ab[kv + j + i - c + col] -= ab[kv + i + lcol] * u;
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, ldab, ab, ipiv, min_pivot, min_pivot_row: min_row })
    }
}

/// LU factors of a [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    /// Smallest pivot magnitude met during elimination.
    pub min_pivot: f64,
    pub min_pivot_row: usize,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, kv, ldab) = (self.n, self.kl, self.kl + self.ku, self.ldab);
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                for i in 1..=km {
                    b[j + i] -= self.ab[kv + i + j * ldab] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[kv + j * ldab];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    b[i] -= self.ab[kv + i - j + j * ldab] * bj;
                }
            }
        }
    }
}

/// Solves `A x = b` with one step of iterative refinement; returns `x`, the factors and the
/// final relative residual `|b - A x|_inf / |b|_inf`.
pub fn solve_refined(a: &BandMatrix, b: &[f64]) -> Result<(Vec<f64>, BandLu, f64)> {
    let lu = a.factor()?;
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x);
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    lu.solve_in_place(&mut r);
    x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
    let ax = a.matvec(&x);
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rn = b.iter().zip(&ax).fold(0.0f64, |m, (bi, ai)| m.max((bi - ai).abs()));
    let rel = if bn > 0.0 { rn / bn } else { rn };
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular { pivot: lu.min_pivot, row: lu.min_pivot_row });
    }
    Ok((x, lu, rel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn random_band(n: usize, kl: usize, ku: usize, seed: &[f64]) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, kl, ku);
        let mut k = 0;
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                a.add(i, j, seed[k % seed.len()]);
                k += 1;
            }
        }
        a
    }

    #[test]
    fn pivoting_is_needed_and_works() {
        // zero leading diagonal forces a row swap
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.add(0, 1, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 2, 1.0);
        a.add(2, 1, 1.0);
        a.add(2, 2, 3.0);
        let b = [1.0, 6.0, 11.0];
        let (x, _, res) = solve_refined(&a, &b).unwrap();
        assert!(res < 1e-15);
        let ax = a.matvec(&x);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = BandMatrix::zeros(2, 1, 1);
        a.add(0, 0, 1.0);
        a.add(0, 1, 2.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 4.0);
        assert!(matches!(a.factor(), Err(Error::Singular { .. })));
    }

    proptest! {
        #[test]
        fn agrees_with_dense_solver(
            n in 4usize..24,
            kl in 0usize..4,
            ku in 0usize..5,
            seed in proptest::collection::vec(-1.0f64..1.0, 40),
            rhs in proptest::collection::vec(-1.0f64..1.0, 24),
        ) {
            let mut a = random_band(n, kl, ku, &seed);
            for i in 0..n {
                a.add(i, i, 0.5 * (i as f64 + 1.0).sqrt());
            }
            let mut dense = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    dense[(i, j)] = a.get(i, j);
                }
            }
            prop_assume!(dense.clone().lu().determinant().abs() > 1e-6);
            let b: Vec<f64> = rhs[..n].to_vec();
            let (x, _, _) = solve_refined(&a, &b).unwrap();
            let xd = dense.lu().solve(&DVector::from_vec(b)).unwrap();
            let scale = xd.amax().max(1.0);
            for i in 0..n {
                prop_assert!((x[i] - xd[i]).abs() <= 1e-8 * scale);
            }
        }
    }
}
