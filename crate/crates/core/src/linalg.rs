//! Small linear-algebra kernels: tridiagonal elimination, CSR storage and a
//! preconditioned conjugate gradient with reproducible reductions.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Tridiagonal system `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * x[i + 1];
            }
            out[i] = v;
        }
    }

    /// Thomas algorithm. Fails on a vanishing pivot.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut scratch = vec![0.0; self.len()];
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x, &mut scratch)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        let n = self.len();
        if x.len() != n || scratch.len() < n {
            return Err(Error::LinearSolve(format!("size mismatch: system {n}, rhs {}", x.len())));
        }
        if n == 0 {
            return Ok(());
        }
        let mut pivot = self.diag[0];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::LinearSolve("zero pivot in row 0".into()));
        }
        x[0] /= pivot;
        for i in 1..n {
            scratch[i] = self.upper[i - 1] / pivot;
            pivot = self.diag[i] - self.lower[i] * scratch[i];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::LinearSolve(format!("zero pivot in row {i}")));
            }
            x[i] = (x[i] - self.lower[i] * x[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            x[i] -= scratch[i + 1] * x[i + 1];
        }
        Ok(())
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    /// Rows are independent, so the parallel product is bitwise reproducible.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out[..self.n].par_iter_mut().with_min_len(4096).enumerate().for_each(|(i, o)| {
            let mut v = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                v += self.vals[k] * x[self.cols[k]];
            }
            *o = v;
        });
    }

    /// Storage index of entry `(r, c)`, if present.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        row.binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.cols[k] == i)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }
}

const DOT_CHUNK: usize = 256;

/// Dot product summed in fixed-size chunks, so the rounding does not depend on
/// how the caller is scheduled.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(DOT_CHUNK)
        .zip(b.par_chunks(DOT_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().fold(0.0, |acc, s| acc + s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preconditioner {
    Jacobi,
    /// Modified incomplete Cholesky on the pattern of `A`, with dropped
    /// fill-in moved to the diagonal scaled by `omega`.
    Mic { omega: f64 },
}

enum Factor {
    Jacobi(Vec<f64>),
    /// Inverse pivots and the storage index of each diagonal entry.
    Mic { inv_d: Vec<f64>, dpos: Vec<usize> },
}

impl Factor {
    fn build(a: &CsrMatrix, kind: Preconditioner) -> Result<Self> {
        match kind {
            Preconditioner::Jacobi => Ok(Factor::Jacobi(
                a.diagonal().into_iter().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect(),
            )),
            Preconditioner::Mic { omega } => {
                let n = a.n;
                let dpos: Vec<usize> = (0..n)
                    .map(|i| a.position(i, i).ok_or_else(|| Error::LinearSolve(format!("row {i} has no diagonal"))))
                    .collect::<Result<_>>()?;
                let upper_sum: Vec<f64> = (0..n).map(|j| a.vals[dpos[j] + 1..a.row_ptr[j + 1]].iter().sum()).collect();
                let mut inv_d = vec![0.0; n];
                for i in 0..n {
                    let mut v = a.vals[dpos[i]];
                    for k in a.row_ptr[i]..dpos[i] {
                        let j = a.cols[k];
                        let aij = a.vals[k];
                        // a_ji = a_ij by symmetry
                        v -= aij * inv_d[j] * ((1.0 - omega) * aij + omega * upper_sum[j]);
                    }
                    if !(v > 0.0) {
                        return Err(Error::LinearSolve(format!("incomplete factorization broke down at row {i}")));
                    }
                    inv_d[i] = 1.0 / v;
                }
                Ok(Factor::Mic { inv_d, dpos })
            }
        }
    }

    /// `z = P^-1 r` with `P = (D + E) D^-1 (D + E^T)`.
    fn apply(&self, a: &CsrMatrix, r: &[f64], z: &mut [f64]) {
        match self {
            Factor::Jacobi(inv) => {
                for i in 0..r.len() {
                    z[i] = r[i] * inv[i];
                }
            }
            Factor::Mic { inv_d, dpos } => {
                let n = a.n;
                // forward sweep stores D y in z
                for i in 0..n {
                    let mut v = r[i];
                    for k in a.row_ptr[i]..dpos[i] {
                        let j = a.cols[k];
                        v -= a.vals[k] * z[j] * inv_d[j];
                    }
                    z[i] = v;
                }
                for i in (0..n).rev() {
                    let mut v = z[i];
                    for k in dpos[i] + 1..a.row_ptr[i + 1] {
                        v -= a.vals[k] * z[a.cols[k]];
                    }
                    z[i] = v * inv_d[i];
                }
            }
        }
    }
}

/// Preconditioned conjugate gradient for symmetric positive definite
/// systems. Stops when `|r| <= rel_tol |b|`; `x` holds the initial guess.
/// The incomplete factorizations assume sorted column indices, which
/// `from_triplets` guarantees.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
    preconditioner: Preconditioner,
) -> Result<CgOutcome> {
    let n = a.n;
    let factor = Factor::build(a, preconditioner)?;
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    factor.apply(a, &r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    for it in 0..max_iter {
        if res <= rel_tol {
            return Ok(CgOutcome { iterations: it, residual: res });
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolve("matrix is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        factor.apply(a, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
    }
    if res <= rel_tol {
        return Ok(CgOutcome { iterations: max_iter, residual: res });
    }
    Err(Error::IterativeNonConvergence { iterations: max_iter, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thomas_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            t.lower[i] = rng.gen_range(-1.0..0.0);
            t.upper[i] = rng.gen_range(-1.0..0.0);
            t.diag[i] = 2.5 + rng.gen_range(0.0..1.0);
        }
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        t.matvec(&x, &mut b);
        let y = t.solve(&b).unwrap();
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn thomas_reports_zero_pivot() {
        let t = Tridiagonal { lower: vec![0.0, 1.0], diag: vec![0.0, 1.0], upper: vec![1.0, 0.0] };
        assert!(matches!(t.solve(&[1.0, 1.0]), Err(Error::LinearSolve(_))));
    }

    #[test]
    fn csr_sums_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(1, 1, 2.0), (0, 0, 1.0), (1, 1, 3.0), (0, 1, -1.0)]);
        let mut out = [0.0; 2];
        m.matvec(&[1.0, 2.0], &mut out);
        assert_eq!(out, [-1.0, 10.0]);
        assert_eq!(m.diagonal(), vec![1.0, 5.0]);
    }

    #[test]
    fn cg_solves_poisson() {
        let n = 200;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 2.0 + 1e-3));
            if i > 0 {
                trip.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                trip.push((i, i + 1, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, trip);
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&exact, &mut b);
        let mut iters = vec![];
        for pre in [Preconditioner::Jacobi, Preconditioner::Mic { omega: 0.95 }] {
            let mut x = vec![0.0; n];
            let out = pcg(&a, &b, &mut x, 1e-13, 10 * n, pre).unwrap();
            assert!(out.residual <= 1e-13);
            for i in 0..n {
                assert!((x[i] - exact[i]).abs() < 1e-8);
            }
            iters.push(out.iterations);
        }
        let mut y = vec![0.0; n];
        assert!(matches!(
            pcg(&a, &b, &mut y, 1e-13, 3, Preconditioner::Jacobi),
            Err(Error::IterativeNonConvergence { .. })
        ));
        // a tridiagonal matrix has no fill, so the factorization is exact
        assert!(iters[1] <= 2, "{iters:?}");
    }

    #[test]
    fn dot_is_chunk_stable() {
        let a: Vec<f64> = (0..1000).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        assert_eq!(dot(&a, &a), dot(&a, &a));
        let naive: f64 = a.iter().map(|v| v * v).sum();
        assert!((dot(&a, &a) - naive).abs() < 1e-14);
    }
}
