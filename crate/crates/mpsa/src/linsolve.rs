//! Sparse linear algebra for the assembled systems: CSR storage, a banded LU
//! with partial pivoting under reverse Cuthill-McKee ordering, conjugate
//! gradients for the symmetric variants, and BiCGStab for large nonsymmetric
//! systems.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("conjugate gradients requested on a nonsymmetric operator (max |M - M^T| = {asym:.3e})")]
    CgOnNonsymmetric { asym: f64 },
    #[error("iterative solver did not converge: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },
    #[error("matrix is numerically singular at pivot {row}")]
    Singular { row: usize },
}

/// Compressed sparse row matrix built from (row, col, value) triplets with
/// deterministic duplicate coalescing.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.values[k];
            }
        }
        m
    }

    /// max |M - M^T| over all entries.
    pub fn asymmetry(&self) -> f64 {
        use std::collections::HashMap;
        let mut map: HashMap<(usize, usize), f64> = HashMap::new();
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                map.insert((r, self.col_idx[k]), self.values[k]);
            }
        }
        let mut worst = 0.0f64;
        for (&(r, c), &v) in &map {
            let vt = map.get(&(c, r)).copied().unwrap_or(0.0);
            worst = worst.max((v - vt).abs());
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }
}

/// Reverse Cuthill-McKee ordering of the adjacency defined by the sparsity
/// pattern. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(n: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let deg = |v: usize| adj[v].len();
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.sort_by_key(|&v| deg(v));
    for &start in &nodes {
        if visited[start] {
            continue;
        }
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (deg(w), w));
            for w in nb {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Banded LU with partial pivoting (LAPACK-style band storage with `kl` extra
/// rows for fill). Factors once, then solves by substitution.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Column-major band storage: ab[(row_in_band, col)], with
    /// row_in_band = kl + ku + i - j for entry (i, j).
    ab: Vec<f64>,
    ldab: usize,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Factor a CSR matrix given its bandwidths.
    pub fn factor(a: &Csr, kl: usize, ku: usize) -> Result<Self, SolveError> {
        let n = a.n;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        let idx = |i: usize, j: usize| -> usize { (kl + ku + i - j) + j * ldab };
        for r in 0..n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let c = a.col_idx[k];
                ab[idx(r, c)] += a.values[k];
            }
        }
        let mut ipiv = vec![0usize; n];
        let scale = a.max_abs().max(1e-300);
        for j in 0..n {
            // Pivot search in column j over rows j..=min(j+kl, n-1).
            let imax = (j + kl).min(n - 1);
            let mut piv_row = j;
            let mut piv_val = 0.0f64;
            for i in j..=imax {
                let v = ab[idx(i, j)].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = i;
                }
            }
            if piv_val <= 1e-14 * scale {
                return Err(SolveError::Singular { row: j });
            }
            ipiv[j] = piv_row;
            if piv_row != j {
                // Swap rows j and piv_row within the band columns they touch.
                let jmax = (j + kl + ku).min(n - 1);
                for c in j..=jmax {
                    let a1 = idx(j, c);
                    let a2 = idx(piv_row, c);
                    ab.swap(a1, a2);
                }
            }
            let pivot = ab[idx(j, j)];
            for i in (j + 1)..=imax {
                let l = ab[idx(i, j)] / pivot;
                ab[idx(i, j)] = l;
                if l != 0.0 {
                    let jmax = (j + kl + ku).min(n - 1);
                    for c in (j + 1)..=jmax {
                        let u = ab[idx(j, c)];
                        if u != 0.0 {
                            ab[idx(i, c)] -= l * u;
                        }
                    }
                }
            }
        }
        Ok(Self { n, kl, ku, ab, ldab, ipiv })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let idx = |i: usize, j: usize| -> usize { (self.kl + self.ku + i - j) + j * self.ldab };
        let mut x = b.clone();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap_rows(j, p);
            }
            let imax = (j + self.kl).min(n - 1);
            let xj = x[j];
            if xj != 0.0 {
                for i in (j + 1)..=imax {
                    x[i] -= self.ab[idx(i, j)] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let jmax = (j + self.kl + self.ku).min(n - 1);
            let mut acc = x[j];
            for c in (j + 1)..=jmax {
                acc -= self.ab[idx(j, c)] * x[c];
            }
            x[j] = acc / self.ab[idx(j, j)];
        }
        x
    }
}

/// Plain conjugate gradients; the caller guarantees symmetry (checked) and
/// positive definiteness.
pub fn conjugate_gradients(
    a: &Csr,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize, f64), SolveError> {
    let asym = a.asymmetry();
    if asym > 1e-10 * a.max_abs().max(1e-300) {
        return Err(SolveError::CgOnNonsymmetric { asym });
    }
    let mut x = DVector::zeros(a.n);
    let mut r = b.clone();
    let mut p = r.clone();
    let bnorm = b.norm().max(1e-300);
    let mut rs = r.norm_squared();
    for it in 0..max_iter {
        if rs.sqrt() <= tol * bnorm {
            return Ok((x, it, rs.sqrt() / bnorm));
        }
        let ap = a.matvec(&p);
        let alpha = rs / p.dot(&ap);
        x += alpha * &p;
        r -= alpha * &ap;
        let rs_new = r.norm_squared();
        p = &r + (rs_new / rs) * p;
        rs = rs_new;
    }
    let res = rs.sqrt() / bnorm;
    if res <= tol {
        Ok((x, max_iter, res))
    } else {
        Err(SolveError::NoConvergence { residual: res, iters: max_iter })
    }
}

/// BiCGStab with an optional residual projection applied each iteration
/// (used to suppress null-space components in pure-Neumann solves).
pub fn bicgstab(
    a: &Csr,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    project: Option<&dyn Fn(&mut DVector<f64>)>,
) -> Result<(DVector<f64>, usize, f64), SolveError> {
    let n = a.n;
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    if let Some(p) = project {
        p(&mut r);
    }
    let r0 = r.clone();
    let bnorm = b.norm().max(1e-300);
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut v = DVector::zeros(n);
    let mut p = DVector::zeros(n);
    for it in 0..max_iter {
        let res = r.norm() / bnorm;
        if res <= tol {
            return Ok((x, it, res));
        }
        let rho_new = r0.dot(&r);
        if rho_new.abs() < 1e-300 {
            return Err(SolveError::NoConvergence { residual: res, iters: it });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        p = &r + beta * (&p - omega * &v);
        v = a.matvec(&p);
        if let Some(pr) = project {
            pr(&mut v);
        }
        alpha = rho_new / r0.dot(&v);
        let s = &r - alpha * &v;
        let mut t = a.matvec(&s);
        if let Some(pr) = project {
            pr(&mut t);
        }
        let tt = t.dot(&t);
        omega = if tt > 0.0 { t.dot(&s) / tt } else { 0.0 };
        x += alpha * &p + omega * &s;
        r = s - omega * t;
        rho = rho_new;
    }
    let res = r.norm() / bnorm;
    if res <= tol {
        Ok((x, max_iter, res))
    } else {
        Err(SolveError::NoConvergence { residual: res, iters: max_iter })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, band: usize, rng: &mut impl Rng) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(band)..(i + band + 1).min(n) {
                let v: f64 = rng.gen_range(-1.0..1.0);
                t.push((i, j, if i == j { v + 4.0 } else { v }));
            }
        }
        t
    }

    #[test]
    fn banded_lu_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40;
        let band = 3;
        let a = Csr::from_triplets(n, random_banded(n, band, &mut rng));
        let lu = BandedLu::factor(&a, band, band).unwrap();
        let b = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let x = lu.solve(&b);
        let dense = a.to_dense();
        let xd = dense.lu().solve(&b).unwrap();
        assert_relative_eq!((x - xd).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn csr_coalesces_duplicates() {
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0), (0, 1, 0.5)]);
        let d = a.to_dense();
        assert_relative_eq!(d[(0, 0)], 3.0);
        assert_relative_eq!(d[(0, 1)], 0.5);
        assert_relative_eq!(d[(1, 1)], 1.0);
    }

    #[test]
    fn cg_solves_spd_and_rejects_nonsymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        // SPD: A = B^T B + I built densely, then stored sparse.
        let bm = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let spd = bm.transpose() * &bm + DMatrix::identity(n, n);
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                trip.push((i, j, spd[(i, j)]));
            }
        }
        let a = Csr::from_triplets(n, trip);
        let b = DVector::from_fn(n, |i, _| (i as f64).cos());
        let (x, _, res) = conjugate_gradients(&a, &b, 1e-12, 10 * n).unwrap();
        assert!(res <= 1e-12);
        assert_relative_eq!((a.matvec(&x) - &b).norm() / b.norm(), 0.0, epsilon = 1e-10);

        let ns = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]);
        assert!(matches!(
            conjugate_gradients(&ns, &DVector::zeros(2), 1e-12, 10),
            Err(SolveError::CgOnNonsymmetric { .. })
        ));
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 50;
        let a = Csr::from_triplets(n, random_banded(n, 2, &mut rng));
        let b = DVector::from_fn(n, |i, _| 1.0 / (1.0 + i as f64));
        let (x, _, _) = bicgstab(&a, &b, 1e-12, 20 * n, None).unwrap();
        assert!((a.matvec(&x) - &b).norm() / b.norm() <= 1e-10);
    }

    #[test]
    fn rcm_reduces_bandwidth_on_a_grid() {
        // 2D grid graph numbered badly.
        let nx = 10;
        let n = nx * nx;
        let mut adj = vec![Vec::new(); n];
        // Scramble with a unit multiplier mod n so numbering is a bijection.
        let id = |i: usize, j: usize| ((i * nx + j) * 37 + 11) % n;
        let mut seen = std::collections::HashSet::new();
        for i in 0..nx {
            for j in 0..nx {
                assert!(seen.insert(id(i, j)), "grid scramble must be a bijection");
            }
        }
        for i in 0..nx {
            for j in 0..nx {
                let a = id(i, j);
                if i + 1 < nx {
                    let b = id(i + 1, j);
                    adj[a].push(b);
                    adj[b].push(a);
                }
                if j + 1 < nx {
                    let b = id(i, j + 1);
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        let perm = reverse_cuthill_mckee(n, &adj);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut band = 0usize;
        for v in 0..n {
            for &w in &adj[v] {
                band = band.max(inv[v].abs_diff(inv[w]));
            }
        }
        assert!(band <= 3 * nx, "bandwidth {band} too large");
    }
}
