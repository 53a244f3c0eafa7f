//! Dense symmetric eigendecomposition, eigenvalue counting, spectral
//! projectors, compressed-operator constants, and the spectral-averaging
//! inequality check.
//!
//! The eigensolver is a Householder tridiagonalization followed by implicit
//! QL with Wilkinson-style shifts. Any solver meeting the residual and
//! orthogonality invariants of [`SpectralDecomposition`] would do; this one
//! keeps the crate free of external linear-algebra backends and works for
//! every scalar type admitted by [`Real`].

use crate::error::{Error, Result};
use crate::measures::MeasureFamily;
use crate::{r, Real};

/// Hard cap on dense eigendecomposition size.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Open interval `(lo, hi)` on the energy axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<F: Real> {
    pub lo: F,
    pub hi: F,
}

impl<F: Real> Interval<F> {
    pub fn new(lo: F, hi: F) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument("interval endpoints must be finite".into()));
        }
        if lo > hi {
            return Err(Error::InvalidArgument(format!(
                "interval lower end {lo} exceeds upper end {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> F {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    /// Strict interior membership; endpoints are excluded.
    pub fn contains(&self, x: F) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn contains_closed(&self, x: F) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn shifted(&self, t: F) -> Self {
        Self { lo: self.lo + t, hi: self.hi + t }
    }
}

/// Real symmetric matrix with optional lattice-site labels on the basis.
#[derive(Debug, Clone)]
pub struct SymmetricOperator<F: Real> {
    n: usize,
    data: Vec<F>,
    labels: Vec<Vec<i64>>,
}

impl<F: Real> SymmetricOperator<F> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![F::zero(); n * n], labels: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::zeros(n);
        for i in 0..n {
            a.data[i * n + i] = F::one();
        }
        a
    }

    pub fn from_diagonal(diag: &[F]) -> Self {
        let mut a = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            a.data[i * diag.len() + i] = v;
        }
        a
    }

    /// Builds from a row-major dense buffer, rejecting asymmetric input.
    pub fn from_dense(n: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "dense buffer has {} entries, expected {}",
                data.len(),
                n * n
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvariantViolation("matrix has non-finite entries".into()));
        }
        Ok(Self { n, data, labels: Vec::new() })
    }

    pub fn with_labels(mut self, labels: Vec<Vec<i64>>) -> Self {
        assert_eq!(labels.len(), self.n, "one label per basis vector");
        self.labels = labels;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[Vec<i64>] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.n + j]
    }

    /// Sets `(i,j)` and `(j,i)` together, keeping exact symmetry.
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    #[inline]
    pub fn add_sym(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] = self.data[i * self.n + j];
        }
    }

    pub fn scale(&self, c: F) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| x * c).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn norm_max(&self) -> F {
        self.data.iter().fold(F::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![F::zero(); self.n];
        for i in 0..self.n {
            let mut acc = F::zero();
            let row = &self.data[i * self.n..(i + 1) * self.n];
            for (a, b) in row.iter().zip(x) {
                acc += *a * *b;
            }
            y[i] = acc;
        }
        y
    }

    pub fn quadratic_form(&self, x: &[F]) -> F {
        dot(&self.mul_vec(x), x)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvariantViolation("matrix has non-finite entries".into()));
        }
        Ok(())
    }
}

pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<F: Real>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<F: Real> {
    pub eigenvalues: Vec<F>,
    /// Row-major `n x n`; column `k` is the eigenvector of `eigenvalues[k]`.
    vectors: Vec<F>,
    n: usize,
}

impl<F: Real> SpectralDecomposition<F> {
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn vector_entry(&self, row: usize, k: usize) -> F {
        self.vectors[row * self.n + k]
    }

    pub fn eigenvector(&self, k: usize) -> Vec<F> {
        (0..self.n).map(|i| self.vector_entry(i, k)).collect()
    }

    /// `max |A v_k - lambda_k v_k|` over all entries and eigenpairs.
    pub fn residual_max(&self, a: &SymmetricOperator<F>) -> F {
        let mut worst = F::zero();
        for k in 0..self.n {
            let v = self.eigenvector(k);
            let av = a.mul_vec(&v);
            for i in 0..self.n {
                worst = worst.max((av[i] - self.eigenvalues[k] * v[i]).abs());
            }
        }
        worst
    }

    /// `max |V^T V - I|` over all entries.
    pub fn orthogonality_defect(&self) -> F {
        let mut worst = F::zero();
        for j in 0..self.n {
            let vj = self.eigenvector(j);
            for k in j..self.n {
                let vk = self.eigenvector(k);
                let d = dot(&vj, &vk) - if j == k { F::one() } else { F::zero() };
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    pub fn count_in(&self, interval: &Interval<F>) -> usize {
        self.eigenvalues.iter().filter(|&&x| interval.contains(x)).count()
    }

    /// Eigenvalues within `tol` of an interval endpoint; used for degeneracy
    /// warnings in reports.
    pub fn endpoint_degeneracies(&self, interval: &Interval<F>, tol: F) -> Vec<F> {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|&x| (x - interval.lo).abs() <= tol || (x - interval.hi).abs() <= tol)
            .collect()
    }

    /// Dense spectral projector onto eigenvalues strictly inside `interval`.
    pub fn projector(&self, interval: &Interval<F>) -> SymmetricOperator<F> {
        let cols: Vec<usize> = (0..self.n)
            .filter(|&k| interval.contains(self.eigenvalues[k]))
            .collect();
        let mut p = SymmetricOperator::zeros(self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let mut acc = F::zero();
                for &k in &cols {
                    acc += self.vector_entry(i, k) * self.vector_entry(j, k);
                }
                p.set_sym(i, j, acc);
            }
        }
        p
    }

    /// Diagonal of the spectral projector, cheaper than [`Self::projector`].
    pub fn projector_diagonal(&self, interval: &Interval<F>) -> Vec<F> {
        let cols: Vec<usize> = (0..self.n)
            .filter(|&k| interval.contains(self.eigenvalues[k]))
            .collect();
        (0..self.n)
            .map(|i| cols.iter().map(|&k| self.vector_entry(i, k).powi(2)).sum())
            .collect()
    }
}

/// Full symmetric eigendecomposition with the default dimension cap.
pub fn eigen_sym<F: Real>(a: &SymmetricOperator<F>) -> Result<SpectralDecomposition<F>> {
    eigen_sym_with_cap(a, DEFAULT_DIM_CAP)
}

pub fn eigen_sym_with_cap<F: Real>(
    a: &SymmetricOperator<F>,
    cap: usize,
) -> Result<SpectralDecomposition<F>> {
    if a.dim() > cap {
        return Err(Error::ResourceLimit(format!(
            "matrix dimension {} exceeds the eigensolver cap {}",
            a.dim(),
            cap
        )));
    }
    a.validate()?;
    let n = a.dim();
    if n == 0 {
        return Ok(SpectralDecomposition { eigenvalues: vec![], vectors: vec![], n });
    }
    let mut z = a.data.clone();
    let mut d = vec![F::zero(); n];
    let mut e = vec![F::zero(); n];
    householder_tridiag(&mut z, n, &mut d, &mut e);
    ql_implicit(&mut d, &mut e, &mut z, n)?;

    // Sort eigenpairs ascending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let eigenvalues: Vec<F> = order.iter().map(|&k| d[k]).collect();
    let mut vectors = vec![F::zero(); n * n];
    for (new_k, &old_k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + new_k] = z[i * n + old_k];
        }
    }
    Ok(SpectralDecomposition { eigenvalues, vectors, n })
}

/// Householder reduction to tridiagonal form with accumulation of the
/// orthogonal transform (EISPACK `tred2`). On exit `z` holds the transform,
/// `d` the diagonal and `e[1..]` the subdiagonal.
fn householder_tridiag<F: Real>(z: &mut [F], n: usize, d: &mut [F], e: &mut [F]) {
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = F::zero();
        if l > 0 {
            let mut scale = F::zero();
            for k in 0..=l {
                scale += z[i * n + k].abs();
            }
            if scale == F::zero() {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] = z[i * n + k] / scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let mut f = z[i * n + l];
                let g = if f >= F::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l] = f - g;
                f = F::zero();
                for j in 0..=l {
                    z[j * n + i] = z[i * n + j] / h;
                    let mut g = F::zero();
                    for k in 0..=j {
                        g += z[j * n + k] * z[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g / h;
                    f += e[j] * z[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] = z[j * n + k] - (f * e[k] + g * z[i * n + k]);
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    d[0] = F::zero();
    e[0] = F::zero();
    for i in 0..n {
        let l = i;
        if d[i] != F::zero() {
            for j in 0..l {
                let mut g = F::zero();
                for k in 0..l {
                    g += z[i * n + k] * z[k * n + j];
                }
                for k in 0..l {
                    z[k * n + j] = z[k * n + j] - g * z[k * n + i];
                }
            }
        }
        d[i] = z[i * n + i];
        z[i * n + i] = F::one();
        for j in 0..l {
            z[j * n + i] = F::zero();
            z[i * n + j] = F::zero();
        }
    }
}

/// Implicit-shift QL sweeps on the tridiagonal (`d`, `e`) with eigenvector
/// accumulation in `z` (EISPACK `tql2`).
fn ql_implicit<F: Real>(d: &mut [F], e: &mut [F], z: &mut [F], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = F::zero();
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= F::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::InvariantViolation(
                    "QL iteration failed to converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (r::<F>(2.0) * e[l]);
            let mut rr = g.hypot(F::one());
            g = d[m] - d[l] + e[l] / (g + sign_of(rr, g));
            let mut s = F::one();
            let mut c = F::one();
            let mut p = F::zero();
            let mut i = m;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                rr = f.hypot(g);
                e[i + 1] = rr;
                if rr == F::zero() {
                    d[i + 1] -= p;
                    e[m] = F::zero();
                    break;
                }
                s = f / rr;
                c = g / rr;
                g = d[i + 1] - p;
                let t = (d[i] - g) * s + r::<F>(2.0) * c * b;
                p = s * t;
                d[i + 1] = g + p;
                g = c * t - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if rr == F::zero() && i > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = F::zero();
        }
    }
    Ok(())
}

#[inline]
fn sign_of<F: Real>(a: F, b: F) -> F {
    if b >= F::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Number of eigenvalues strictly inside the open interval; equals
/// `tr chi_I(A)` for the decomposed operator.
pub fn count_in_interval<F: Real>(dec: &SpectralDecomposition<F>, interval: &Interval<F>) -> usize {
    dec.count_in(interval)
}

/// Smallest eigenvalue of `P W P` restricted to `range(P)` with
/// `P = chi_I(A)`. Returns `+inf` when the projection is trivial, so the
/// uncertainty condition is vacuous.
pub fn uncertainty_gamma<F: Real>(
    a: &SymmetricOperator<F>,
    interval: &Interval<F>,
    w: &SymmetricOperator<F>,
) -> Result<F> {
    let dec = eigen_sym(a)?;
    uncertainty_gamma_dec(&dec, interval, w)
}

pub fn uncertainty_gamma_dec<F: Real>(
    dec: &SpectralDecomposition<F>,
    interval: &Interval<F>,
    w: &SymmetricOperator<F>,
) -> Result<F> {
    if w.dim() != dec.dim() {
        return Err(Error::InvalidArgument(format!(
            "W has dimension {}, operator has {}",
            w.dim(),
            dec.dim()
        )));
    }
    let cols: Vec<usize> = (0..dec.dim())
        .filter(|&k| interval.contains(dec.eigenvalues[k]))
        .collect();
    if cols.is_empty() {
        return Ok(F::infinity());
    }
    let m = cols.len();
    // Compressed operator V_I^T W V_I.
    let mut comp = SymmetricOperator::zeros(m);
    for (a_idx, &ka) in cols.iter().enumerate() {
        let va = dec.eigenvector(ka);
        let wva = w.mul_vec(&va);
        for (b_idx, &kb) in cols.iter().enumerate().skip(a_idx) {
            let vb = dec.eigenvector(kb);
            comp.set_sym(a_idx, b_idx, dot(&wva, &vb));
        }
    }
    let cdec = eigen_sym(&comp)?;
    Ok(cdec.eigenvalues[0])
}

/// Both sides of the local trace decomposition
/// `tr chi_I <= gamma^-2 C_fin sum_j sum_alpha <U_a chi_I U_a e_j, e_j>`
/// for one realization, with diagonal single-site parts.
#[derive(Debug, Clone)]
pub struct LocalTraceReport<F: Real> {
    pub lhs: F,
    pub rhs: F,
    pub c_fin: usize,
    pub j_eff: usize,
    pub pass: bool,
}

pub fn local_trace_check<F: Real>(
    dec: &SpectralDecomposition<F>,
    parts: &[Vec<F>],
    interval: &Interval<F>,
    gamma: F,
) -> Result<LocalTraceReport<F>> {
    let n = dec.dim();
    for p in parts {
        if p.len() != n {
            return Err(Error::InvalidArgument("part diagonal has wrong length".into()));
        }
    }
    let count = dec.count_in(interval);
    if gamma <= F::zero() {
        if count > 0 {
            return Err(Error::HypothesisFailed(
                "gamma <= 0 with a nonempty spectral projection".into(),
            ));
        }
        return Ok(LocalTraceReport { lhs: F::zero(), rhs: F::zero(), c_fin: 0, j_eff: 0, pass: true });
    }
    let pdiag = dec.projector_diagonal(interval);
    let mut c_fin = 0usize;
    let mut j_eff = 0usize;
    let mut sum = F::zero();
    for j in 0..n {
        let mut overlap = 0usize;
        let mut local = F::zero();
        for p in parts {
            if p[j] != F::zero() {
                overlap += 1;
                local += p[j] * p[j];
            }
        }
        if overlap > 0 {
            j_eff += 1;
            c_fin = c_fin.max(overlap);
            sum += local * pdiag[j];
        }
    }
    let lhs = F::from_usize(count).unwrap();
    let rhs = F::from_usize(c_fin).unwrap() / (gamma * gamma) * sum;
    let tol = r::<F>(1e-8);
    let pass = lhs <= rhs + tol * (F::one() + rhs);
    Ok(LocalTraceReport { lhs, rhs, c_fin, j_eff, pass })
}

/// Outcome of the spectral-averaging inequality check
/// `int <B^{1/2} chi_I(A+tB) B^{1/2} phi, phi> dmu(t) <= 6 |B| |phi|^2 s(mu,|I|)`.
#[derive(Debug, Clone)]
pub struct SpectralAveragingReport<F: Real> {
    pub lhs: F,
    pub rhs: F,
    pub quadrature_error: F,
    pub crossings: usize,
    pub pass: bool,
}

/// Checks the spectral-averaging bound for one draw `(A, B, phi, I, mu)`.
///
/// The integrand `t -> <chi_I(A+tB) psi, psi>` with `psi = B^{1/2} phi` is
/// analytic except where an eigenvalue branch of `A+tB` crosses an endpoint
/// of `I`; branches are nondecreasing in `t` because `B >= 0`, so the
/// crossing times are jump points of a monotone counting function and are
/// located by recursive bisection. Between crossings the integral against
/// the density of `mu` is evaluated by adaptive Simpson quadrature with the
/// usual `|S_fine - S_coarse|/15` error estimate; atoms of `mu` are summed
/// exactly.
pub fn spectral_averaging_check<F: Real>(
    a: &SymmetricOperator<F>,
    b: &SymmetricOperator<F>,
    phi: &[F],
    interval: &Interval<F>,
    mu: &MeasureFamily<F>,
    quad_points: usize,
) -> Result<SpectralAveragingReport<F>> {
    if b.dim() != a.dim() || phi.len() != a.dim() {
        return Err(Error::InvalidArgument("A, B and phi must share one dimension".into()));
    }
    mu.validate()?;
    let bdec = eigen_sym(b)?;
    let neg_tol = r::<F>(-1e-10);
    if bdec.eigenvalues.iter().any(|&x| x < neg_tol) {
        return Err(Error::InvalidArgument(format!(
            "B has a negative eigenvalue {} below -1e-10",
            bdec.eigenvalues[0]
        )));
    }
    let n = a.dim();
    let bnorm = bdec.eigenvalues.last().copied().unwrap_or(F::zero()).max(F::zero());
    let phi_norm2 = dot(phi, phi);
    let s_mu = mu.sup_interval_mass(interval.len().max(F::min_positive_value()))?;
    let s_mu = if interval.len() > F::zero() { s_mu } else { F::zero() };
    let rhs = r::<F>(6.0) * bnorm * phi_norm2 * s_mu;

    if bnorm == F::zero() {
        return Ok(SpectralAveragingReport {
            lhs: F::zero(),
            rhs,
            quadrature_error: F::zero(),
            crossings: 0,
            pass: true,
        });
    }

    // psi = B^{1/2} phi via the eigendecomposition of B.
    let mut psi = vec![F::zero(); n];
    for k in 0..n {
        let lam = bdec.eigenvalues[k].max(F::zero());
        let vk = bdec.eigenvector(k);
        let coef = lam.sqrt() * dot(&vk, phi);
        for i in 0..n {
            psi[i] += coef * vk[i];
        }
    }

    let g = |t: F| -> F {
        let at = a.add(&b.scale(t));
        let dec = eigen_sym(&at).expect("eigensolve inside spectral averaging");
        let mut acc = F::zero();
        for k in 0..n {
            if interval.contains(dec.eigenvalues[k]) {
                let vk = dec.eigenvector(k);
                let c = dot(&vk, &psi);
                acc += c * c;
            }
        }
        acc
    };

    let (t0, t1) = mu.support();

    // Atomic measures integrate exactly.
    if let Some(atoms) = mu.atoms() {
        let lhs: F = atoms.iter().map(|&(p, w)| w * g(p)).sum();
        let tol = r::<F>(1e-12);
        return Ok(SpectralAveragingReport {
            lhs,
            rhs,
            quadrature_error: F::zero(),
            crossings: 0,
            pass: lhs <= rhs + tol * (F::one() + rhs),
        });
    }

    // Jump points of t -> #{lambda_j(A+tB) < E} for both endpoints of I.
    let count_below = |t: F, level: F| -> usize {
        let at = a.add(&b.scale(t));
        let dec = eigen_sym(&at).expect("eigensolve inside spectral averaging");
        dec.eigenvalues.iter().filter(|&&x| x < level).count()
    };
    let t_tol = (t1 - t0).max(F::one()) * r::<F>(1e-12);
    let mut cuts: Vec<F> = Vec::new();
    for level in [interval.lo, interval.hi] {
        locate_jumps(&|t| count_below(t, level), t0, t1, t_tol, &mut cuts, 0);
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() <= t_tol);
    let crossings = cuts.len();

    let mut nodes = vec![t0];
    nodes.extend(cuts.iter().copied().filter(|&c| c > t0 && c < t1));
    nodes.push(t1);

    let density = |t: F| mu.density_at(t);
    let mut lhs = F::zero();
    let mut err = F::zero();
    let seg_tol = r::<F>(1e-10) * (F::one() + bnorm * phi_norm2);
    let mut budget = quad_points.max(64);
    for w in nodes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi - lo <= t_tol {
            // Sliver between near-coincident crossings: bound its mass.
            err += mu.density_bound().unwrap_or(F::zero()) * (hi - lo) * phi_norm2 * bnorm;
            continue;
        }
        let f = |t: F| g(t) * density(t);
        let (v, e) = adaptive_simpson(&f, lo, hi, seg_tol, &mut budget);
        lhs += v;
        err += e;
    }
    // Crossing-location slack: each cut is known to within t_tol.
    let dbound = mu.density_bound().unwrap_or(F::zero());
    err += F::from_usize(crossings).unwrap() * t_tol * dbound * phi_norm2 * bnorm;

    let tol = r::<F>(1e-12);
    let pass = lhs <= rhs + err + tol * (F::one() + rhs);
    Ok(SpectralAveragingReport { lhs, rhs, quadrature_error: err, crossings, pass })
}

/// Records every jump location of a monotone integer-valued function on
/// `[lo, hi]` to within `tol`.
fn locate_jumps<F: Real>(
    f: &dyn Fn(F) -> usize,
    lo: F,
    hi: F,
    tol: F,
    out: &mut Vec<F>,
    depth: usize,
) {
    let (nlo, nhi) = (f(lo), f(hi));
    jump_rec(f, lo, hi, nlo, nhi, tol, out, depth);
}

#[allow(clippy::too_many_arguments)]
fn jump_rec<F: Real>(
    f: &dyn Fn(F) -> usize,
    lo: F,
    hi: F,
    nlo: usize,
    nhi: usize,
    tol: F,
    out: &mut Vec<F>,
    depth: usize,
) {
    if nlo == nhi {
        return;
    }
    if hi - lo <= tol || depth > 60 {
        out.push((lo + hi) / r::<F>(2.0));
        return;
    }
    let mid = (lo + hi) / r::<F>(2.0);
    let nmid = f(mid);
    jump_rec(f, lo, mid, nlo, nmid, tol, out, depth + 1);
    jump_rec(f, mid, hi, nmid, nhi, tol, out, depth + 1);
}

/// Adaptive Simpson with an explicit error estimate; `budget` caps the
/// number of function evaluations and leftover discrepancies are charged to
/// the returned error term instead of being silently dropped.
fn adaptive_simpson<F: Real>(
    f: &dyn Fn(F) -> F,
    lo: F,
    hi: F,
    tol: F,
    budget: &mut usize,
) -> (F, F) {
    let mid = (lo + hi) / r::<F>(2.0);
    let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
    let whole = simpson(lo, hi, flo, fmid, fhi);
    simpson_rec(f, lo, hi, flo, fmid, fhi, whole, tol, budget, 0)
}

fn simpson<F: Real>(lo: F, hi: F, flo: F, fmid: F, fhi: F) -> F {
    (hi - lo) / r::<F>(6.0) * (flo + r::<F>(4.0) * fmid + fhi)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Real>(
    f: &dyn Fn(F) -> F,
    lo: F,
    hi: F,
    flo: F,
    fmid: F,
    fhi: F,
    whole: F,
    tol: F,
    budget: &mut usize,
    depth: usize,
) -> (F, F) {
    let mid = (lo + hi) / r::<F>(2.0);
    let lm = (lo + mid) / r::<F>(2.0);
    let rm = (mid + hi) / r::<F>(2.0);
    let (flm, frm) = (f(lm), f(rm));
    *budget = budget.saturating_sub(2);
    let left = simpson(lo, mid, flo, flm, fmid);
    let right = simpson(mid, hi, fmid, frm, fhi);
    let delta = (left + right - whole).abs();
    if delta <= r::<F>(15.0) * tol || depth >= 40 || *budget == 0 {
        return (left + right, delta / r::<F>(15.0));
    }
    let half_tol = tol / r::<F>(2.0);
    let (v1, e1) = simpson_rec(f, lo, mid, flo, flm, fmid, left, half_tol, budget, depth + 1);
    let (v2, e2) = simpson_rec(f, mid, hi, fmid, frm, fhi, right, half_tol, budget, depth + 1);
    (v1 + v2, e1 + e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MeasureFamily;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_sym(n: usize, rng: &mut StdRng) -> SymmetricOperator<f64> {
        let mut a = SymmetricOperator::zeros(n);
        for i in 0..n {
            for j in i..n {
                a.set_sym(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        a
    }

    #[test]
    fn eigen_2x2_offdiag() {
        let mut a = SymmetricOperator::zeros(2);
        a.set_sym(0, 1, 1.0);
        let dec = eigen_sym(&a).unwrap();
        assert!((dec.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((dec.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_identity_dim5() {
        let a = SymmetricOperator::<f64>::identity(5);
        let dec = eigen_sym(&a).unwrap();
        for &l in &dec.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eigen_free_laplacian_3_sites() {
        // Simple boundary conditions on 3 sites: diag 2, offdiag -1.
        let mut a = SymmetricOperator::zeros(3);
        for i in 0..3 {
            a.set_sym(i, i, 2.0);
        }
        a.set_sym(0, 1, -1.0);
        a.set_sym(1, 2, -1.0);
        let dec = eigen_sym(&a).unwrap();
        let s = 2.0f64.sqrt();
        let expect = [2.0 - s, 2.0, 2.0 + s];
        for (got, want) in dec.eigenvalues.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn eigen_meets_invariants_on_random_matrices() {
        let mut rng = StdRng::seed_from_u64(7);
        for &n in &[1usize, 2, 3, 5, 8, 13, 33, 64] {
            let a = random_sym(n, &mut rng);
            let dec = eigen_sym(&a).unwrap();
            let scale = a.norm_max().max(1.0);
            assert!(dec.residual_max(&a) <= 1e-9 * scale, "residual at n={n}");
            assert!(dec.orthogonality_defect() <= 1e-10, "orthogonality at n={n}");
        }
    }

    #[test]
    fn eigen_dimension_cap() {
        let a = SymmetricOperator::<f64>::identity(9);
        let err = eigen_sym_with_cap(&a, 8).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit(_)));
    }

    #[test]
    fn count_in_interval_cases() {
        let mut a = SymmetricOperator::zeros(3);
        for i in 0..3 {
            a.set_sym(i, i, 2.0);
        }
        a.set_sym(0, 1, -1.0);
        a.set_sym(1, 2, -1.0);
        let dec = eigen_sym(&a).unwrap();
        let all = Interval::new(-10.0, 10.0).unwrap();
        assert_eq!(count_in_interval(&dec, &all), 3);
        let none = Interval::new(5.0, 6.0).unwrap();
        assert_eq!(count_in_interval(&dec, &none), 0);
        let mid = Interval::new(1.9, 2.1).unwrap();
        assert_eq!(count_in_interval(&dec, &mid), 1);
        let empty = Interval::new(2.0, 2.0).unwrap();
        assert_eq!(count_in_interval(&dec, &empty), 0);
    }

    #[test]
    fn projector_is_idempotent() {
        let mut rng = StdRng::seed_from_u64(3);
        let a = random_sym(12, &mut rng);
        let dec = eigen_sym(&a).unwrap();
        let i = Interval::new(-0.5, 0.5).unwrap();
        let p = dec.projector(&i);
        let mut defect = 0.0f64;
        for row in 0..12 {
            let pr: Vec<f64> = (0..12).map(|c| p.get(row, c)).collect();
            let ppr = p.mul_vec(&pr);
            for c in 0..12 {
                defect = defect.max((ppr[c] - p.get(row, c)).abs());
            }
        }
        assert!(defect <= 1e-10, "P^2 - P defect {defect}");
    }

    #[test]
    fn uncertainty_gamma_identity_and_scaling() {
        let mut rng = StdRng::seed_from_u64(11);
        let a = random_sym(10, &mut rng);
        let i = Interval::new(-0.8, 0.8).unwrap();
        let w = SymmetricOperator::identity(10);
        let g = uncertainty_gamma(&a, &i, &w).unwrap();
        assert!((g - 1.0).abs() < 1e-10, "identity compression gives 1, got {g}");

        let w2 = random_sym(10, &mut rng);
        let g1 = uncertainty_gamma(&a, &i, &w2).unwrap();
        let g3 = uncertainty_gamma(&a, &i, &w2.scale(3.0)).unwrap();
        assert!((g3 - 3.0 * g1).abs() < 1e-9 * (1.0 + g1.abs()));
    }

    #[test]
    fn uncertainty_gamma_empty_projection_is_infinite() {
        let a = SymmetricOperator::<f64>::identity(4);
        let i = Interval::new(10.0, 11.0).unwrap();
        let w = SymmetricOperator::identity(4);
        assert!(uncertainty_gamma(&a, &i, &w).unwrap().is_infinite());
    }

    #[test]
    fn local_trace_identity_decomposition_is_tight() {
        let mut rng = StdRng::seed_from_u64(5);
        let a = random_sym(8, &mut rng);
        let dec = eigen_sym(&a).unwrap();
        let i = Interval::new(-0.5, 0.9).unwrap();
        // U_j = rank-one diagonal units summing to the identity.
        let parts: Vec<Vec<f64>> = (0..8)
            .map(|j| (0..8).map(|k| if k == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let rep = local_trace_check(&dec, &parts, &i, 1.0).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.c_fin, 1);
        assert!((rep.lhs - rep.rhs).abs() < 1e-9, "identity case is an equality");
    }

    #[test]
    fn local_trace_empty_projection() {
        let a = SymmetricOperator::<f64>::identity(4);
        let dec = eigen_sym(&a).unwrap();
        let i = Interval::new(30.0, 31.0).unwrap();
        let parts = vec![vec![1.0; 4]];
        let rep = local_trace_check(&dec, &parts, &i, 1.0).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn spectral_averaging_scalar_case_is_exact() {
        // A=[0], B=[1], phi=[1], I=(0,eps), mu=uniform(0,1): lhs = eps, rhs = 6 eps.
        let a = SymmetricOperator::zeros(1);
        let b = SymmetricOperator::identity(1);
        let eps = 0.05;
        let i = Interval::new(0.0, eps).unwrap();
        let mu = MeasureFamily::uniform(0.0, 1.0).unwrap();
        let rep = spectral_averaging_check(&a, &b, &[1.0], &i, &mu, 4096).unwrap();
        assert!((rep.lhs - eps).abs() <= 1e-9 + rep.quadrature_error, "lhs {}", rep.lhs);
        assert!((rep.rhs - 6.0 * eps).abs() < 1e-12);
        assert!(rep.pass);
    }

    #[test]
    fn spectral_averaging_zero_b() {
        let a = SymmetricOperator::<f64>::identity(3);
        let b = SymmetricOperator::zeros(3);
        let i = Interval::new(0.0, 1.0).unwrap();
        let mu = MeasureFamily::uniform(0.0, 1.0).unwrap();
        let rep = spectral_averaging_check(&a, &b, &[1.0, 0.0, 0.0], &i, &mu, 128).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert_eq!(rep.rhs, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn spectral_averaging_rejects_indefinite_b() {
        let a = SymmetricOperator::<f64>::zeros(2);
        let mut b = SymmetricOperator::zeros(2);
        b.set_sym(0, 0, -1.0);
        b.set_sym(1, 1, 1.0);
        let i = Interval::new(0.0, 1.0).unwrap();
        let mu = MeasureFamily::uniform(0.0, 1.0).unwrap();
        let err = spectral_averaging_check(&a, &b, &[1.0, 0.0], &i, &mu, 128).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn spectral_averaging_matches_riemann_oracle() {
        // Dense t-grid Riemann sum as an independent oracle for one draw.
        let mut rng = StdRng::seed_from_u64(42);
        let n = 12;
        let a = random_sym(n, &mut rng);
        // PSD B of rank 3.
        let mut b = SymmetricOperator::zeros(n);
        for _ in 0..3 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for i in 0..n {
                for j in i..n {
                    b.add_sym(i, j, v[i] * v[j] * 0.3);
                }
            }
        }
        let mut phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nrm = norm2(&phi);
        phi.iter_mut().for_each(|x| *x /= nrm);
        let i = Interval::new(0.0, 0.2).unwrap();
        let mu = MeasureFamily::uniform(0.0, 1.0).unwrap();
        let rep = spectral_averaging_check(&a, &b, &phi, &i, &mu, 1 << 16).unwrap();

        let bdec = eigen_sym(&b).unwrap();
        let mut psi = vec![0.0; n];
        for k in 0..n {
            let lam = bdec.eigenvalues[k].max(0.0);
            let vk = bdec.eigenvector(k);
            let c = lam.sqrt() * dot(&vk, &phi);
            for t in 0..n {
                psi[t] += c * vk[t];
            }
        }
        let m = 100_000usize;
        let mut acc = 0.0;
        for s in 0..m {
            let t = (s as f64 + 0.5) / m as f64;
            let at = a.add(&b.scale(t));
            let dec = eigen_sym(&at).unwrap();
            for k in 0..n {
                if i.contains(dec.eigenvalues[k]) {
                    let c = dot(&dec.eigenvector(k), &psi);
                    acc += c * c;
                }
            }
        }
        let riemann = acc / m as f64;
        assert!(
            (rep.lhs - riemann).abs() < 1e-3,
            "adaptive {} vs riemann {}",
            rep.lhs,
            riemann
        );
        assert!(rep.pass);
    }
}
