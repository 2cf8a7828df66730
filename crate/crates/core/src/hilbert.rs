//! Spaces, tagged operators, tensor products, partial traces and unitary
//! exponentials.
//!
//! Full-space matrices use the flat index `i · d_B + α` for `|i α⟩`.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Hermiticity tolerance, relative to the Frobenius norm.
pub const TAU_HERM: f64 = 1e-10;
/// Trace tolerance for density matrices.
pub const TAU_TRACE: f64 = 1e-10;
/// Allowed negative eigenvalue magnitude for density matrices.
pub const TAU_PSD: f64 = 1e-10;
/// Unitarity tolerance for propagators.
pub const TAU_UNIT: f64 = 1e-9;

pub(crate) const I: C64 = C64::new(0.0, 1.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

#[inline]
pub(crate) fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// System and bath dimensions shared by every operator of one model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub system: usize,
    pub bath: usize,
}

impl Dims {
    pub fn new(system: usize, bath: usize) -> Result<Self> {
        if system == 0 || bath == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got d_S = {system}, d_B = {bath}"
            )));
        }
        Ok(Self { system, bath })
    }

    pub fn full(&self) -> usize {
        self.system * self.bath
    }

    /// Flat full-space index of `|i α⟩`.
    #[inline]
    pub fn flat(&self, i: usize, alpha: usize) -> usize {
        i * self.bath + alpha
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceKind {
    System,
    Bath,
    Full,
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceKind::System => f.write_str("system"),
            SpaceKind::Bath => f.write_str("bath"),
            SpaceKind::Full => f.write_str("full"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceTag {
    pub kind: SpaceKind,
    pub dims: Dims,
}

impl SpaceTag {
    pub fn new(kind: SpaceKind, dims: Dims) -> Self {
        Self { kind, dims }
    }

    /// Side length of matrices living on this space.
    pub fn side(&self) -> usize {
        match self.kind {
            SpaceKind::System => self.dims.system,
            SpaceKind::Bath => self.dims.bath,
            SpaceKind::Full => self.dims.full(),
        }
    }
}

impl fmt::Display for SpaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[d_S={}, d_B={}]",
            self.kind, self.dims.system, self.dims.bath
        )
    }
}

/// Dense complex square matrix tagged with the space it acts on.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: CMatrix,
    tag: SpaceTag,
}

impl Operator {
    pub fn new(mat: CMatrix, tag: SpaceTag) -> Result<Self> {
        let side = tag.side();
        if mat.nrows() != side || mat.ncols() != side {
            return Err(Error::dim(
                "Operator::new",
                format!("{side}x{side} for {tag}"),
                format!("{}x{}", mat.nrows(), mat.ncols()),
            ));
        }
        Ok(Self { mat, tag })
    }

    pub fn system(mat: CMatrix, dims: Dims) -> Result<Self> {
        Self::new(mat, SpaceTag::new(SpaceKind::System, dims))
    }

    pub fn bath(mat: CMatrix, dims: Dims) -> Result<Self> {
        Self::new(mat, SpaceTag::new(SpaceKind::Bath, dims))
    }

    pub fn full(mat: CMatrix, dims: Dims) -> Result<Self> {
        Self::new(mat, SpaceTag::new(SpaceKind::Full, dims))
    }

    pub fn identity(kind: SpaceKind, dims: Dims) -> Self {
        let tag = SpaceTag::new(kind, dims);
        let n = tag.side();
        Self {
            mat: CMatrix::identity(n, n),
            tag,
        }
    }

    pub fn zeros(kind: SpaceKind, dims: Dims) -> Self {
        let tag = SpaceTag::new(kind, dims);
        let n = tag.side();
        Self {
            mat: CMatrix::zeros(n, n),
            tag,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn tag(&self) -> SpaceTag {
        self.tag
    }

    pub fn kind(&self) -> SpaceKind {
        self.tag.kind
    }

    pub fn dims(&self) -> Dims {
        self.tag.dims
    }

    pub fn dagger(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
            tag: self.tag,
        }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            mat: &self.mat * c,
            tag: self.tag,
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        is_hermitian(&self.mat, tol)
    }

    /// Product `self · other`; both operators must share a tag.
    pub fn mul(&self, other: &Operator) -> Result<Self> {
        same_tag("Operator::mul", self, other)?;
        Ok(Self {
            mat: &self.mat * &other.mat,
            tag: self.tag,
        })
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        same_tag("Operator::add", self, other)?;
        Ok(Self {
            mat: &self.mat + &other.mat,
            tag: self.tag,
        })
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        same_tag("Operator::sub", self, other)?;
        Ok(Self {
            mat: &self.mat - &other.mat,
            tag: self.tag,
        })
    }

    pub(crate) fn require(&self, kind: SpaceKind, context: &'static str) -> Result<()> {
        if self.tag.kind != kind {
            return Err(Error::dim(context, kind, self.tag.kind));
        }
        Ok(())
    }
}

fn same_tag(context: &'static str, a: &Operator, b: &Operator) -> Result<()> {
    if a.tag != b.tag {
        return Err(Error::dim(context, a.tag, b.tag));
    }
    Ok(())
}

pub(crate) fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let defect = (m - m.adjoint()).norm();
    defect <= tol * m.norm().max(f64::MIN_POSITIVE)
}

/// Fails with [`Error::NonHermitian`] unless `‖m − m†‖ ≤ τ‖m‖`.
pub fn require_hermitian(m: &CMatrix, what: &str) -> Result<()> {
    if !is_hermitian(m, TAU_HERM) {
        let defect = (m - m.adjoint()).norm();
        return Err(Error::NonHermitian(format!(
            "{what}: ‖A − A†‖ = {defect:.3e}"
        )));
    }
    Ok(())
}

pub(crate) fn commutator_raw(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub(crate) fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Physical constants of a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub hbar: f64,
    pub lambda: f64,
}

impl Constants {
    pub fn new(hbar: f64, lambda: f64) -> Result<Self> {
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::InvalidArgument(format!("ħ must be positive, got {hbar}")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("λ must be finite, got {lambda}")));
        }
        Ok(Self { hbar, lambda })
    }
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            lambda: 0.0,
        }
    }
}

/// Hermitian, positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        let m = op.matrix();
        let scale = m.norm().max(1.0);
        if (m - m.adjoint()).norm() > TAU_HERM * scale {
            return Err(Error::InvalidDensityMatrix("not hermitian".into()));
        }
        let tr = m.trace();
        if (tr - ONE).norm() > TAU_TRACE * scale {
            return Err(Error::InvalidDensityMatrix(format!("trace is {tr}, expected 1")));
        }
        let eig = HermitianEigen::new(m)?;
        if let Some(&min) = eig.values.first() {
            if min < -TAU_PSD * scale {
                return Err(Error::InvalidDensityMatrix(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(Self { op })
    }

    /// Maximally mixed state on the given space.
    pub fn maximally_mixed(kind: SpaceKind, dims: Dims) -> Self {
        let id = Operator::identity(kind, dims);
        let n = id.tag().side() as f64;
        Self {
            op: id.scale(re(1.0 / n)),
        }
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn kind(&self) -> SpaceKind {
        self.op.kind()
    }

    pub fn dims(&self) -> Dims {
        self.op.dims()
    }
}

/// Eigendecomposition of a hermitian matrix with a deterministic basis:
/// eigenvalues ascending, eigenvector phases fixed so the first significant
/// component is real positive, degenerate vectors ordered lexicographically.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(m: &CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dim(
                "HermitianEigen::new",
                "square matrix",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        require_hermitian(m, "eigendecomposition input")?;
        let n = m.nrows();
        if n == 0 {
            return Ok(Self {
                values: Vec::new(),
                vectors: CMatrix::zeros(0, 0),
            });
        }
        let sym = (m + m.adjoint()) * re(0.5);
        let eig = SymmetricEigen::new(sym);
        let mut cols: Vec<(f64, Vec<C64>)> = (0..n)
            .map(|k| {
                let mut v: Vec<C64> = eig.eigenvectors.column(k).iter().copied().collect();
                fix_phase(&mut v);
                (eig.eigenvalues[k], v)
            })
            .collect();
        cols.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Lexicographic order inside groups of (numerically) equal eigenvalues.
        let scale = cols.iter().fold(0.0_f64, |acc, c| acc.max(c.0.abs())).max(1.0);
        let tie = 1e-12 * scale;
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && (cols[end].0 - cols[end - 1].0).abs() <= tie {
                end += 1;
            }
            if end - start > 1 {
                cols[start..end].sort_by(|a, b| lex_cmp(&a.1, &b.1));
            }
            start = end;
        }

        let values = cols.iter().map(|c| c.0).collect();
        let vectors = CMatrix::from_fn(n, n, |i, k| cols[k].1[i]);
        Ok(Self { values, vectors })
    }

    /// `V · diag(f(ε)) · V†`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let fk = f(self.values[k]);
            for i in 0..n {
                scaled[(i, k)] *= fk;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// `exp(−i h t / ħ)`.
    pub fn propagator(&self, t: f64, hbar: f64) -> CMatrix {
        self.map(|e| (-I * (e * t / hbar)).exp())
    }
}

fn fix_phase(v: &mut [C64]) {
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let thresh = 1e-8 * norm.max(f64::MIN_POSITIVE);
    if let Some(pivot) = v.iter().find(|z| z.norm() > thresh).copied() {
        let phase = pivot.conj() / pivot.norm();
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

fn lex_cmp(a: &[C64], b: &[C64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        // Larger leading components first, so the order is stable under
        // round-off in near-zero entries.
        let ord = y
            .re
            .total_cmp(&x.re)
            .then_with(|| y.im.total_cmp(&x.im));
        if (x.re - y.re).abs() > 1e-10 || (x.im - y.im).abs() > 1e-10 {
            return ord;
        }
    }
    Ordering::Equal
}

/// `a ⊗ b` with `a` on the system and `b` on the bath.
pub fn tensor_product(a: &Operator, b: &Operator) -> Result<Operator> {
    a.require(SpaceKind::System, "tensor_product (left factor)")?;
    b.require(SpaceKind::Bath, "tensor_product (right factor)")?;
    if a.dims() != b.dims() {
        return Err(Error::dim(
            "tensor_product",
            format!("{:?}", a.dims()),
            format!("{:?}", b.dims()),
        ));
    }
    Operator::full(kron(a.matrix(), b.matrix()), a.dims())
}

/// Unweighted partial trace over the bath: `result[i,j] = Σ_α x[(i,α),(j,α)]`.
pub fn partial_trace_bath(x: &Operator) -> Result<Operator> {
    x.require(SpaceKind::Full, "partial_trace_bath")?;
    let d = x.dims();
    let m = x.matrix();
    let out = CMatrix::from_fn(d.system, d.system, |i, j| {
        (0..d.bath).map(|a| m[(d.flat(i, a), d.flat(j, a))]).sum()
    });
    Operator::system(out, d)
}

/// `tr_B{x · (𝟙_S ⊗ ρ_B)}`.
pub fn weighted_bath_trace(x: &Operator, rho_b: &DensityMatrix) -> Result<Operator> {
    x.require(SpaceKind::Full, "weighted_bath_trace")?;
    if rho_b.kind() != SpaceKind::Bath {
        return Err(Error::InvalidDensityMatrix(format!(
            "expected a bath state, got a {} state",
            rho_b.kind()
        )));
    }
    let d = x.dims();
    if rho_b.dims() != d {
        return Err(Error::dim(
            "weighted_bath_trace",
            format!("{d:?}"),
            format!("{:?}", rho_b.dims()),
        ));
    }
    let m = x.matrix();
    let rho = rho_b.matrix();
    let out = CMatrix::from_fn(d.system, d.system, |i, j| {
        let mut acc = ZERO;
        for a in 0..d.bath {
            for b in 0..d.bath {
                acc += m[(d.flat(i, a), d.flat(j, b))] * rho[(b, a)];
            }
        }
        acc
    });
    Operator::system(out, d)
}

/// `exp(−i h t / ħ)` for hermitian `h`, via the hermitian eigendecomposition.
pub fn matrix_exponential_unitary(h: &Operator, t: f64, hbar: f64) -> Result<Operator> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidArgument(format!("ħ must be positive, got {hbar}")));
    }
    let eig = HermitianEigen::new(h.matrix())?;
    Operator::new(eig.propagator(t, hbar), h.tag())
}

/// `ab − ba`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    same_tag("commutator", a, b)?;
    Operator::new(commutator_raw(a.matrix(), b.matrix()), a.tag())
}

/// Pauli matrices `(σ_x, σ_y, σ_z)`.
pub fn pauli() -> [CMatrix; 3] {
    let sx = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let sy = CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]);
    let sz = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
    [sx, sy, sz]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let a = random_matrix(rng, n);
        (&a + a.adjoint()) * re(0.5)
    }

    fn random_density(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let a = random_matrix(rng, n);
        let p = &a * a.adjoint();
        let tr = p.trace();
        p / tr
    }

    #[test]
    fn identity_tensor_identity() {
        let d = Dims::new(2, 2).unwrap();
        let a = Operator::identity(SpaceKind::System, d);
        let b = Operator::identity(SpaceKind::Bath, d);
        let ab = tensor_product(&a, &b).unwrap();
        assert_eq!(ab.matrix(), &CMatrix::identity(4, 4));
    }

    #[test]
    fn sigma_x_tensor_identity_is_block_swap() {
        let d = Dims::new(2, 2).unwrap();
        let [sx, _, _] = pauli();
        let a = Operator::system(sx, d).unwrap();
        let b = Operator::identity(SpaceKind::Bath, d);
        let ab = tensor_product(&a, &b).unwrap();
        let mut expected = CMatrix::zeros(4, 4);
        expected[(0, 2)] = ONE;
        expected[(1, 3)] = ONE;
        expected[(2, 0)] = ONE;
        expected[(3, 1)] = ONE;
        assert_eq!(ab.matrix(), &expected);
    }

    #[test]
    fn tensor_product_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = Dims::new(2, 3).unwrap();
        let a = random_matrix(&mut rng, 2);
        let b = random_matrix(&mut rng, 3);
        let ab = tensor_product(
            &Operator::system(a.clone(), d).unwrap(),
            &Operator::bath(b.clone(), d).unwrap(),
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for al in 0..3 {
                    for be in 0..3 {
                        let want = a[(i, j)] * b[(al, be)];
                        assert_eq!(ab.matrix()[(i * 3 + al, j * 3 + be)], want);
                    }
                }
            }
        }
    }

    #[test]
    fn tensor_product_rejects_wrong_kinds() {
        let d = Dims::new(2, 2).unwrap();
        let a = Operator::identity(SpaceKind::Bath, d);
        let b = Operator::identity(SpaceKind::Bath, d);
        assert!(matches!(tensor_product(&a, &b), Err(Error::Dimension { .. })));
        assert!(Operator::system(CMatrix::identity(3, 3), d).is_err());
    }

    #[test]
    fn partial_trace_of_identity() {
        let d = Dims::new(2, 3).unwrap();
        let x = Operator::identity(SpaceKind::Full, d);
        let r = partial_trace_bath(&x).unwrap();
        assert_eq!(r.matrix(), &(CMatrix::identity(2, 2) * re(3.0)));
    }

    #[test]
    fn partial_trace_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Dims::new(2, 3).unwrap();
        let a = Operator::system(random_matrix(&mut rng, 2), d).unwrap();
        let b = Operator::bath(random_matrix(&mut rng, 3), d).unwrap();
        let r = partial_trace_bath(&tensor_product(&a, &b).unwrap()).unwrap();
        let want = a.matrix() * b.trace();
        assert!((r.matrix() - want).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_matches_index_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = Dims::new(2, 3).unwrap();
        let x = random_matrix(&mut rng, 6);
        let r = partial_trace_bath(&Operator::full(x.clone(), d).unwrap()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = ZERO;
                for a in 0..3 {
                    acc += x[(3 * i + a, 3 * j + a)];
                }
                assert!((r.matrix()[(i, j)] - acc).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn weighted_trace_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = Dims::new(2, 3).unwrap();
        let rho = DensityMatrix::new(Operator::bath(random_density(&mut rng, 3), d).unwrap()).unwrap();
        let id = Operator::identity(SpaceKind::Full, d);
        let r = weighted_bath_trace(&id, &rho).unwrap();
        assert!((r.matrix() - CMatrix::identity(2, 2)).norm() < 1e-14);

        let a = Operator::system(random_matrix(&mut rng, 2), d).unwrap();
        let b = Operator::bath(random_matrix(&mut rng, 3), d).unwrap();
        let r = weighted_bath_trace(&tensor_product(&a, &b).unwrap(), &rho).unwrap();
        let want = a.matrix() * (b.matrix() * rho.matrix()).trace();
        assert!((r.matrix() - want).norm() < 1e-14);

        // Element-sum oracle Σ_{αβ} x[(i,α),(j,β)] ρ[β,α].
        let x = random_matrix(&mut rng, 6);
        let r = weighted_bath_trace(&Operator::full(x.clone(), d).unwrap(), &rho).unwrap();
        let rm = rho.matrix();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = ZERO;
                for al in 0..3 {
                    for be in 0..3 {
                        acc += x[(3 * i + al, 3 * j + be)] * rm[(be, al)];
                    }
                }
                assert!((r.matrix()[(i, j)] - acc).norm() < 1e-14);
            }
        }
        // Same via the defining product with 𝟙 ⊗ ρ_B.
        let lifted = tensor_product(&Operator::identity(SpaceKind::System, d), rho.op()).unwrap();
        let prod = Operator::full(&x * lifted.matrix(), d).unwrap();
        let r2 = partial_trace_bath(&prod).unwrap();
        assert!((r.matrix() - r2.matrix()).norm() < 1e-14);
    }

    #[test]
    fn density_matrix_validation() {
        let d = Dims::new(2, 2).unwrap();
        let bad_trace = Operator::bath(CMatrix::identity(2, 2), d).unwrap();
        assert!(matches!(
            DensityMatrix::new(bad_trace),
            Err(Error::InvalidDensityMatrix(_))
        ));
        let negative = Operator::bath(
            CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![re(1.5), re(-0.5)])),
            d,
        )
        .unwrap();
        assert!(DensityMatrix::new(negative).is_err());
        let mut nh = CMatrix::identity(2, 2) * re(0.5);
        nh[(0, 1)] = re(0.1);
        assert!(DensityMatrix::new(Operator::bath(nh, d).unwrap()).is_err());
    }

    #[test]
    fn exponential_of_zero_and_diagonal() {
        let d = Dims::new(3, 1).unwrap();
        let z = Operator::zeros(SpaceKind::System, d);
        let u = matrix_exponential_unitary(&z, 1.3, 1.0).unwrap();
        assert!((u.matrix() - CMatrix::identity(3, 3)).norm() < 1e-15);

        let e = [0.3, -1.1, 2.0];
        let h = Operator::system(
            CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(3, e.iter().map(|&x| re(x)))),
            d,
        )
        .unwrap();
        let (t, hbar) = (0.7, 1.3);
        let u = matrix_exponential_unitary(&h, t, hbar).unwrap();
        for k in 0..3 {
            let want = (-I * e[k] * t / hbar).exp();
            assert!((u.matrix()[(k, k)] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn exponential_matches_taylor_oracle() {
        // Independent route: scaling and squaring of a Taylor series.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = Dims::new(4, 1).unwrap();
        let hm = random_hermitian(&mut rng, 4);
        let t = 0.37;
        let u = matrix_exponential_unitary(&Operator::system(hm.clone(), d).unwrap(), t, 1.0).unwrap();
        let a = &hm * (-I * t / 1024.0);
        let mut term = CMatrix::identity(4, 4);
        let mut sum = CMatrix::identity(4, 4);
        for k in 1..20 {
            term = &term * &a / re(k as f64);
            sum += &term;
        }
        for _ in 0..10 {
            sum = &sum * &sum;
        }
        assert!((u.matrix() - sum).norm() < 1e-12);
        let unit = u.matrix() * u.matrix().adjoint() - CMatrix::identity(4, 4);
        assert!(unit.norm() < TAU_UNIT);
    }

    #[test]
    fn exponential_rejects_non_hermitian() {
        let d = Dims::new(2, 1).unwrap();
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = ONE;
        let h = Operator::system(m, d).unwrap();
        assert!(matches!(
            matrix_exponential_unitary(&h, 1.0, 1.0),
            Err(Error::NonHermitian(_))
        ));
    }

    #[test]
    fn commutator_cases() {
        let d = Dims::new(2, 1).unwrap();
        let [sx, sy, sz] = pauli();
        let x = Operator::system(sx, d).unwrap();
        let y = Operator::system(sy, d).unwrap();
        assert_eq!(commutator(&x, &x).unwrap().norm(), 0.0);
        let c = commutator(&x, &y).unwrap();
        assert!((c.matrix() - sz * (I * 2.0)).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 2);
        let b = random_matrix(&mut rng, 2);
        let c = commutator(
            &Operator::system(a.clone(), d).unwrap(),
            &Operator::system(b.clone(), d).unwrap(),
        )
        .unwrap();
        let mut want = CMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    want[(i, j)] += a[(i, k)] * b[(k, j)] - b[(i, k)] * a[(k, j)];
                }
            }
        }
        assert!((c.matrix() - want).norm() < 1e-15);
        let bath = Operator::identity(SpaceKind::Bath, Dims::new(2, 2).unwrap());
        assert!(commutator(&x, &bath).is_err());
    }

    #[test]
    fn degenerate_eigenbasis_is_deterministic() {
        let m = CMatrix::identity(3, 3);
        let e1 = HermitianEigen::new(&m).unwrap();
        let e2 = HermitianEigen::new(&m).unwrap();
        assert_eq!(e1.vectors, e2.vectors);
        let recon = e1.map(re);
        assert!((recon - m).norm() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn trace_of_tensor_product_factorizes(seed in 0u64..500) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = Dims::new(3, 2).unwrap();
                let a = Operator::system(random_matrix(&mut rng, 3), d).unwrap();
                let b = Operator::bath(random_matrix(&mut rng, 2), d).unwrap();
                let r = partial_trace_bath(&tensor_product(&a, &b).unwrap()).unwrap();
                let want = a.matrix() * b.trace();
                prop_assert!((r.matrix() - &want).norm() <= 1e-13 * (1.0 + want.norm()));
            }

            #[test]
            fn forward_and_backward_propagators_cancel(seed in 0u64..200, t in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = Dims::new(4, 1).unwrap();
                let h = Operator::system(random_hermitian(&mut rng, 4), d).unwrap();
                let u = matrix_exponential_unitary(&h, t, 1.0).unwrap();
                let v = matrix_exponential_unitary(&h, -t, 1.0).unwrap();
                let defect = (u.matrix() * v.matrix() - CMatrix::identity(4, 4)).norm();
                prop_assert!(defect <= 10.0 * TAU_UNIT);
            }

            #[test]
            fn weighted_trace_is_linear(seed in 0u64..200, s in -2.0f64..2.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = Dims::new(2, 3).unwrap();
                let rho = DensityMatrix::new(Operator::bath(random_density(&mut rng, 3), d).unwrap()).unwrap();
                let x = Operator::full(random_matrix(&mut rng, 6), d).unwrap();
                let y = Operator::full(random_matrix(&mut rng, 6), d).unwrap();
                let lhs = weighted_bath_trace(&x.add(&y.scale(re(s))).unwrap(), &rho).unwrap();
                let rx = weighted_bath_trace(&x, &rho).unwrap();
                let ry = weighted_bath_trace(&y, &rho).unwrap();
                let rhs = rx.add(&ry.scale(re(s))).unwrap();
                prop_assert!((lhs.matrix() - rhs.matrix()).norm() < 1e-13);
            }
        }
    }
}
