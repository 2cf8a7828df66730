//! Exact brute-force reference built on full-space Heisenberg evolution.
//!
//! Nothing here is approximate: the full Hamiltonian is diagonalised once and
//! `O(t) = e^{iHt/ħ} (O ⊗ 𝟙_B) e^{−iHt/ħ}` is formed directly.

use crate::error::{Error, Result};
use crate::hilbert::{
    kron, require_hermitian, tensor_product, weighted_bath_trace, CMatrix, Constants,
    DensityMatrix, Dims, HermitianEigen, Operator, SpaceKind, C64, ONE, ZERO,
};

/// A system ⊗ bath model `H = H₀ + H_B + λ H_I` with product initial state.
///
/// The stored bath basis is the eigenbasis of `H_B` (ascending energies); a
/// non-diagonal `H_B` is diagonalised on construction and `H_I`, `ρ_B` are
/// rotated into that basis.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    dims: Dims,
    h0: Operator,
    hb: Operator,
    hi: Operator,
    constants: Constants,
    rho0: DensityMatrix,
    rho_b: DensityMatrix,
    bath_energies: Vec<f64>,
    bath_basis: CMatrix,
}

impl ModelSpec {
    pub fn new(
        h0: Operator,
        hb: Operator,
        hi: Operator,
        constants: Constants,
        rho0: DensityMatrix,
        rho_b: DensityMatrix,
    ) -> Result<Self> {
        h0.require(SpaceKind::System, "ModelSpec (H₀)")?;
        hb.require(SpaceKind::Bath, "ModelSpec (H_B)")?;
        hi.require(SpaceKind::Full, "ModelSpec (H_I)")?;
        if rho0.kind() != SpaceKind::System || rho_b.kind() != SpaceKind::Bath {
            return Err(Error::InvalidDensityMatrix(
                "ρ₀ must be a system state and ρ_B a bath state".into(),
            ));
        }
        let dims = h0.dims();
        for (what, d) in [
            ("H_B", hb.dims()),
            ("H_I", hi.dims()),
            ("ρ₀", rho0.dims()),
            ("ρ_B", rho_b.dims()),
        ] {
            if d != dims {
                return Err(Error::dim("ModelSpec", format!("{dims:?}"), format!("{what}: {d:?}")));
            }
        }
        require_hermitian(h0.matrix(), "H₀")?;
        require_hermitian(hb.matrix(), "H_B")?;
        require_hermitian(hi.matrix(), "H_I")?;

        let eig = HermitianEigen::new(hb.matrix())?;
        let w = eig.vectors.clone();
        let hb_rot = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            dims.bath,
            eig.values.iter().map(|&e| C64::new(e, 0.0)),
        ));
        let lift = kron(&CMatrix::identity(dims.system, dims.system), &w);
        let hi_rot = lift.adjoint() * hi.matrix() * &lift;
        let rho_rot = w.adjoint() * rho_b.matrix() * &w;

        Ok(Self {
            dims,
            h0,
            hb: Operator::bath(hb_rot, dims)?,
            hi: Operator::full(hi_rot, dims)?,
            constants,
            rho0,
            rho_b: DensityMatrix::new(Operator::bath(rho_rot, dims)?)?,
            bath_energies: eig.values,
            bath_basis: w,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn h0(&self) -> &Operator {
        &self.h0
    }

    /// Bath Hamiltonian in the working (energy) basis; diagonal.
    pub fn hb(&self) -> &Operator {
        &self.hb
    }

    /// Interaction Hamiltonian in the working bath basis.
    pub fn hi(&self) -> &Operator {
        &self.hi
    }

    pub fn constants(&self) -> Constants {
        self.constants
    }

    pub fn hbar(&self) -> f64 {
        self.constants.hbar
    }

    pub fn lambda(&self) -> f64 {
        self.constants.lambda
    }

    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    /// Bath state in the working bath basis.
    pub fn rho_b(&self) -> &DensityMatrix {
        &self.rho_b
    }

    pub fn bath_energies(&self) -> &[f64] {
        &self.bath_energies
    }

    /// Columns are the `H_B` eigenvectors in the caller's original bath basis.
    pub fn bath_basis(&self) -> &CMatrix {
        &self.bath_basis
    }

    /// Same model with a different coupling strength.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut m = self.clone();
        m.constants.lambda = lambda;
        m
    }
}

/// `H₀ ⊗ 𝟙_B + 𝟙_S ⊗ H_B + λ H_I`.
pub fn total_hamiltonian(m: &ModelSpec) -> Result<Operator> {
    let d = m.dims();
    let h0 = tensor_product(m.h0(), &Operator::identity(SpaceKind::Bath, d))?;
    let hb = tensor_product(&Operator::identity(SpaceKind::System, d), m.hb())?;
    let mat = h0.matrix() + hb.matrix() + m.hi().matrix() * C64::new(m.lambda(), 0.0);
    Operator::full(mat, d)
}

/// Cached diagonalisation of the total Hamiltonian for repeated exact
/// evolutions.
#[derive(Clone, Debug)]
pub struct ExactEvolution {
    dims: Dims,
    hbar: f64,
    eig: HermitianEigen,
}

impl ExactEvolution {
    pub fn new(m: &ModelSpec) -> Result<Self> {
        let h = total_hamiltonian(m)?;
        Ok(Self {
            dims: m.dims(),
            hbar: m.hbar(),
            eig: HermitianEigen::new(h.matrix())?,
        })
    }

    /// `e^{−iHt/ħ}`.
    pub fn propagator(&self, t: f64) -> CMatrix {
        self.eig.propagator(t, self.hbar)
    }

    /// Heisenberg evolution of a system observable lifted to the full space.
    pub fn evolve(&self, o0: &Operator, t: f64) -> Result<Operator> {
        o0.require(SpaceKind::System, "heisenberg_evolve_exact")?;
        if o0.dims() != self.dims {
            return Err(Error::dim(
                "heisenberg_evolve_exact",
                format!("{:?}", self.dims),
                format!("{:?}", o0.dims()),
            ));
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("evolution time must be ≥ 0, got {t}")));
        }
        let lifted = kron(o0.matrix(), &CMatrix::identity(self.dims.bath, self.dims.bath));
        let u = self.propagator(t);
        Operator::full(u.adjoint() * lifted * u, self.dims)
    }
}

/// `e^{iHt/ħ} (o0 ⊗ 𝟙_B) e^{−iHt/ħ}`.
pub fn heisenberg_evolve_exact(m: &ModelSpec, o0: &Operator, t: f64) -> Result<Operator> {
    ExactEvolution::new(m)?.evolve(o0, t)
}

/// `tr_B{O₁(t₁) ⋯ O_N(t_N) ρ_B}` with the product taken in sequence order.
pub fn npoint_reduced_exact(m: &ModelSpec, ops: &[(Operator, f64)]) -> Result<Operator> {
    if ops.is_empty() {
        return Err(Error::InvalidArgument("empty operator sequence".into()));
    }
    let evo = ExactEvolution::new(m)?;
    let n = m.dims().full();
    let mut prod = CMatrix::identity(n, n);
    for (o, t) in ops {
        prod = prod * evo.evolve(o, *t)?.into_matrix();
    }
    weighted_bath_trace(&Operator::full(prod, m.dims())?, m.rho_b())
}

/// Image block `T_α† x T_β`: `result[i,j] = x[(i,α),(j,β)]`.
pub fn image_extract_exact(x: &Operator, alpha: usize, beta: usize) -> Result<Operator> {
    x.require(SpaceKind::Full, "image_extract_exact")?;
    let d = x.dims();
    for idx in [alpha, beta] {
        if idx >= d.bath {
            return Err(Error::IndexOutOfRange {
                index: idx,
                dim: d.bath,
            });
        }
    }
    let m = x.matrix();
    let out = CMatrix::from_fn(d.system, d.system, |i, j| {
        m[(d.flat(i, alpha), d.flat(j, beta))]
    });
    Operator::system(out, d)
}

/// `tr(o_s ρ₀)`.
pub fn expectation(o_s: &Operator, rho0: &DensityMatrix) -> Result<C64> {
    o_s.require(SpaceKind::System, "expectation")?;
    if rho0.kind() != SpaceKind::System || rho0.dims().system != o_s.dims().system {
        return Err(Error::dim(
            "expectation",
            format!("system state with d_S = {}", o_s.dims().system),
            format!("{} state with {:?}", rho0.kind(), rho0.dims()),
        ));
    }
    Ok((o_s.matrix() * rho0.matrix()).trace())
}

/// `T_α` as a `(d_S·d_B) × d_S` matrix.
pub(crate) fn projection_matrix(dims: Dims, alpha: usize) -> CMatrix {
    let mut t = CMatrix::from_element(dims.full(), dims.system, ZERO);
    for i in 0..dims.system {
        t[(dims.flat(i, alpha), i)] = ONE;
    }
    t
}
