//! Ready-made models: the two-qubit exchange model, an engineered dephasing
//! bath, and seeded random models for oracle comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::hilbert::{kron, pauli, re, CMatrix, Constants, DensityMatrix, Dims, Operator, C64};
use crate::oracle::ModelSpec;

/// Names accepted by [`by_name`].
pub const PRESET_NAMES: [&str; 2] = ["two_qubit", "dephasing_bath"];

/// Spin component `S_axis = (ħ/2) σ_axis` of the system qubit (`axis` 0, 1, 2
/// for x, y, z). Requires `d_S = 2`.
pub fn spin_system(axis: usize, dims: Dims, hbar: f64) -> Operator {
    let s = pauli()[axis].clone() * re(0.5 * hbar);
    Operator::system(s, dims).expect("spin operators need d_S = 2")
}

/// Two spin-½ particles coupled by `λ S̄₁·S̄₂`; particle 2 is the bath, in the
/// state `diag(1 − c, c)`. `H₀ = H_B = 0`, `ρ₀ = 𝟙/2`.
pub fn two_qubit(c: f64, lambda: f64, hbar: f64) -> Result<ModelSpec> {
    let dims = Dims::new(2, 2)?;
    let s = pauli().map(|p| p * re(0.5 * hbar));
    let mut hi = CMatrix::zeros(4, 4);
    for k in &s {
        hi += kron(k, k);
    }
    let rho_b = CMatrix::from_row_slice(2, 2, &[re(1.0 - c), re(0.0), re(0.0), re(c)]);
    ModelSpec::new(
        Operator::system(CMatrix::zeros(2, 2), dims)?,
        Operator::bath(CMatrix::zeros(2, 2), dims)?,
        Operator::full(hi, dims)?,
        Constants::new(hbar, lambda)?,
        DensityMatrix::new(Operator::system(CMatrix::identity(2, 2) * re(0.5), dims)?)?,
        DensityMatrix::new(Operator::bath(rho_b, dims)?)?,
    )
}

/// Parameters of the engineered dephasing bath.
pub mod dephasing {
    /// Bath level spacing; correlations recur after `2π/δ`.
    pub const LEVEL_SPACING: f64 = 0.25;
    /// Width (in level units) of the Gaussian correlation spectrum.
    pub const PROFILE_WIDTH: f64 = 2.0;
    /// System splitting `Δ` in `H₀ = (Δ/2) σ_z`.
    pub const SPLITTING: f64 = 1.0;
    pub const BATH_DIM: usize = 8;
}

/// Qubit dephased by an 8-level bath: `H₀ = (Δ/2)σ_z`, `H_B = Σ_α αδ |α⟩⟨α|`,
/// `H_I = σ_z ⊗ S` with a Gaussian-banded traceless `S`, `ρ_B = 𝟙/8`.
///
/// `|S_ab|²` is `e^{−m²/2w²}` divided by the multiplicity `d − |m|` of the gap
/// `m = a − b`, so the bath correlation `⟨S̃(0)S̃(−τ)⟩` is a comb of level
/// differences with exactly Gaussian weights: it decays on a time `~1/(wδ)`
/// (below 1% of its peak by `τ ≈ 6`) and revives only after `2π/δ`.
/// First moment is zero and `ρ_B` commutes with `H_B`.
pub fn dephasing_bath(lambda: f64) -> Result<ModelSpec> {
    use dephasing::*;
    let db = BATH_DIM;
    let dims = Dims::new(2, db)?;
    let [_, _, sz] = pauli();
    let h0 = sz.clone() * re(0.5 * SPLITTING);
    let hb = CMatrix::from_fn(db, db, |a, b| {
        if a == b {
            re(a as f64 * LEVEL_SPACING)
        } else {
            re(0.0)
        }
    });
    let coupling = CMatrix::from_fn(db, db, |a, b| {
        if a == b {
            re(if a % 2 == 0 { 1.0 } else { -1.0 })
        } else {
            let m = a as f64 - b as f64;
            let mult = db as f64 / (db as f64 - m.abs());
            re(mult.sqrt() * (-m * m / (4.0 * PROFILE_WIDTH * PROFILE_WIDTH)).exp())
        }
    });
    let hi = kron(&sz, &coupling);
    let plus = CMatrix::from_element(2, 2, re(0.5));
    ModelSpec::new(
        Operator::system(h0, dims)?,
        Operator::bath(hb, dims)?,
        Operator::full(hi, dims)?,
        Constants::new(1.0, lambda)?,
        DensityMatrix::new(Operator::system(plus, dims)?)?,
        DensityMatrix::maximally_mixed(crate::hilbert::SpaceKind::Bath, dims),
    )
}

/// Preset by name, with the two-qubit bath parameter `c`.
pub fn by_name(name: &str, c: f64, lambda: f64) -> Option<Result<ModelSpec>> {
    match name {
        "two_qubit" => Some(two_qubit(c, lambda, 1.0)),
        "dephasing_bath" => Some(dephasing_bath(lambda)),
        _ => None,
    }
}

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
    let p = &a * a.adjoint() + CMatrix::identity(n, n) * re(0.05);
    let tr = p.trace();
    p / tr
}

/// Raw ingredients `(H₀, H_B, H_I, ρ₀, ρ_B)` of [`random_model`], in the
/// original (non-energy) bath basis.
pub fn random_model_raw(
    seed: u64,
    d_s: usize,
    d_b: usize,
    lambda: f64,
) -> Result<(Operator, Operator, Operator, DensityMatrix, DensityMatrix, Constants)> {
    let dims = Dims::new(d_s, d_b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h0 = Operator::system(random_hermitian(&mut rng, d_s), dims)?;
    let hb = Operator::bath(random_hermitian(&mut rng, d_b), dims)?;
    let hi = Operator::full(random_hermitian(&mut rng, d_s * d_b), dims)?;
    let rho0 = DensityMatrix::new(Operator::system(random_density(&mut rng, d_s), dims)?)?;
    let rho_b = DensityMatrix::new(Operator::bath(random_density(&mut rng, d_b), dims)?)?;
    Ok((h0, hb, hi, rho0, rho_b, Constants::new(1.0, lambda)?))
}

/// Seeded model with random hermitian `H₀`, non-diagonal `H_B`, `H_I` and
/// random full-rank states, `ħ = 1`.
pub fn random_model(seed: u64, d_s: usize, d_b: usize, lambda: f64) -> Result<ModelSpec> {
    let (h0, hb, hi, rho0, rho_b, k) = random_model_raw(seed, d_s, d_b, lambda)?;
    ModelSpec::new(h0, hb, hi, k, rho0, rho_b)
}

/// Seeded random hermitian system observable.
pub fn random_hermitian_system(seed: u64, dims: Dims) -> Operator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    Operator::system(random_hermitian(&mut rng, dims.system), dims).expect("dims match")
}

/// Seeded random (non-hermitian) full-space operator.
pub fn random_full(seed: u64, dims: Dims) -> Operator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xf011));
    Operator::full(random_matrix(&mut rng, dims.full()), dims).expect("dims match")
}
