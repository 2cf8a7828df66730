//! Super-operators `P⁽ⁿ⁾`, one-point operators, their inversion back to image
//! families, the star product and the local-in-time one-point generator.
//!
//! `P⁽ⁿ⁾_{αβ} A = Σ_r i^{n−2r} K⁽ⁿ⁻ʳ⁾†_{γα} A K⁽ʳ⁾_{γβ}` and
//! `P⁽ⁿ⁾_S A = P⁽ⁿ⁾_{αβ} A ρ_{Bβα}`. With `x = λ/ħ`:
//!
//! ```text
//! O_{αβ}(t) = Σ_n xⁿ P⁽ⁿ⁾_{αβ} Ô,   O_S(t) = Σ_n xⁿ P⁽ⁿ⁾_S Ô,   Ô = U₀† O U₀.
//! ```
//!
//! Inverting the second series, `Ô = Σ_m x^m B_m` with `B₀ = O_S` and
//! `B_m = −Σ_{j=1}^{m} P⁽ʲ⁾_S B_{m−j}`, which is the multinomial sum
//! `Σ_k (−1)^k Σ_{n₁+…+n_k = m} P^{(n₁)}_S ⋯ P^{(n_k)}_S O_S`.
//! All mixed series are truncated by total order.

use crate::error::{Error, Result};
use crate::dyson::KernelSet;
use crate::hilbert::{CMatrix, DensityMatrix, Operator, SpaceKind, C64, I, ONE};
use crate::image::{compose_raw, contract_raw, ImageFamily};
use crate::ode::TimeGrid;

/// Series order and coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesTruncation {
    pub order: usize,
    pub lambda: f64,
}

impl SeriesTruncation {
    pub fn new(order: usize, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("λ must be finite, got {lambda}")));
        }
        Ok(Self { order, lambda })
    }

    fn check(&self, ks: &KernelSet) -> Result<()> {
        if self.order > ks.n_max() {
            return Err(Error::OrderExceedsKernels {
                requested: self.order,
                available: ks.n_max(),
            });
        }
        Ok(())
    }
}

/// `O_S(t)` on a grid.
#[derive(Clone, Debug)]
pub struct OnePointTrajectory {
    pub label: String,
    pub grid: TimeGrid,
    pub values: Vec<Operator>,
    pub truncation: SeriesTruncation,
}

impl OnePointTrajectory {
    pub fn value_at(&self, t: f64) -> Result<&Operator> {
        let idx = self.grid.index_of(t).ok_or(Error::TimeNotOnGrid(t))?;
        Ok(&self.values[idx])
    }

    /// Single-point trajectory from a known `O_S(t)` value.
    pub fn from_value(label: impl Into<String>, t: f64, value: Operator, truncation: SeriesTruncation) -> Result<Self> {
        value.require(SpaceKind::System, "OnePointTrajectory::from_value")?;
        let grid = TimeGrid::from_points([t])?;
        let idx = grid.index_of(t).ok_or(Error::TimeNotOnGrid(t))?;
        let mut values = vec![Operator::zeros(SpaceKind::System, value.dims()); grid.len()];
        values[idx] = value;
        Ok(Self {
            label: label.into(),
            grid,
            values,
            truncation,
        })
    }
}

pub(crate) fn check_bath_state(ks: &KernelSet, rho_b: &DensityMatrix) -> Result<()> {
    if rho_b.kind() != SpaceKind::Bath || rho_b.dims() != ks.dims() {
        return Err(Error::dim(
            "bath state",
            format!("bath state for {:?}", ks.dims()),
            format!("{} state for {:?}", rho_b.kind(), rho_b.dims()),
        ));
    }
    Ok(())
}

pub(crate) fn check_system(a: &Operator, ks: &KernelSet, ctx: &'static str) -> Result<()> {
    a.require(SpaceKind::System, ctx)?;
    if a.dims() != ks.dims() {
        return Err(Error::dim(ctx, format!("{:?}", ks.dims()), format!("{:?}", a.dims())));
    }
    Ok(())
}

fn i_pow(k: i64) -> C64 {
    match k.rem_euclid(4) {
        0 => ONE,
        1 => I,
        2 => -ONE,
        _ => -I,
    }
}

/// `Σ_γ X_{γα}† A Y_{γβ}`.
pub(crate) fn sandwich(x: &ImageFamily, a: &CMatrix, y: &ImageFamily) -> ImageFamily {
    let db = x.dims().bath;
    let mut out = ImageFamily::zeros(x.dims(), y.time());
    for al in 0..db {
        for be in 0..db {
            let blk = out.block_mut(al, be);
            for g in 0..db {
                *blk += x.block(g, al).adjoint() * a * y.block(g, be);
            }
        }
    }
    out
}

fn p_ab_raw(n: usize, a: &CMatrix, idx_t: f64, ks: &KernelSet) -> Result<ImageFamily> {
    let mut out = ImageFamily::zeros(ks.dims(), idx_t);
    for r in 0..=n {
        let left = ks.k(n - r, idx_t)?;
        let right = ks.k(r, idx_t)?;
        let w = i_pow(n as i64 - 2 * r as i64);
        out.add_scaled(w, &sandwich(left, a, right));
    }
    Ok(out)
}

/// `P⁽ⁿ⁾_{αβ} A` at grid time `t`.
pub fn apply_p_ab(n: usize, a: &Operator, t: f64, ks: &KernelSet) -> Result<ImageFamily> {
    check_system(a, ks, "apply_p_ab")?;
    p_ab_raw(n, a.matrix(), t, ks)
}

/// `P⁽ⁿ⁾_S A = P⁽ⁿ⁾_{αβ} A ρ_{Bβα}`.
pub fn apply_p_s(n: usize, a: &Operator, t: f64, ks: &KernelSet, rho_b: &DensityMatrix) -> Result<Operator> {
    check_system(a, ks, "apply_p_s")?;
    check_bath_state(ks, rho_b)?;
    Operator::system(contract_raw(&p_ab_raw(n, a.matrix(), t, ks)?, rho_b.matrix()), ks.dims())
}

fn p_s_raw(n: usize, a: &CMatrix, t: f64, ks: &KernelSet, rho: &CMatrix) -> Result<CMatrix> {
    if n == 0 {
        return Ok(a.clone());
    }
    Ok(contract_raw(&p_ab_raw(n, a, t, ks)?, rho))
}

/// `Ô = U₀†(t) O U₀(t)`.
fn free_evolved(o: &CMatrix, t: f64, ks: &KernelSet) -> CMatrix {
    let u = ks.frame().u0(t);
    u.adjoint() * o * u
}

fn coupling(trunc: &SeriesTruncation, ks: &KernelSet) -> f64 {
    trunc.lambda / ks.constants().hbar
}

/// `O_S(t) = Σ_{n ≤ order} (λ/ħ)ⁿ P⁽ⁿ⁾_S U₀† O U₀` at every point of `grid`.
pub fn one_point_operator(
    o: &Operator,
    trunc: SeriesTruncation,
    ks: &KernelSet,
    rho_b: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<OnePointTrajectory> {
    check_system(o, ks, "one_point_operator")?;
    check_bath_state(ks, rho_b)?;
    trunc.check(ks)?;
    let x = coupling(&trunc, ks);
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid.times() {
        ks.time_index(t)?;
        let oh = free_evolved(o.matrix(), t, ks);
        let mut acc = oh.clone();
        let mut w = 1.0;
        for n in 1..=trunc.order {
            w *= x;
            acc += p_s_raw(n, &oh, t, ks, rho_b.matrix())? * C64::new(w, 0.0);
        }
        values.push(Operator::system(acc, ks.dims())?);
    }
    Ok(OnePointTrajectory {
        label: String::new(),
        grid: grid.clone(),
        values,
        truncation: trunc,
    })
}

/// Coefficients `B_m` (without the `(λ/ħ)^m`) of the inverse series.
fn inverse_terms(o_s: &CMatrix, order: usize, t: f64, ks: &KernelSet, rho: &CMatrix) -> Result<Vec<CMatrix>> {
    let mut b: Vec<CMatrix> = vec![o_s.clone()];
    // P⁽ʲ⁾_S applied to each earlier term, cached per j.
    for m in 1..=order {
        let mut acc = CMatrix::zeros(o_s.nrows(), o_s.ncols());
        for j in 1..=m {
            acc -= p_s_raw(j, &b[m - j], t, ks, rho)?;
        }
        b.push(acc);
    }
    Ok(b)
}

/// `{1 + Σ(λ/ħ)ⁿ P⁽ⁿ⁾_S}⁻¹ O_S`, truncated at total order.
pub fn invert_one_point(
    o_s_value: &Operator,
    trunc: SeriesTruncation,
    ks: &KernelSet,
    rho_b: &DensityMatrix,
    t: f64,
) -> Result<Operator> {
    check_system(o_s_value, ks, "invert_one_point")?;
    check_bath_state(ks, rho_b)?;
    trunc.check(ks)?;
    let x = coupling(&trunc, ks);
    let b = inverse_terms(o_s_value.matrix(), trunc.order, t, ks, rho_b.matrix())?;
    let mut acc = CMatrix::zeros(b[0].nrows(), b[0].ncols());
    let mut w = 1.0;
    for bm in &b {
        acc += bm * C64::new(w, 0.0);
        w *= x;
    }
    Operator::system(acc, ks.dims())
}

/// Order-by-order coefficients `c_k` of the image family reconstructed from a
/// one-point value, `O_{αβ} = Σ_{k ≤ order} (λ/ħ)^k c_k`,
/// `c_k = Σ_{n+m=k} P⁽ⁿ⁾_{αβ} B_m`.
pub fn image_series(
    o_s_value: &Operator,
    order: usize,
    t: f64,
    ks: &KernelSet,
    rho_b: &DensityMatrix,
) -> Result<Vec<ImageFamily>> {
    check_system(o_s_value, ks, "image_series")?;
    check_bath_state(ks, rho_b)?;
    if order > ks.n_max() {
        return Err(Error::OrderExceedsKernels {
            requested: order,
            available: ks.n_max(),
        });
    }
    let b = inverse_terms(o_s_value.matrix(), order, t, ks, rho_b.matrix())?;
    let mut series = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut ck = ImageFamily::zeros(ks.dims(), t);
        for n in 0..=k {
            ck.add_scaled(ONE, &p_ab_raw(n, &b[k - n], t, ks)?);
        }
        series.push(ck);
    }
    Ok(series)
}

/// `Σ_k x^k s_k`.
pub fn sum_series(series: &[ImageFamily], x: f64) -> ImageFamily {
    let mut out = ImageFamily::zeros(series[0].dims(), series[0].time());
    let mut w = 1.0;
    for s in series {
        out.add_scaled(C64::new(w, 0.0), s);
        w *= x;
    }
    out
}

/// Cauchy product of two family series, truncated at `order`.
pub fn compose_series(a: &[ImageFamily], b: &[ImageFamily], order: usize) -> Vec<ImageFamily> {
    (0..=order)
        .map(|k| {
            let mut ck = ImageFamily::zeros(a[0].dims(), b[0].time());
            for i in 0..=k.min(a.len() - 1) {
                if k - i < b.len() {
                    ck.add_scaled(ONE, &compose_raw(&a[i], &b[k - i]));
                }
            }
            ck
        })
        .collect()
}

/// Image family `O_{αβ}(t)` reconstructed from a one-point trajectory.
pub fn image_from_one_point(
    o_s: &OnePointTrajectory,
    ks: &KernelSet,
    rho_b: &DensityMatrix,
    t: f64,
) -> Result<ImageFamily> {
    o_s.truncation.check(ks)?;
    let series = image_series(o_s.value_at(t)?, o_s.truncation.order, t, ks, rho_b)?;
    Ok(sum_series(&series, coupling(&o_s.truncation, ks)))
}

fn common_truncation(factors: &[(&OnePointTrajectory, f64)]) -> Result<SeriesTruncation> {
    let first = factors
        .first()
        .ok_or_else(|| Error::InvalidArgument("star product of zero factors".into()))?
        .0
        .truncation;
    if factors.iter().any(|(f, _)| f.truncation != first) {
        return Err(Error::InvalidArgument(
            "star product factors must share one truncation".into(),
        ));
    }
    Ok(first)
}

/// Per-factor image series of a star product, in factor order.
pub fn star_factor_series(
    factors: &[(&OnePointTrajectory, f64)],
    ks: &KernelSet,
    rho_b: &DensityMatrix,
) -> Result<(SeriesTruncation, Vec<Vec<ImageFamily>>)> {
    let trunc = common_truncation(factors)?;
    trunc.check(ks)?;
    let series = factors
        .iter()
        .map(|(traj, t)| image_series(traj.value_at(*t)?, trunc.order, *t, ks, rho_b))
        .collect::<Result<Vec<_>>>()?;
    Ok((trunc, series))
}

/// `O₁S(t₁) ⋆ ⋯ ⋆ O_NS(t_N) = O_{1α₁α₂}(t₁) ⋯ O_{Nα_Nα_{N+1}}(t_N) ρ_{Bα_{N+1}α₁}`,
/// each factor lifted by [`image_series`], truncated at total order.
pub fn star_product(
    factors: &[(&OnePointTrajectory, f64)],
    ks: &KernelSet,
    rho_b: &DensityMatrix,
) -> Result<Operator> {
    let (trunc, series) = star_factor_series(factors, ks, rho_b)?;
    let mut acc = series[0].clone();
    for s in &series[1..] {
        acc = compose_series(&acc, s, trunc.order);
    }
    let family = sum_series(&acc, coupling(&trunc, ks));
    Operator::system(contract_raw(&family, rho_b.matrix()), ks.dims())
}

/// `𝒟P⁽ⁿ⁾_{αβ} A = Σ_r i^{n−2r} [(𝒟K⁽ⁿ⁻ʳ⁾_{γα})† A K⁽ʳ⁾_{γβ} + K⁽ⁿ⁻ʳ⁾†_{γα} A 𝒟K⁽ʳ⁾_{γβ}]`.
fn dp_ab_raw(n: usize, a: &CMatrix, t: f64, ks: &KernelSet) -> Result<ImageFamily> {
    let mut out = ImageFamily::zeros(ks.dims(), t);
    for r in 0..=n {
        let w = i_pow(n as i64 - 2 * r as i64);
        let kl = ks.k(n - r, t)?;
        let kr = ks.k(r, t)?;
        if n - r > 0 {
            out.add_scaled(w, &sandwich(&ks.k_derivative(n - r, t)?, a, kr));
        }
        if r > 0 {
            out.add_scaled(w, &sandwich(kl, a, &ks.k_derivative(r, t)?));
        }
    }
    Ok(out)
}

/// `dO_S/dt = (i/ħ)[H₀, O_S] + Σ_{n≥1} Σ_m (λ/ħ)^{n+m} 𝒟P⁽ⁿ⁾_S B_m`,
/// truncated at total order, with `B_m` from the inverse series of `O_S(t)`.
pub fn one_point_rhs(
    o_s: &OnePointTrajectory,
    t: f64,
    ks: &KernelSet,
    rho_b: &DensityMatrix,
) -> Result<Operator> {
    check_bath_state(ks, rho_b)?;
    let trunc = o_s.truncation;
    trunc.check(ks)?;
    let value = o_s.value_at(t)?;
    check_system(value, ks, "one_point_rhs")?;
    let os = value.matrix();
    let h0 = ks.frame().h0();
    let hbar = ks.constants().hbar;
    let mut out = (h0 * os - os * h0) * (I / hbar);
    let x = coupling(&trunc, ks);
    let rho = rho_b.matrix();
    let b = inverse_terms(os, trunc.order, t, ks, rho)?;
    for n in 1..=trunc.order {
        for (m, bm) in b.iter().enumerate().take(trunc.order - n + 1) {
            let w = x.powi((n + m) as i32);
            out += contract_raw(&dp_ab_raw(n, bm, t, ks)?, rho) * C64::new(w, 0.0);
        }
    }
    Operator::system(out, ks.dims())
}
