//! Even-partition bookkeeping of the image-operator series and the connected
//! (irreducible) parts of 2- and 3-point operators.
//!
//! The order-`n` term of `O_{αβ}(t)` reconstructed from `O_S(t)` is a sum over
//! partitions `{(n₁,m₁),…,(n_k,m_k)}` of `n` with `nᵢ + mᵢ > 0` for `i ≥ 2`:
//!
//! ```text
//! (−1)^{k−1} [cⁿ¹K⁽ⁿ¹⁾_{γ₁α}]† ⋯ [cⁿᵏK⁽ⁿᵏ⁾_{γ_kα_k}]† O_S [cᵐᵏK⁽ᵐᵏ⁾_{γ_kβ_k}] ⋯ [cᵐ¹K⁽ᵐ¹⁾_{γ₁β}]
//!     ρ_{Bβ₂α₂} ⋯ ρ_{Bβ_kα_k},          c = −iλ/ħ.
//! ```

use std::fmt;

use crate::dyson::{compute_kernels, KernelSet};
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, DensityMatrix, Operator, C64};
use crate::image::{compose_raw, contract_raw, ImageFamily};
use crate::oracle::ModelSpec;
use crate::ode::TimeGrid;
use crate::superop::{
    check_bath_state, check_system, one_point_operator, sandwich, star_product, SeriesTruncation,
};

/// `{(n₁,m₁),…,(n_k,m_k)}` with `nᵢ + mᵢ > 0` for `i ≥ 2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EvenPartition {
    pairs: Vec<(usize, usize)>,
}

impl EvenPartition {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("a partition needs at least one pair".into()));
        }
        if let Some(i) = pairs.iter().skip(1).position(|&(n, m)| n + m == 0) {
            return Err(Error::InvalidArgument(format!(
                "pair {} of {:?} is (0, 0); only the first pair may vanish",
                i + 2,
                pairs
            )));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn k(&self) -> usize {
        self.pairs.len()
    }

    pub fn total(&self) -> usize {
        self.pairs.iter().map(|&(n, m)| n + m).sum()
    }

    /// Highest kernel order used.
    pub fn max_order(&self) -> usize {
        self.pairs.iter().map(|&(n, m)| n.max(m)).max().unwrap_or(0)
    }

    /// The partner `{(0,0), (n₁,m₁), …}`, defined when `n₁ + m₁ > 0`.
    pub fn zero_prefixed(&self) -> Option<Self> {
        let (n1, m1) = self.pairs[0];
        (n1 + m1 > 0).then(|| {
            let mut pairs = Vec::with_capacity(self.pairs.len() + 1);
            pairs.push((0, 0));
            pairs.extend_from_slice(&self.pairs);
            Self { pairs }
        })
    }
}

impl fmt::Display for EvenPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (n, m)) in self.pairs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({n},{m})")?;
        }
        write!(f, "}}")
    }
}

/// One even partition per factor of an N-point operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiLegPartition {
    legs: Vec<EvenPartition>,
}

impl MultiLegPartition {
    pub fn new(legs: Vec<EvenPartition>) -> Result<Self> {
        if legs.is_empty() {
            return Err(Error::InvalidArgument("a multi-leg partition needs a leg".into()));
        }
        Ok(Self { legs })
    }

    pub fn legs(&self) -> &[EvenPartition] {
        &self.legs
    }

    pub fn total(&self) -> usize {
        self.legs.iter().map(EvenPartition::total).sum()
    }
}

/// All even partitions of `n` with `1 ≤ k ≤ k_max` pairs. Ordered by `k`, then
/// by the flattened sequence `(n₁, m₁, n₂, …)` in decreasing lexicographic
/// order, so `n = 1` gives `{(1,0)}, {(0,1)}, {(0,0),(1,0)}, {(0,0),(0,1)}`.
pub fn enumerate_even_partitions(n: usize, k_max: usize) -> Vec<EvenPartition> {
    let mut out = Vec::new();
    for k in 1..=k_max {
        let mut pairs = Vec::with_capacity(k);
        fill(n, k, &mut pairs, &mut out);
    }
    out
}

fn fill(remaining: usize, k: usize, pairs: &mut Vec<(usize, usize)>, out: &mut Vec<EvenPartition>) {
    let slot = pairs.len();
    if slot == k {
        if remaining == 0 {
            out.push(EvenPartition { pairs: pairs.clone() });
        }
        return;
    }
    // Each later pair needs at least 1.
    let later = k - slot - 1;
    if remaining < later {
        return;
    }
    let min_here = usize::from(slot > 0);
    let budget = remaining - later;
    for a in (0..=budget).rev() {
        for b in (0..=budget - a).rev() {
            if a + b < min_here {
                continue;
            }
            pairs.push((a, b));
            fill(remaining - a - b, k, pairs, out);
            pairs.pop();
        }
    }
}

/// Every `N`-leg partition of total order `n`, each leg with `k ≤ order + 1`.
pub fn enumerate_multi_leg_partitions(n: usize, legs: usize) -> Vec<MultiLegPartition> {
    fn rec(n: usize, legs: usize, acc: &mut Vec<EvenPartition>, out: &mut Vec<MultiLegPartition>) {
        if legs == 0 {
            if n == 0 {
                out.push(MultiLegPartition { legs: acc.clone() });
            }
            return;
        }
        let range: Vec<usize> = if legs == 1 { vec![n] } else { (0..=n).collect() };
        for a in range {
            for p in enumerate_even_partitions(a, a + 1) {
                acc.push(p);
                rec(n - a, legs - 1, acc, out);
                acc.pop();
            }
        }
    }
    let mut out = Vec::new();
    if legs > 0 {
        rec(n, legs, &mut Vec::with_capacity(legs), &mut out);
    }
    out
}

/// `Σ_γ [cᵃ K⁽ᵃ⁾_{γα}]† A [cᵇ K⁽ᵇ⁾_{γβ}]`.
fn dressed(a_ord: usize, b_ord: usize, a: &CMatrix, t: f64, ks: &KernelSet, c: C64) -> Result<ImageFamily> {
    let w = c.conj().powu(a_ord as u32) * c.powu(b_ord as u32);
    Ok(sandwich(ks.k(a_ord, t)?, a, ks.k(b_ord, t)?).scale(w))
}

fn partition_term_raw(
    p: &EvenPartition,
    o_s: &CMatrix,
    ks: &KernelSet,
    rho: &CMatrix,
    t: f64,
    lambda: f64,
) -> Result<ImageFamily> {
    if p.max_order() > ks.n_max() {
        return Err(Error::OrderExceedsKernels {
            requested: p.max_order(),
            available: ks.n_max(),
        });
    }
    let c = C64::new(0.0, -lambda / ks.constants().hbar);
    let mut a = o_s.clone();
    for &(n, m) in p.pairs.iter().skip(1).rev() {
        a = contract_raw(&dressed(n, m, &a, t, ks, c)?, rho);
    }
    let (n1, m1) = p.pairs[0];
    let sign = if p.k() % 2 == 1 { 1.0 } else { -1.0 };
    Ok(dressed(n1, m1, &a, t, ks, c)?.scale(C64::new(sign, 0.0)))
}

/// Image-family term of one partition, λ factors included.
pub fn assemble_partition_term(
    p: &EvenPartition,
    o_s: &Operator,
    ks: &KernelSet,
    rho_b: &DensityMatrix,
    t: f64,
    lambda: f64,
) -> Result<ImageFamily> {
    check_system(o_s, ks, "assemble_partition_term")?;
    check_bath_state(ks, rho_b)?;
    partition_term_raw(p, o_s.matrix(), ks, rho_b.matrix(), t, lambda)
}

/// `Σ_{n ≤ order}` of all partition terms of order `n`.
pub fn expand_image_by_partitions(
    o_s: &Operator,
    trunc: SeriesTruncation,
    ks: &KernelSet,
    rho_b: &DensityMatrix,
    t: f64,
) -> Result<ImageFamily> {
    check_system(o_s, ks, "expand_image_by_partitions")?;
    check_bath_state(ks, rho_b)?;
    if trunc.order > ks.n_max() {
        return Err(Error::OrderExceedsKernels {
            requested: trunc.order,
            available: ks.n_max(),
        });
    }
    let mut out = ImageFamily::zeros(ks.dims(), t);
    for n in 0..=trunc.order {
        for p in enumerate_even_partitions(n, n + 1) {
            let term = partition_term_raw(&p, o_s.matrix(), ks, rho_b.matrix(), t, trunc.lambda)?;
            out.add_scaled(C64::new(1.0, 0.0), &term);
        }
    }
    Ok(out)
}

/// Term of a multi-leg partition: leg images at their own times, chained and
/// contracted with `ρ_B`. `legs[i] = (O_{iS}(t_i), t_i)`.
pub fn assemble_multi_leg_term(
    p: &MultiLegPartition,
    legs: &[(&Operator, f64)],
    ks: &KernelSet,
    rho_b: &DensityMatrix,
    lambda: f64,
) -> Result<Operator> {
    if legs.len() != p.legs.len() {
        return Err(Error::dim("assemble_multi_leg_term", p.legs.len(), legs.len()));
    }
    check_bath_state(ks, rho_b)?;
    let mut acc: Option<ImageFamily> = None;
    for (part, &(o, t)) in p.legs.iter().zip(legs) {
        check_system(o, ks, "assemble_multi_leg_term")?;
        let f = partition_term_raw(part, o.matrix(), ks, rho_b.matrix(), t, lambda)?;
        acc = Some(match acc {
            None => f,
            Some(prev) => compose_raw(&prev, &f),
        });
    }
    let family = acc.expect("at least one leg");
    Operator::system(contract_raw(&family, rho_b.matrix()), ks.dims())
}

/// Kernels and one-point values for a list of `(observable, time)` factors.
struct Factors {
    ks: KernelSet,
    values: Vec<Operator>,
    trajectories: Vec<crate::superop::OnePointTrajectory>,
}

fn prepare(m: &ModelSpec, factors: &[(&Operator, f64)], trunc: SeriesTruncation) -> Result<Factors> {
    if (trunc.lambda - m.lambda()).abs() > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "truncation λ = {} differs from the model's λ = {}",
            trunc.lambda,
            m.lambda()
        )));
    }
    let grid = TimeGrid::from_points(factors.iter().map(|f| f.1))?;
    let ks = compute_kernels(m, trunc.order, &grid)?;
    let mut values = Vec::with_capacity(factors.len());
    let mut trajectories = Vec::with_capacity(factors.len());
    for &(o, t) in factors {
        let traj = one_point_operator(o, trunc, &ks, m.rho_b(), &grid)?;
        values.push(traj.value_at(t)?.clone());
        trajectories.push(traj);
    }
    Ok(Factors {
        ks,
        values,
        trajectories,
    })
}

/// Star product in which the factors flagged `false` in `lifted` keep their
/// one-point value (image family `O_S δ_{αβ}`, only the `{(0,0)}` partition).
fn mixed_star(f: &Factors, times: &[f64], lifted: &[bool], rho_b: &DensityMatrix) -> Result<CMatrix> {
    let trunc = f.trajectories[0].truncation;
    let x = trunc.lambda / f.ks.constants().hbar;
    let mut acc: Option<Vec<ImageFamily>> = None;
    for (k, &t) in times.iter().enumerate() {
        let series = if lifted[k] {
            crate::superop::image_series(&f.values[k], trunc.order, t, &f.ks, rho_b)?
        } else {
            let mut s = vec![ImageFamily::zeros(f.ks.dims(), t); trunc.order + 1];
            s[0] = ImageFamily::diagonal(f.values[k].matrix(), f.ks.dims(), t);
            s
        };
        acc = Some(match acc {
            None => series,
            Some(prev) => crate::superop::compose_series(&prev, &series, trunc.order),
        });
    }
    let family = crate::superop::sum_series(&acc.expect("factors"), x);
    Ok(contract_raw(&family, rho_b.matrix()))
}

/// `I[O₁S(t₁), O₂S(t₂)] = (O₁(t₁)O₂(t₂))_S − O₁S(t₁) O₂S(t₂)`.
pub fn irreducible_2pt(
    m: &ModelSpec,
    o1: &Operator,
    o2: &Operator,
    t1: f64,
    t2: f64,
    trunc: SeriesTruncation,
) -> Result<Operator> {
    let f = prepare(m, &[(o1, t1), (o2, t2)], trunc)?;
    let star = star_product(
        &[(&f.trajectories[0], t1), (&f.trajectories[1], t2)],
        &f.ks,
        m.rho_b(),
    )?;
    let prod = f.values[0].matrix() * f.values[1].matrix();
    Operator::system(star.matrix() - prod, m.dims())
}

/// Connected structure of a 3-point operator.
#[derive(Clone, Debug)]
pub struct ThreePointDecomposition {
    /// `O₁S O₂S O₃S`.
    pub disconnected: Operator,
    /// `(O₁O₂O₃S)_S − O₁S O₂S O₃S`.
    pub wired_12: Operator,
    /// `(O₁O₂S O₃)_S − O₁S O₂S O₃S`.
    pub wired_31: Operator,
    /// `(O₁S O₂O₃)_S − O₁S O₂S O₃S`.
    pub wired_23: Operator,
    /// Third-order cumulant.
    pub irreducible: Operator,
    /// `(O₁O₂O₃)_S`.
    pub full: Operator,
}

impl ThreePointDecomposition {
    pub fn sum(&self) -> CMatrix {
        self.disconnected.matrix()
            + self.wired_12.matrix()
            + self.wired_31.matrix()
            + self.wired_23.matrix()
            + self.irreducible.matrix()
    }
}

pub fn decompose_3pt(
    m: &ModelSpec,
    ops: [&Operator; 3],
    times: [f64; 3],
    trunc: SeriesTruncation,
) -> Result<ThreePointDecomposition> {
    let factors: Vec<(&Operator, f64)> = ops.iter().copied().zip(times).collect();
    let f = prepare(m, &factors, trunc)?;
    let rho = m.rho_b();
    let d = m.dims();
    let prod = f.values[0].matrix() * f.values[1].matrix() * f.values[2].matrix();
    let full = mixed_star(&f, &times, &[true, true, true], rho)?;
    let w12 = mixed_star(&f, &times, &[true, true, false], rho)? - &prod;
    let w31 = mixed_star(&f, &times, &[true, false, true], rho)? - &prod;
    let w23 = mixed_star(&f, &times, &[false, true, true], rho)? - &prod;
    let irreducible = &full - &w12 - &w31 - &w23 - &prod;
    Ok(ThreePointDecomposition {
        disconnected: Operator::system(prod, d)?,
        wired_12: Operator::system(w12, d)?,
        wired_31: Operator::system(w31, d)?,
        wired_23: Operator::system(w23, d)?,
        irreducible: Operator::system(irreducible, d)?,
        full: Operator::system(full, d)?,
    })
}
