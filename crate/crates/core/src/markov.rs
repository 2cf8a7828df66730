//! Markovian limit of the one-point evolution.
//!
//! `H_I = Σᵢ Rⁱ ⊗ Sⁱ`, `R̃ⁱ(t) = U₀RⁱU₀† = Σ_ω e^{iωt} Aⁱ_ω`, and the bath
//! correlator `Cⁱʲ(τ) = ⟨S̃ⁱ(0) S̃ʲ(−τ)⟩_B = Σ Sⁱ_{αγ} Sʲ_{γβ} e^{i(E_γ−E_β)τ/ħ} ρ_{Bβα}`
//! with half-line transform `Jⁱʲ(ω) = ∫₀^∞ e^{−iωτ} Cⁱʲ(τ) dτ`.
//!
//! When the first moment vanishes and `[ρ_B, H_B] = 0`, the order-λ² one-point
//! generator is exactly
//!
//! ```text
//! dO_S/dt = (i/ħ)[H₀, O_S] + (iλ/ħ)² Σ_{ωω'} Σ_{ij} Jⁱʲ_t(ω') {Aⁱ†_ω Aʲ_{ω'} O_S − Aⁱ†_ω O_S Aʲ_{ω'}} + h.c.
//! ```
//!
//! with `J_t` cut off at `τ = t`; the Markovian generator replaces `J_t` by
//! `J_∞`. "h.c." is the map `X ↦ (D(X†))†` applied to the dissipative part.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{kron, require_hermitian, CMatrix, Constants, Dims, HermitianEigen, Operator, SpaceKind, C64, I, ONE, ZERO};
use crate::ode::{self, OdeOptions, TimeGrid};
use crate::oracle::ModelSpec;
use crate::quad;

/// Orthonormal hermitian basis of `n × n` matrices under `tr(A†B)`:
/// `(E_jk + E_kj)/√2`, `(−iE_jk + iE_kj)/√2` for `j < k`, then `E_jj`.
pub fn hermitian_basis(n: usize) -> Vec<CMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in j + 1..n {
            let mut sym = CMatrix::zeros(n, n);
            sym[(j, k)] = C64::new(s, 0.0);
            sym[(k, j)] = C64::new(s, 0.0);
            out.push(sym);
            let mut asym = CMatrix::zeros(n, n);
            asym[(j, k)] = C64::new(0.0, -s);
            asym[(k, j)] = C64::new(0.0, s);
            out.push(asym);
        }
    }
    for j in 0..n {
        let mut d = CMatrix::zeros(n, n);
        d[(j, j)] = ONE;
        out.push(d);
    }
    out
}

/// `H_I = Σᵢ Rⁱ ⊗ Sⁱ` with hermitian `Rⁱ`, `Sⁱ`.
#[derive(Clone, Debug)]
pub struct InteractionDecomposition {
    pub terms: Vec<(Operator, Operator)>,
    /// Singular values kept, descending; `Rⁱ` carries the weight, `Sⁱ` is unit-norm.
    pub weights: Vec<f64>,
}

impl InteractionDecomposition {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn reconstruct(&self, dims: Dims) -> CMatrix {
        let mut out = CMatrix::zeros(dims.full(), dims.full());
        for (r, s) in &self.terms {
            out += kron(r.matrix(), s.matrix());
        }
        out
    }
}

/// Operator-Schmidt decomposition via the SVD of the real coefficient matrix
/// `c_ab = tr((G_a ⊗ F_b) H_I)` in hermitian bases; singular values below
/// `1e−12·σ_max` are dropped.
pub fn decompose_interaction(hi: &Operator) -> Result<InteractionDecomposition> {
    hi.require(SpaceKind::Full, "decompose_interaction")?;
    require_hermitian(hi.matrix(), "H_I")?;
    let dims = hi.dims();
    let gs = hermitian_basis(dims.system);
    let fs = hermitian_basis(dims.bath);
    let h = hi.matrix();
    let c = DMatrix::<f64>::from_fn(gs.len(), fs.len(), |a, b| {
        // tr((G_a ⊗ F_b) H) = Σ (G_a ⊗ F_b)_{rc} H_{cr}
        let mut acc = ZERO;
        for i in 0..dims.system {
            for j in 0..dims.system {
                let g = gs[a][(i, j)];
                if g == ZERO {
                    continue;
                }
                for al in 0..dims.bath {
                    for be in 0..dims.bath {
                        let f = fs[b][(al, be)];
                        if f != ZERO {
                            acc += g * f * h[(dims.flat(j, be), dims.flat(i, al))];
                        }
                    }
                }
            }
        }
        acc.re
    });
    let svd = c.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let s_max = order.first().map_or(0.0, |&k| svd.singular_values[k]);
    let mut terms = Vec::new();
    let mut weights = Vec::new();
    for k in order {
        let sigma = svd.singular_values[k];
        if sigma <= 1e-12 * s_max || sigma == 0.0 {
            continue;
        }
        let mut r = CMatrix::zeros(dims.system, dims.system);
        for (a, g) in gs.iter().enumerate() {
            r += g * C64::new(sigma * u[(a, k)], 0.0);
        }
        let mut s = CMatrix::zeros(dims.bath, dims.bath);
        for (b, f) in fs.iter().enumerate() {
            s += f * C64::new(vt[(k, b)], 0.0);
        }
        terms.push((Operator::system(r, dims)?, Operator::bath(s, dims)?));
        weights.push(sigma);
    }
    Ok(InteractionDecomposition { terms, weights })
}

/// Bohr components of one system operator: `R̃(t) = Σ_ω e^{iωt} A_ω`.
#[derive(Clone, Debug)]
pub struct BohrComponents {
    pub frequencies: Vec<f64>,
    pub coefficients: Vec<CMatrix>,
}

impl BohrComponents {
    pub fn reconstruct(&self, t: f64) -> CMatrix {
        let n = self.coefficients.first().map_or(0, |c| c.nrows());
        let mut out = CMatrix::zeros(n, n);
        for (w, a) in self.frequencies.iter().zip(&self.coefficients) {
            out += a * (I * (w * t)).exp();
        }
        out
    }
}

/// Distinct Bohr frequencies `(ε_b − ε_a)/ħ` of `h0`, ascending, merged
/// within `1e−9·max|ε|/ħ`, and the `(a, b)` eigenpairs for each.
fn bohr_lines(h0: &CMatrix, hbar: f64) -> Result<(HermitianEigen, Vec<(f64, Vec<(usize, usize)>)>)> {
    let eig = HermitianEigen::new(h0)?;
    let n = eig.values.len();
    let scale = eig.values.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let tol = 1e-9 * scale / hbar;
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            all.push(((eig.values[b] - eig.values[a]) / hbar, a, b));
        }
    }
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut lines: Vec<(f64, Vec<(usize, usize)>)> = Vec::new();
    for (w, a, b) in all {
        match lines.last_mut() {
            Some((w0, members)) if (w - *w0).abs() <= tol => members.push((a, b)),
            _ => lines.push((w, vec![(a, b)])),
        }
    }
    // Represent each merged line by the mean of its members.
    for (w, members) in &mut lines {
        let mean = members
            .iter()
            .map(|&(a, b)| (eig.values[b] - eig.values[a]) / hbar)
            .sum::<f64>()
            / members.len() as f64;
        *w = if mean.abs() <= tol { 0.0 } else { mean };
    }
    Ok((eig, lines))
}

/// `A_ω = Σ_{(a,b): ω_ab ≈ ω} |a⟩⟨a| R |b⟩⟨b|`; zero components are dropped.
pub fn bohr_decomposition(r: &Operator, h0: &Operator, hbar: f64) -> Result<BohrComponents> {
    r.require(SpaceKind::System, "bohr_decomposition")?;
    h0.require(SpaceKind::System, "bohr_decomposition")?;
    let (eig, lines) = bohr_lines(h0.matrix(), hbar)?;
    let v = &eig.vectors;
    let r_eig = v.adjoint() * r.matrix() * v;
    let n = r_eig.nrows();
    let scale = r.norm().max(f64::MIN_POSITIVE);
    let mut frequencies = Vec::new();
    let mut coefficients = Vec::new();
    for (w, members) in lines {
        let mut blk = CMatrix::zeros(n, n);
        for (a, b) in members {
            blk[(a, b)] = r_eig[(a, b)];
        }
        if blk.norm() > 1e-14 * scale {
            frequencies.push(w);
            coefficients.push(v * blk * v.adjoint());
        }
    }
    Ok(BohrComponents {
        frequencies,
        coefficients,
    })
}

/// Bohr components of every `Rⁱ` of a decomposition.
#[derive(Clone, Debug)]
pub struct BohrDecomposition {
    pub terms: Vec<BohrComponents>,
}

impl BohrDecomposition {
    pub fn new(dec: &InteractionDecomposition, h0: &Operator, hbar: f64) -> Result<Self> {
        let terms = dec
            .terms
            .iter()
            .map(|(r, _)| bohr_decomposition(r, h0, hbar))
            .collect::<Result<_>>()?;
        Ok(Self { terms })
    }

    /// Union of all frequencies, ascending.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.terms.iter().flat_map(|t| t.frequencies.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// `Cⁱʲ(τ)` as a finite sum of modes `Σ_k c_k e^{iν_k τ}`.
#[derive(Clone, Debug)]
pub struct BathCorrelator {
    modes: Vec<(C64, f64)>,
}

impl BathCorrelator {
    /// `Σ_{αγβ} Sⁱ_{αγ} Sʲ_{γβ} e^{i(E_γ−E_β)τ/ħ} ρ_{βα}` in the energy basis.
    pub fn new(si: &CMatrix, sj: &CMatrix, rho_b: &CMatrix, energies: &[f64], hbar: f64) -> Self {
        let rs = rho_b * si;
        let d = energies.len();
        let mut modes: Vec<(C64, f64)> = Vec::new();
        for g in 0..d {
            for b in 0..d {
                let c = rs[(b, g)] * sj[(g, b)];
                if c == ZERO {
                    continue;
                }
                let nu = (energies[g] - energies[b]) / hbar;
                match modes.iter_mut().find(|m| m.1 == nu) {
                    Some(m) => m.0 += c,
                    None => modes.push((c, nu)),
                }
            }
        }
        Self { modes }
    }

    pub fn modes(&self) -> &[(C64, f64)] {
        &self.modes
    }

    pub fn at(&self, tau: f64) -> C64 {
        self.modes.iter().map(|&(c, nu)| c * (I * (nu * tau)).exp()).sum()
    }

    /// `∫₀^T e^{−(η+iω)τ} C(τ) dτ` in closed form.
    pub fn transform_exact(&self, omega: f64, horizon: f64, eta: f64) -> C64 {
        self.modes
            .iter()
            .map(|&(c, nu)| {
                let z = C64::new(eta, omega - nu);
                if z.norm() * horizon < 1e-8 {
                    c * horizon * (ONE - z * horizon * 0.5)
                } else {
                    c * (ONE - (-z * horizon).exp()) / z
                }
            })
            .sum()
    }

    /// Same integral by adaptive Gauss–Kronrod quadrature.
    pub fn transform(&self, omega: f64, horizon: f64, eta: f64, tol: f64) -> quad::QuadResult {
        let scale: f64 = self.modes.iter().map(|m| m.0.norm()).sum();
        quad::integrate(
            |tau| (C64::new(-eta * tau, -omega * tau)).exp() * self.at(tau),
            0.0,
            horizon,
            tol * scale.max(1e-300),
            tol,
            20_000,
        )
    }

    /// `∫_a^b |C(τ)| dτ`.
    pub fn abs_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        quad::integrate(|tau| C64::new(self.at(tau).norm(), 0.0), a, b, 1e-14, 1e-10, 20_000)
            .value
            .re
    }
}

fn correlators(m: &ModelSpec, dec: &InteractionDecomposition) -> Vec<Vec<BathCorrelator>> {
    let rho = m.rho_b().matrix();
    let e = m.bath_energies();
    let hbar = m.hbar();
    dec.terms
        .iter()
        .map(|(_, si)| {
            dec.terms
                .iter()
                .map(|(_, sj)| BathCorrelator::new(si.matrix(), sj.matrix(), rho, e, hbar))
                .collect()
        })
        .collect()
}

/// Inputs to [`check_markov_assumptions`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkovCheckOptions {
    /// Largest `t` and `τ` sampled.
    pub horizon: f64,
    /// `|C(τ)|` relative to `max|C(0)|` below which the correlator counts as decayed.
    pub decay_threshold: f64,
    pub samples: usize,
    /// Pass threshold for the first moment and stationarity defect.
    pub tolerance: f64,
}

impl Default for MarkovCheckOptions {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            decay_threshold: 1e-2,
            samples: 200,
            tolerance: 1e-10,
        }
    }
}

/// Diagnostics for the three Markovian assumptions.
#[derive(Clone, Debug)]
pub struct MarkovReport {
    /// `max_t |tr_B{S̃ⁱ(t) ρ_B}|` per term.
    pub first_moment: Vec<f64>,
    /// `max_t |d/dt tr_B{S̃ⁱ(t) ρ_B}|` per term, by central differences.
    pub first_moment_derivative: Vec<f64>,
    /// `max_{t,τ,i,j} |⟨S̃ⁱ(t)S̃ʲ(t−τ)⟩ − ⟨S̃ⁱ(0)S̃ʲ(−τ)⟩|`.
    pub stationarity_defect: f64,
    /// `(τ, max_ij |Cⁱʲ(τ)|)`.
    pub decay_profile: Vec<(f64, f64)>,
    /// First sampled `τ` after which the profile stays below the threshold.
    pub decay_time: Option<f64>,
    /// `max_ij ∫_{τ*}^{horizon} |Cⁱʲ|` (∞ when no decay time was found).
    pub tail_mass: f64,
    pub first_moment_ok: bool,
    pub stationary_ok: bool,
    pub decays: bool,
    pub options: MarkovCheckOptions,
    correlators: Vec<Vec<BathCorrelator>>,
}

impl MarkovReport {
    pub fn correlator(&self, i: usize, j: usize) -> &BathCorrelator {
        &self.correlators[i][j]
    }

    /// Bound on `‖lindblad_rhs − one_point_rhs‖_F` at time `t` for a
    /// generator whose spectral coefficients were integrated to `horizon`:
    /// `2(λ/ħ)² Σ_ij (Σ_ω‖Aⁱ_ω‖)(Σ_ω'‖Aʲ_ω'‖) · 2‖O_S‖ · ∫ |Cⁱʲ|` over the
    /// interval between `t` and `horizon`. Infinite when the first moment or
    /// stationarity assumption fails.
    pub fn generator_defect_bound(
        &self,
        bohr: &BohrDecomposition,
        o_s: &Operator,
        constants: Constants,
        t: f64,
        horizon: f64,
    ) -> f64 {
        if !(self.first_moment_ok && self.stationary_ok) {
            return f64::INFINITY;
        }
        let x = constants.lambda / constants.hbar;
        let a_norm: Vec<f64> = bohr
            .terms
            .iter()
            .map(|c| c.coefficients.iter().map(|a| a.norm()).sum())
            .collect();
        let (lo, hi) = if t <= horizon { (t, horizon) } else { (horizon, t) };
        let mut sum = 0.0;
        for (i, row) in self.correlators.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                sum += a_norm[i] * a_norm[j] * c.abs_integral(lo, hi);
            }
        }
        2.0 * x * x * sum * 2.0 * o_s.norm()
    }
}

/// Samples the first moment, stationarity and decay of the bath correlators.
pub fn check_markov_assumptions(
    m: &ModelSpec,
    dec: &InteractionDecomposition,
    opts: MarkovCheckOptions,
) -> MarkovReport {
    let rho = m.rho_b().matrix();
    let e = m.bath_energies();
    let hbar = m.hbar();
    let d = e.len();
    let n = opts.samples.max(2);
    let ts: Vec<f64> = (0..n).map(|k| opts.horizon * k as f64 / (n - 1) as f64).collect();
    let s_t = |s: &CMatrix, t: f64| {
        CMatrix::from_fn(d, d, |a, b| s[(a, b)] * (-I * ((e[a] - e[b]) * t / hbar)).exp())
    };
    let moment = |s: &CMatrix, t: f64| -> C64 { (s_t(s, t) * rho).trace() };

    let h = 1e-4 * opts.horizon.max(1.0);
    let mut first_moment = Vec::new();
    let mut first_moment_derivative = Vec::new();
    for (_, s) in &dec.terms {
        let s = s.matrix();
        first_moment.push(ts.iter().map(|&t| moment(s, t).norm()).fold(0.0, f64::max));
        first_moment_derivative.push(
            ts.iter()
                .map(|&t| ((moment(s, t + h) - moment(s, t - h)) / (2.0 * h)).norm())
                .fold(0.0, f64::max),
        );
    }

    let cors = correlators(m, dec);
    let coarse: Vec<f64> = ts.iter().copied().step_by((n / 20).max(1)).collect();
    let mut stationarity_defect: f64 = 0.0;
    for (i, (_, si)) in dec.terms.iter().enumerate() {
        for (j, (_, sj)) in dec.terms.iter().enumerate() {
            for &t in &coarse {
                let a = s_t(si.matrix(), t);
                for &tau in &coarse {
                    let b = s_t(sj.matrix(), t - tau);
                    let val = (a.clone() * b * rho).trace();
                    stationarity_defect = stationarity_defect.max((val - cors[i][j].at(tau)).norm());
                }
            }
        }
    }

    let decay_profile: Vec<(f64, f64)> = ts
        .iter()
        .map(|&tau| {
            let v = cors.iter().flatten().map(|c| c.at(tau).norm()).fold(0.0, f64::max);
            (tau, v)
        })
        .collect();
    let c0 = decay_profile.first().map_or(0.0, |p| p.1);
    let thresh = opts.decay_threshold * c0;
    let decay_time = if c0 == 0.0 {
        Some(0.0)
    } else {
        let last_above = decay_profile.iter().rposition(|p| p.1 > thresh);
        match last_above {
            Some(k) if k + 1 < decay_profile.len() => Some(decay_profile[k + 1].0),
            Some(_) => None,
            None => Some(0.0),
        }
    };
    let tail_mass = match decay_time {
        Some(ts) => cors
            .iter()
            .flatten()
            .map(|c| c.abs_integral(ts, opts.horizon))
            .fold(0.0, f64::max),
        None => f64::INFINITY,
    };
    MarkovReport {
        first_moment_ok: first_moment.iter().all(|&v| v <= opts.tolerance),
        first_moment,
        first_moment_derivative,
        stationary_ok: stationarity_defect <= opts.tolerance,
        stationarity_defect,
        decays: decay_time.is_some(),
        decay_profile,
        decay_time,
        tail_mass,
        options: opts,
        correlators: cors,
    }
}

/// Options for [`spectral_coefficients`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralOptions {
    pub horizon: f64,
    /// Allowed change of any `J` when the horizon is doubled.
    pub tolerance: f64,
    /// Regulator `η` in `e^{−ητ}`; 0 disables it.
    pub regulator: f64,
    /// With a regulator, Richardson-extrapolate `J_η` and `J_{η/2}` towards `η → 0`.
    pub extrapolate: bool,
}

impl SpectralOptions {
    pub fn new(horizon: f64, tolerance: f64) -> Self {
        Self {
            horizon,
            tolerance,
            regulator: 0.0,
            extrapolate: false,
        }
    }
}

/// `Jⁱʲ(ω)` on a frequency list.
#[derive(Clone, Debug)]
pub struct SpectralCoefficients {
    pub frequencies: Vec<f64>,
    /// `values[i][j][k] = Jⁱʲ(frequencies[k])`.
    pub values: Vec<Vec<Vec<C64>>>,
    pub horizon: f64,
    pub tolerance: f64,
    pub regulator: f64,
    /// `max |J(2T) − J(T)|`.
    pub defect: f64,
}

impl SpectralCoefficients {
    /// `Jⁱʲ(ω)` for a listed frequency (matched within `1e−9·max(1,|ω|)`).
    pub fn get(&self, i: usize, j: usize, omega: f64) -> Option<C64> {
        let k = self
            .frequencies
            .iter()
            .position(|&w| (w - omega).abs() <= 1e-9 * omega.abs().max(1.0))?;
        Some(self.values[i][j][k])
    }

    /// All-zero coefficients (free evolution).
    pub fn zeros(n_terms: usize, frequencies: Vec<f64>) -> Self {
        let nf = frequencies.len();
        Self {
            frequencies,
            values: vec![vec![vec![ZERO; nf]; n_terms]; n_terms],
            horizon: 0.0,
            tolerance: 0.0,
            regulator: 0.0,
            defect: 0.0,
        }
    }
}

fn j_values(cors: &[Vec<BathCorrelator>], freqs: &[f64], horizon: f64, eta: f64, extrapolate: bool) -> Result<Vec<Vec<Vec<C64>>>> {
    let one = |c: &BathCorrelator, w: f64, eta: f64| -> Result<C64> {
        let r = c.transform(w, horizon, eta, 1e-12);
        if !r.converged {
            return Err(Error::NonConvergent {
                horizon,
                defect: r.error,
            });
        }
        Ok(r.value)
    };
    cors.iter()
        .map(|row| {
            row.iter()
                .map(|c| {
                    freqs
                        .iter()
                        .map(|&w| {
                            if eta > 0.0 && extrapolate {
                                Ok(one(c, w, 0.5 * eta)? * 2.0 - one(c, w, eta)?)
                            } else {
                                one(c, w, eta)
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn max_diff(a: &[Vec<Vec<C64>>], b: &[Vec<Vec<C64>>]) -> f64 {
    a.iter()
        .flatten()
        .flatten()
        .zip(b.iter().flatten().flatten())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `J` integrated to `horizon` with the defect `|J(2T) − J(T)|` recorded but
/// not enforced.
pub fn spectral_coefficients_at_horizon(
    m: &ModelSpec,
    dec: &InteractionDecomposition,
    freqs: &[f64],
    opts: SpectralOptions,
) -> Result<SpectralCoefficients> {
    if !(opts.horizon > 0.0) || opts.regulator < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive and regulator non-negative, got {} and {}",
            opts.horizon, opts.regulator
        )));
    }
    let cors = correlators(m, dec);
    let values = j_values(&cors, freqs, opts.horizon, opts.regulator, opts.extrapolate)?;
    let doubled = j_values(&cors, freqs, 2.0 * opts.horizon, opts.regulator, opts.extrapolate)?;
    Ok(SpectralCoefficients {
        frequencies: freqs.to_vec(),
        defect: max_diff(&values, &doubled),
        values,
        horizon: opts.horizon,
        tolerance: opts.tolerance,
        regulator: opts.regulator,
    })
}

/// `Jⁱʲ(ω)`; fails with [`Error::NonConvergent`] when doubling the horizon
/// changes any value by more than the tolerance.
pub fn spectral_coefficients(
    m: &ModelSpec,
    dec: &InteractionDecomposition,
    freqs: &[f64],
    opts: SpectralOptions,
) -> Result<SpectralCoefficients> {
    let sc = spectral_coefficients_at_horizon(m, dec, freqs, opts)?;
    if sc.defect > opts.tolerance {
        return Err(Error::NonConvergent {
            horizon: opts.horizon,
            defect: sc.defect,
        });
    }
    Ok(sc)
}

/// Which reading of the Markovian generator to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LindbladForm {
    /// `(i/ħ)[H₀, O_S]`, and `Jⁱʲ(ω')` paired with `Aʲ_{ω'}`.
    #[default]
    Derived,
    /// `(i/ħ)H₀O_S`, and `Jⁱʲ(ω)` paired with `Aⁱ†_ω`; the literal one-sided reading.
    Literal,
}

fn dim_check(x: &Operator, dims: Dims) -> Result<()> {
    x.require(SpaceKind::System, "lindblad_rhs")?;
    if x.dims() != dims {
        return Err(Error::dim("lindblad_rhs", format!("{dims:?}"), format!("{:?}", x.dims())));
    }
    Ok(())
}

fn lookup(sc: &SpectralCoefficients, i: usize, j: usize, w: f64) -> Result<C64> {
    sc.get(i, j, w).ok_or_else(|| {
        Error::InvalidArgument(format!("no spectral coefficient J^{i}{j} at ω = {w}"))
    })
}

fn dissipator(x: &CMatrix, bd: &BohrDecomposition, sc: &SpectralCoefficients, form: LindbladForm) -> Result<CMatrix> {
    let n = x.nrows();
    let mut out = CMatrix::zeros(n, n);
    let terms = &bd.terms;
    for (i, ti) in terms.iter().enumerate() {
        for (j, tj) in terms.iter().enumerate() {
            for (wi, ai) in ti.frequencies.iter().zip(&ti.coefficients) {
                let ai_d = ai.adjoint();
                for (wj, aj) in tj.frequencies.iter().zip(&tj.coefficients) {
                    let jv = match form {
                        LindbladForm::Derived => lookup(sc, i, j, *wj)?,
                        LindbladForm::Literal => lookup(sc, i, j, *wi)?,
                    };
                    if jv == ZERO {
                        continue;
                    }
                    out += (&ai_d * aj * x - &ai_d * x * aj) * jv;
                }
            }
        }
    }
    Ok(out)
}

/// Markovian one-point generator:
/// `(i/ħ)[H₀, O_S] + (iλ/ħ)² {D(O_S) + (D(O_S†))†}`.
pub fn lindblad_rhs(
    o_s: &Operator,
    bd: &BohrDecomposition,
    sc: &SpectralCoefficients,
    h0: &Operator,
    constants: Constants,
    form: LindbladForm,
) -> Result<Operator> {
    dim_check(o_s, h0.dims())?;
    h0.require(SpaceKind::System, "lindblad_rhs")?;
    if sc.values.len() != bd.terms.len() {
        return Err(Error::dim("lindblad_rhs", bd.terms.len(), sc.values.len()));
    }
    let x = o_s.matrix();
    let h = h0.matrix();
    let coef = I / constants.hbar;
    let free = match form {
        LindbladForm::Derived => (h * x - x * h) * coef,
        LindbladForm::Literal => h * x * coef,
    };
    let d = dissipator(x, bd, sc, form)?;
    let d_hc = dissipator(&x.adjoint(), bd, sc, form)?.adjoint();
    let g = constants.lambda / constants.hbar;
    Operator::system(free + (d + d_hc) * C64::new(-g * g, 0.0), o_s.dims())
}

/// Bundled inputs of the Markovian generator.
#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    pub bohr: BohrDecomposition,
    pub spectral: SpectralCoefficients,
    pub h0: Operator,
    pub constants: Constants,
    pub form: LindbladForm,
}

impl LindbladGenerator {
    /// Decomposes `H_I`, finds the Bohr frequencies and integrates `J`.
    pub fn from_model(m: &ModelSpec, opts: SpectralOptions) -> Result<Self> {
        let dec = decompose_interaction(m.hi())?;
        let bohr = BohrDecomposition::new(&dec, m.h0(), m.hbar())?;
        let spectral = spectral_coefficients(m, &dec, &bohr.frequencies(), opts)?;
        Ok(Self {
            bohr,
            spectral,
            h0: m.h0().clone(),
            constants: m.constants(),
            form: LindbladForm::Derived,
        })
    }

    pub fn rhs(&self, o_s: &Operator) -> Result<Operator> {
        lindblad_rhs(o_s, &self.bohr, &self.spectral, &self.h0, self.constants, self.form)
    }
}

/// Integrates the Markovian generator from `o0` over `grid`.
pub fn evolve_lindblad(
    o0: &Operator,
    gen: &LindbladGenerator,
    grid: &TimeGrid,
    opts: &OdeOptions,
) -> Result<Vec<Operator>> {
    dim_check(o0, gen.h0.dims())?;
    let n = o0.matrix().nrows();
    let dims = o0.dims();
    // Validate once so the closure cannot fail.
    gen.rhs(o0)?;
    let rhs = |_t: f64, y: &[C64], dy: &mut [C64]| {
        let x = Operator::system(CMatrix::from_column_slice(n, n, y), dims).expect("dims checked");
        let r = gen.rhs(&x).expect("generator inputs checked");
        dy.copy_from_slice(r.matrix().as_slice());
    };
    let states = ode::integrate(rhs, o0.matrix().as_slice(), grid.times(), opts)?;
    states
        .into_iter()
        .map(|y| Operator::system(CMatrix::from_column_slice(n, n, &y), dims))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyson::compute_kernels;
    use crate::hilbert::{matrix_exponential_unitary, pauli, re, DensityMatrix};
    use crate::presets::{self, dephasing_bath, random_model_raw};
    use crate::superop::{one_point_rhs, OnePointTrajectory, SeriesTruncation};

    #[test]
    fn basis_is_orthonormal_and_hermitian() {
        for n in 1..=4 {
            let b = hermitian_basis(n);
            assert_eq!(b.len(), n * n);
            for (x, bx) in b.iter().enumerate() {
                assert!((bx - bx.adjoint()).norm() == 0.0);
                for (y, by) in b.iter().enumerate() {
                    let ip = (bx.adjoint() * by).trace();
                    let want = if x == y { 1.0 } else { 0.0 };
                    assert!((ip - re(want)).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn decomposition_cases() {
        let d = Dims::new(2, 3).unwrap();
        let a = presets::random_hermitian_system(1, d);
        let mut rng_b = presets::random_model(2, 2, 3, 0.1).unwrap().hb().clone();
        rng_b = Operator::bath(rng_b.matrix().clone(), d).unwrap();
        let prod = Operator::full(kron(a.matrix(), rng_b.matrix()), d).unwrap();
        let dec = decompose_interaction(&prod).unwrap();
        assert_eq!(dec.len(), 1);
        assert!((dec.reconstruct(d) - prod.matrix()).norm() < 1e-12 * prod.norm());

        let q = presets::two_qubit(0.3, 1.0, 1.0).unwrap();
        let dq = decompose_interaction(q.hi()).unwrap();
        assert_eq!(dq.len(), 3);
        assert!((dq.weights[0] - dq.weights[2]).abs() < 1e-12);
        assert!((dq.reconstruct(q.dims()) - q.hi().matrix()).norm() < 1e-12);

        for seed in 0..5 {
            let m = presets::random_model(seed, 3, 4, 0.1).unwrap();
            let dm = decompose_interaction(m.hi()).unwrap();
            let err = (dm.reconstruct(m.dims()) - m.hi().matrix()).norm() / m.hi().norm();
            assert!(err < 1e-10, "{err}");
            for (r, s) in &dm.terms {
                assert!(r.is_hermitian(1e-12) && s.is_hermitian(1e-12));
            }
        }
        let bad = presets::random_full(1, d);
        assert!(matches!(decompose_interaction(&bad), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn bohr_cases() {
        let d = Dims::new(2, 2).unwrap();
        let [sx, sy, _] = pauli();
        let r = Operator::system(sx.clone(), d).unwrap();
        let zero = Operator::zeros(SpaceKind::System, d);
        let b0 = bohr_decomposition(&r, &zero, 1.0).unwrap();
        assert_eq!(b0.frequencies, vec![0.0]);
        assert_eq!(b0.coefficients[0], sx);

        let delta = 0.8;
        let h0 = Operator::system(CMatrix::from_row_slice(2, 2, &[re(0.0), re(0.0), re(0.0), re(delta)]), d).unwrap();
        let hbar = 1.3;
        let b = bohr_decomposition(&r, &h0, hbar).unwrap();
        assert_eq!(b.frequencies.len(), 2);
        assert!((b.frequencies[0] + delta / hbar).abs() < 1e-14);
        assert!((b.frequencies[1] - delta / hbar).abs() < 1e-14);
        // ω = −Δ/ħ carries |1⟩⟨0|, ω = +Δ/ħ carries |0⟩⟨1|.
        let lower = CMatrix::from_row_slice(2, 2, &[re(0.0), re(0.0), re(1.0), re(0.0)]);
        assert!((&b.coefficients[0] - &lower).norm() < 1e-14);
        assert!((&b.coefficients[1] - lower.adjoint()).norm() < 1e-14);
        let _ = sy;
    }

    #[test]
    fn bohr_reconstruction_random() {
        for seed in 0..4 {
            let m = presets::random_model(seed, 3, 2, 0.1).unwrap();
            let r = presets::random_hermitian_system(seed + 9, m.dims());
            let b = bohr_decomposition(&r, m.h0(), 1.0).unwrap();
            let eig = HermitianEigen::new(m.h0().matrix()).unwrap();
            let gaps: Vec<f64> = b.frequencies.iter().map(|w| w.abs()).filter(|&w| w > 1e-9).collect();
            let w_min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
            let span = 2.0 * std::f64::consts::PI / w_min;
            for k in 0..10 {
                let t = span * k as f64 / 9.0;
                let u = matrix_exponential_unitary(m.h0(), t, 1.0).unwrap();
                let want = u.matrix() * r.matrix() * u.matrix().adjoint();
                assert!((b.reconstruct(t) - want).norm() < 1e-10);
            }
            // A_ω† = A_{−ω}.
            for (w, a) in b.frequencies.iter().zip(&b.coefficients) {
                let k = b.frequencies.iter().position(|v| (v + w).abs() < 1e-12).unwrap();
                assert!((a.adjoint() - &b.coefficients[k]).norm() < 1e-12);
            }
            let _ = eig;
        }
    }

    #[test]
    fn assumptions_on_presets() {
        let m = dephasing_bath(0.1).unwrap();
        let dec = decompose_interaction(m.hi()).unwrap();
        let rep = check_markov_assumptions(&m, &dec, MarkovCheckOptions { horizon: 12.0, ..Default::default() });
        let tau = rep.decay_time.unwrap();
        assert!(rep.decays && tau > 2.0 && tau < 7.0, "{tau}");
        assert!(rep.tail_mass < 1e-2);
        assert!(rep.first_moment.iter().all(|&v| v < 1e-14));
        assert!(rep.first_moment_derivative.iter().all(|&v| v < 1e-8));
        assert!(rep.stationarity_defect < 1e-12);
        assert!(rep.first_moment_ok && rep.stationary_ok);

        // Two qubits: ⟨S_{2k}⟩ = (ħ/2)(1 − 2c) δ_kz, nonzero except at c = 1/2.
        for (c, zero) in [(0.5, true), (0.2, false)] {
            let q = presets::two_qubit(c, 1.0, 1.0).unwrap();
            let dq = decompose_interaction(q.hi()).unwrap();
            let rq = check_markov_assumptions(&q, &dq, MarkovCheckOptions::default());
            let total: f64 = dq
                .terms
                .iter()
                .zip(&rq.first_moment)
                .map(|((_, s), v)| v * v / s.norm().powi(2))
                .sum();
            // Unit-norm Sⁱ span {S_x, S_y, S_z}, so Σᵢ|tr(Sⁱρ_B)|² = ⟨S_z⟩²/‖S_z‖²
            // with ⟨S_z⟩ = (ħ/2)(1 − 2c) and ‖S_z‖² = ħ²/2.
            let s_z = 0.5 * (1.0 - 2.0 * c);
            assert!((total - s_z * s_z / 0.5).abs() < 1e-12, "{total}");
            assert_eq!(rq.first_moment_ok, zero);
        }
        // Constant correlator: never decays.
        let q = presets::two_qubit(0.5, 1.0, 1.0).unwrap();
        let dq = decompose_interaction(q.hi()).unwrap();
        let rq = check_markov_assumptions(&q, &dq, MarkovCheckOptions::default());
        assert!(!rq.decays && rq.decay_time.is_none() && rq.tail_mass.is_infinite());
    }

    #[test]
    fn non_stationary_bath_is_flagged() {
        let (h0, _, hi, rho0, _, k) = random_model_raw(3, 2, 3, 0.1).unwrap();
        let d = h0.dims();
        let hb = Operator::bath(CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![re(0.0), re(0.7), re(1.9)])), d).unwrap();
        let _ = hb.clone();
        let mut rho = CMatrix::identity(3, 3) * re(1.0 / 3.0);
        rho[(0, 1)] = re(0.1);
        rho[(1, 0)] = re(0.1);
        let rho_b = DensityMatrix::new(Operator::bath(rho, d).unwrap()).unwrap();
        let m = ModelSpec::new(h0, hb, hi, k, rho0, rho_b).unwrap();
        let dec = decompose_interaction(m.hi()).unwrap();
        let rep = check_markov_assumptions(&m, &dec, MarkovCheckOptions::default());
        assert!(!rep.stationary_ok);
        assert!(rep.generator_defect_bound(&BohrDecomposition::new(&dec, m.h0(), 1.0).unwrap(), m.h0(), m.constants(), 1.0, 2.0).is_infinite());
    }

    #[test]
    fn correlator_transform_matches_closed_form() {
        let m = presets::random_model(4, 2, 3, 0.1).unwrap();
        let dec = decompose_interaction(m.hi()).unwrap();
        let cors = correlators(&m, &dec);
        for row in &cors {
            for c in row {
                for (w, eta) in [(0.0, 0.0), (1.3, 0.0), (-0.7, 0.4)] {
                    let q = c.transform(w, 7.0, eta, 1e-13);
                    assert!(q.converged);
                    assert!((q.value - c.transform_exact(w, 7.0, eta)).norm() < 1e-10);
                }
            }
        }
        // Single mode C₀e^{−iΩτ}: J = C₀/(η + i(ω + Ω)) once e^{−ηT} is negligible.
        let single = BathCorrelator { modes: vec![(C64::new(0.3, 0.2), -1.1)] };
        let (eta, w) = (0.5, 0.4);
        let want = C64::new(0.3, 0.2) / C64::new(eta, w + 1.1);
        assert!((single.transform(w, 80.0, eta, 1e-13).value - want).norm() < 1e-10);
        // Zero correlator.
        let zero = BathCorrelator { modes: vec![] };
        assert_eq!(zero.transform(1.0, 5.0, 0.0, 1e-12).value, ZERO);
    }

    #[test]
    fn non_decaying_bath_does_not_converge() {
        let q = presets::two_qubit(0.3, 0.1, 1.0).unwrap();
        let dq = decompose_interaction(q.hi()).unwrap();
        let err = spectral_coefficients(&q, &dq, &[0.0], SpectralOptions::new(5.0, 1e-6));
        assert!(matches!(err, Err(Error::NonConvergent { .. })));
        let at = spectral_coefficients_at_horizon(&q, &dq, &[0.0], SpectralOptions::new(5.0, 1e-6)).unwrap();
        assert!(at.defect > 1.0);
        // With a regulator the horizon converges.
        let reg = SpectralOptions { regulator: 1.0, ..SpectralOptions::new(60.0, 1e-10) };
        assert!(spectral_coefficients(&q, &dq, &[0.0], reg).is_ok());
    }

    fn generator_for(m: &ModelSpec, horizon: f64) -> (InteractionDecomposition, LindbladGenerator) {
        let dec = decompose_interaction(m.hi()).unwrap();
        let bohr = BohrDecomposition::new(&dec, m.h0(), m.hbar()).unwrap();
        let sc = spectral_coefficients_at_horizon(m, &dec, &bohr.frequencies(), SpectralOptions::new(horizon, 1.0)).unwrap();
        let gen = LindbladGenerator {
            bohr,
            spectral: sc,
            h0: m.h0().clone(),
            constants: m.constants(),
            form: LindbladForm::Derived,
        };
        (dec, gen)
    }

    /// `H₀ = (Δ/2)σ_z`, `H_I = σ_x ⊗ S`, diagonal `H_B`, `ρ_B = 𝟙/d_B`: several
    /// Bohr lines, zero first moment, stationary bath.
    fn transverse_model(lambda: f64) -> ModelSpec {
        let d = Dims::new(2, 4).unwrap();
        let [sx, _, sz] = pauli();
        let s = CMatrix::from_fn(4, 4, |a, b| {
            if a == b {
                re([0.5, -0.2, 0.1, -0.4][a])
            } else {
                C64::new(0.3 / (1.0 + (a + b) as f64), 0.1 * (a as f64 - b as f64))
            }
        });
        let hb = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![re(0.0), re(0.45), re(1.2), re(2.1)]));
        ModelSpec::new(
            Operator::system(sz * re(0.35), d).unwrap(),
            Operator::bath(hb, d).unwrap(),
            Operator::full(kron(&sx, &s), d).unwrap(),
            Constants::new(1.0, lambda).unwrap(),
            DensityMatrix::maximally_mixed(SpaceKind::System, d),
            DensityMatrix::maximally_mixed(SpaceKind::Bath, d),
        )
        .unwrap()
    }

    #[test]
    fn finite_time_generator_equals_second_order_rhs() {
        for (m, t) in [(transverse_model(0.07), 1.7), (dephasing_bath(0.05).unwrap(), 2.3)] {
            let (_, gen) = generator_for(&m, t);
            let ks = compute_kernels(&m, 2, &TimeGrid::new(vec![0.0, t]).unwrap()).unwrap();
            for seed in 0..3 {
                let o = presets::random_hermitian_system(seed, m.dims());
                let trunc = SeriesTruncation::new(2, m.lambda()).unwrap();
                let traj = OnePointTrajectory::from_value("o", t, o.clone(), trunc).unwrap();
                let exact = one_point_rhs(&traj, t, &ks, m.rho_b()).unwrap();
                let lind = gen.rhs(&o).unwrap();
                let diff = (exact.matrix() - lind.matrix()).norm();
                assert!(diff < 1e-11 * (1.0 + exact.norm()), "{diff}");
            }
            // The literal reading does not reproduce the exact generator.
            let literal = LindbladGenerator { form: LindbladForm::Literal, ..gen.clone() };
            let o = presets::random_hermitian_system(5, m.dims());
            let trunc = SeriesTruncation::new(2, m.lambda()).unwrap();
            let traj = OnePointTrajectory::from_value("o", t, o.clone(), trunc).unwrap();
            let exact = one_point_rhs(&traj, t, &ks, m.rho_b()).unwrap();
            assert!((literal.rhs(&o).unwrap().matrix() - exact.matrix()).norm() > 1e-3);
        }
    }

    #[test]
    fn identity_and_hermiticity() {
        let m = transverse_model(0.1);
        let (_, gen) = generator_for(&m, 3.0);
        let id = Operator::identity(SpaceKind::System, m.dims());
        assert!(gen.rhs(&id).unwrap().norm() < 1e-12);
        for seed in 0..5 {
            let o = presets::random_hermitian_system(seed, m.dims());
            let r = gen.rhs(&o).unwrap();
            assert!((r.matrix() - r.matrix().adjoint()).norm() < 1e-10 * (1.0 + r.norm()));
        }
        // The literal first term breaks identity fixity whenever H₀ ≠ 0.
        let literal = LindbladGenerator { form: LindbladForm::Literal, ..gen.clone() };
        assert!(literal.rhs(&id).unwrap().norm() > 1e-3);
        // J ≡ 0 leaves the free Heisenberg equation.
        let free = LindbladGenerator {
            spectral: SpectralCoefficients::zeros(gen.bohr.terms.len(), gen.bohr.frequencies()),
            ..gen.clone()
        };
        let o = presets::random_hermitian_system(1, m.dims());
        let h = m.h0().matrix();
        let want = (h * o.matrix() - o.matrix() * h) * I;
        assert!((free.rhs(&o).unwrap().matrix() - want).norm() < 1e-14);
    }

    #[test]
    fn lindblad_evolution() {
        let m = dephasing_bath(0.1).unwrap();
        let (dec, gen) = generator_for(&m, 6.0);
        let grid = TimeGrid::uniform(5.0, 10).unwrap();
        let opts = OdeOptions::default();
        let id = Operator::identity(SpaceKind::System, m.dims());
        for x in evolve_lindblad(&id, &gen, &grid, &opts).unwrap() {
            assert!((x.matrix() - id.matrix()).norm() < 1e-12);
        }
        // Coherence σ₊ = |0⟩⟨1|: rotates at Δ/ħ and decays at 4(λ/ħ)² Re J(0)
        // per unit |R|², here R ∝ σ_z with weight w.
        let mut sp = CMatrix::zeros(2, 2);
        sp[(0, 1)] = ONE;
        let sp = Operator::system(sp, m.dims()).unwrap();
        let traj = evolve_lindblad(&sp, &gen, &grid, &opts).unwrap();
        let j0 = gen.spectral.get(0, 0, 0.0).unwrap();
        let (r, _) = &dec.terms[0];
        let r2 = (r.matrix() * r.matrix())[(0, 0)].re;
        let lam = m.lambda();
        let gamma = 4.0 * lam * lam * j0.re * r2;
        for (x, &t) in traj.iter().zip(grid.times()) {
            let want = (C64::new(-gamma * t, presets::dephasing::SPLITTING * t)).exp();
            assert!((x.matrix()[(0, 1)] - want).norm() < 1e-9, "t = {t}");
            assert!(x.matrix()[(1, 0)].norm() < 1e-12);
        }
        assert!(gamma > 0.0);

        // J = 0 and diagonal H₀: pure phase rotation.
        let free = LindbladGenerator {
            spectral: SpectralCoefficients::zeros(gen.bohr.terms.len(), gen.bohr.frequencies()),
            ..gen
        };
        let traj = evolve_lindblad(&sp, &free, &grid, &opts).unwrap();
        for (x, &t) in traj.iter().zip(grid.times()) {
            assert!((x.matrix()[(0, 1)] - (I * t).exp()).norm() < 1e-10);
        }
    }
}
