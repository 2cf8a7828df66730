//! Interaction picture and the Dyson kernels.
//!
//! With `V(t) = e^{−i(H₀+H_B)t/ħ}` the interaction-picture Hamiltonian is
//! `H̃_I(t) = V H_I V†`, i.e. `H̃_{Iαβ}(t) = U₀ H_{Iαβ} U₀† e^{−i(E_α−E_β)t/ħ}`.
//! The interaction propagator `Ũ(t) = e^{−iHt/ħ} e^{i(H₀+H_B)t/ħ}` obeys
//! `dŨ/dt = −(iλ/ħ) Ũ H̃_I(t)`, so its Dyson coefficients
//! `Ũ = Σ_n (−iλ/ħ)ⁿ K̃⁽ⁿ⁾` satisfy
//!
//! ```text
//! d/dt K̃⁽ⁿ⁾_{αβ}(t) = Σ_γ K̃⁽ⁿ⁻¹⁾_{αγ}(t) H̃_{Iγβ}(t),   K̃⁽⁰⁾ = δ,  K̃⁽ⁿ⁾(0) = 0,
//! ```
//!
//! that is `K̃⁽ⁿ⁾(t) = ∫_{0<tₙ<…<t₁<t} H̃(tₙ)⋯H̃(t₁)`, the earliest time on the
//! left. The Heisenberg-frame kernels are `K⁽ⁿ⁾ = V† K̃⁽ⁿ⁾ V`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{kron, CMatrix, Constants, Dims, HermitianEigen, C64, I, ONE};
use crate::image::{compose_raw, to_image_family, ImageFamily};
use crate::ode::{self, OdeOptions, TimeGrid};
use crate::oracle::ModelSpec;

/// Default highest kernel order.
pub const DEFAULT_ORDER: usize = 4;

/// Free evolution data: `U₀(t) = e^{−iH₀t/ħ}` and the bath energies.
#[derive(Clone, Debug)]
pub struct InteractionFrame {
    dims: Dims,
    h0_mat: CMatrix,
    h0: HermitianEigen,
    bath_energies: Vec<f64>,
    constants: Constants,
}

impl InteractionFrame {
    pub fn new(m: &ModelSpec) -> Result<Self> {
        Ok(Self {
            dims: m.dims(),
            h0_mat: m.h0().matrix().clone(),
            h0: HermitianEigen::new(m.h0().matrix())?,
            bath_energies: m.bath_energies().to_vec(),
            constants: m.constants(),
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn constants(&self) -> Constants {
        self.constants
    }

    pub fn bath_energies(&self) -> &[f64] {
        &self.bath_energies
    }

    pub fn h0(&self) -> &CMatrix {
        &self.h0_mat
    }

    pub fn u0(&self, t: f64) -> CMatrix {
        self.h0.propagator(t, self.constants.hbar)
    }

    /// Full-space `V(t) = U₀(t) ⊗ e^{−iH_B t/ħ}`.
    pub(crate) fn free_propagator(&self, t: f64) -> CMatrix {
        let hbar = self.constants.hbar;
        let db = self.dims.bath;
        let phases = CMatrix::from_fn(db, db, |a, b| {
            if a == b {
                (-I * (self.bath_energies[a] * t / hbar)).exp()
            } else {
                C64::default()
            }
        });
        kron(&self.u0(t), &phases)
    }

    fn phase(&self, alpha: usize, beta: usize, t: f64) -> C64 {
        let de = self.bath_energies[alpha] - self.bath_energies[beta];
        (I * (de * t / self.constants.hbar)).exp()
    }

    /// `X̃_{αβ} = e^{−i(E_α−E_β)t/ħ} U₀ X_{αβ} U₀†`.
    pub fn to_interaction(&self, f: &ImageFamily, t: f64) -> ImageFamily {
        let u = self.u0(t);
        let ud = u.adjoint();
        self.conjugate(f, &u, &ud, t, false)
    }

    /// `X_{αβ} = e^{i(E_α−E_β)t/ħ} U₀† X̃_{αβ} U₀`.
    pub fn to_heisenberg(&self, f: &ImageFamily, t: f64) -> ImageFamily {
        let u = self.u0(t);
        let ud = u.adjoint();
        self.conjugate(f, &ud, &u, t, true)
    }

    fn conjugate(&self, f: &ImageFamily, left: &CMatrix, right: &CMatrix, t: f64, forward: bool) -> ImageFamily {
        let db = self.dims.bath;
        let mut out = ImageFamily::zeros(self.dims, f.time());
        for a in 0..db {
            for b in 0..db {
                let p = self.phase(a, b, t);
                let p = if forward { p } else { p.conj() };
                *out.block_mut(a, b) = left * f.block(a, b) * right * p;
            }
        }
        out
    }
}

/// `H̃_{Iαβ}(t)`.
pub fn interaction_hamiltonian_images(m: &ModelSpec, t: f64) -> Result<ImageFamily> {
    let frame = InteractionFrame::new(m)?;
    Ok(frame.to_interaction(&to_image_family(m.hi())?, t).with_time(t))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub ode: OdeOptions,
    /// Refuse requests above this order.
    pub order_cap: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            order_cap: 12,
        }
    }
}

/// Kernels `K̃⁽ⁿ⁾_{αβ}(t)` and `K⁽ⁿ⁾_{αβ}(t)` for `n = 0…n_max` on a time grid.
#[derive(Clone, Debug)]
pub struct KernelSet {
    grid: TimeGrid,
    n_max: usize,
    frame: InteractionFrame,
    hi: ImageFamily,
    tilde: Vec<Vec<ImageFamily>>,
    heis: Vec<Vec<ImageFamily>>,
}

impl KernelSet {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dims(&self) -> Dims {
        self.frame.dims
    }

    pub fn constants(&self) -> Constants {
        self.frame.constants
    }

    pub fn frame(&self) -> &InteractionFrame {
        &self.frame
    }

    /// Schrödinger-picture images `H_{Iαβ}`.
    pub fn hi_images(&self) -> &ImageFamily {
        &self.hi
    }

    /// Grid index of `t`.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.grid.index_of(t).ok_or(Error::TimeNotOnGrid(t))
    }

    fn check_order(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(Error::OrderExceedsKernels {
                requested: n,
                available: self.n_max,
            });
        }
        Ok(())
    }

    /// `K̃⁽ⁿ⁾(t)` for a grid time `t`.
    pub fn tilde_k(&self, n: usize, t: f64) -> Result<&ImageFamily> {
        self.check_order(n)?;
        Ok(&self.tilde[n][self.time_index(t)?])
    }

    /// `K⁽ⁿ⁾(t)` for a grid time `t`.
    pub fn k(&self, n: usize, t: f64) -> Result<&ImageFamily> {
        self.check_order(n)?;
        Ok(&self.heis[n][self.time_index(t)?])
    }

    /// `𝒟K⁽ⁿ⁾ = dK⁽ⁿ⁾/dt − (i/ħ)[H₀, K⁽ⁿ⁾]`, evaluated in closed form as
    /// `(i/ħ)(E_α−E_β) K⁽ⁿ⁾_{αβ} + Σ_γ K⁽ⁿ⁻¹⁾_{αγ} H_{Iγβ}`.
    pub fn k_derivative(&self, n: usize, t: f64) -> Result<ImageFamily> {
        self.check_order(n)?;
        let idx = self.time_index(t)?;
        let dims = self.dims();
        if n == 0 {
            return Ok(ImageFamily::zeros(dims, t));
        }
        let k = &self.heis[n][idx];
        let mut out = compose_raw(&self.heis[n - 1][idx], &self.hi);
        let e = &self.frame.bath_energies;
        let hbar = self.frame.constants.hbar;
        for a in 0..dims.bath {
            for b in 0..dims.bath {
                let c = I * ((e[a] - e[b]) / hbar);
                let add = k.block(a, b) * c;
                *out.block_mut(a, b) += add;
            }
        }
        Ok(out.with_time(t))
    }
}

/// Kernels to order `n_max` on `grid`, default options.
pub fn compute_kernels(m: &ModelSpec, n_max: usize, grid: &TimeGrid) -> Result<KernelSet> {
    compute_kernels_with(m, n_max, grid, &KernelOptions::default())
}

pub fn compute_kernels_with(
    m: &ModelSpec,
    n_max: usize,
    grid: &TimeGrid,
    opts: &KernelOptions,
) -> Result<KernelSet> {
    if n_max > opts.order_cap {
        return Err(Error::InvalidArgument(format!(
            "kernel order {n_max} exceeds the cap {}",
            opts.order_cap
        )));
    }
    let dims = m.dims();
    let frame = InteractionFrame::new(m)?;
    let hi = to_image_family(m.hi())?;
    let d = dims.full();
    let len = d * d;
    let hi_full = m.hi().matrix().clone();

    let tilde_full: Vec<Vec<CMatrix>> = if n_max == 0 {
        vec![Vec::new(); grid.len()]
    } else {
        let y0 = vec![C64::default(); n_max * len];
        let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
            let v = frame.free_propagator(t);
            let ht = &v * &hi_full * v.adjoint();
            dy[..len].copy_from_slice(ht.as_slice());
            for n in 2..=n_max {
                let prev = CMatrix::from_column_slice(d, d, &y[(n - 2) * len..(n - 1) * len]);
                let d_n = prev * &ht;
                dy[(n - 1) * len..n * len].copy_from_slice(d_n.as_slice());
            }
        };
        let states = ode::integrate(rhs, &y0, grid.times(), &opts.ode)?;
        states
            .into_iter()
            .map(|y| {
                (0..n_max)
                    .map(|n| CMatrix::from_column_slice(d, d, &y[n * len..(n + 1) * len]))
                    .collect()
            })
            .collect()
    };

    let mut tilde = vec![Vec::with_capacity(grid.len()); n_max + 1];
    let mut heis = vec![Vec::with_capacity(grid.len()); n_max + 1];
    for (ti, &t) in grid.times().iter().enumerate() {
        let v = frame.free_propagator(t);
        let vd = v.adjoint();
        tilde[0].push(ImageFamily::identity(dims, t));
        heis[0].push(ImageFamily::identity(dims, t));
        for n in 1..=n_max {
            let kt = &tilde_full[ti][n - 1];
            tilde[n].push(ImageFamily::from_full_matrix(kt, dims, t));
            heis[n].push(ImageFamily::from_full_matrix(&(&vd * kt * &v), dims, t));
        }
    }
    Ok(KernelSet {
        grid: grid.clone(),
        n_max,
        frame,
        hi,
        tilde,
        heis,
    })
}

/// `Ũ_{αβ}(t) = Σ_{n ≤ order} (−iλ/ħ)ⁿ K̃⁽ⁿ⁾_{αβ}(t)`.
pub fn dyson_propagator(ks: &KernelSet, lambda: f64, order: usize, t: f64) -> Result<ImageFamily> {
    ks.check_order(order)?;
    let idx = ks.time_index(t)?;
    let c = -I * (lambda / ks.constants().hbar);
    let mut out = ImageFamily::zeros(ks.dims(), t);
    let mut w = ONE;
    for n in 0..=order {
        out.add_scaled(w, &ks.tilde[n][idx]);
        w *= c;
    }
    Ok(out)
}

/// First-order interaction-picture image `Õ_{αβ} = O δ_{αβ} + (iλ/ħ)[K̃⁽¹⁾_{αβ}(t), O]`.
pub fn image_first_order(
    o: &crate::hilbert::Operator,
    ks: &KernelSet,
    lambda: f64,
    t: f64,
) -> Result<ImageFamily> {
    o.require(crate::hilbert::SpaceKind::System, "image_first_order")?;
    let k1 = ks.tilde_k(1, t)?;
    let dims = ks.dims();
    let om = o.matrix();
    let c = I * (lambda / ks.constants().hbar);
    let mut out = ImageFamily::diagonal(om, dims, t);
    for a in 0..dims.bath {
        for b in 0..dims.bath {
            let k = k1.block(a, b);
            let add = (k * om - om * k) * c;
            *out.block_mut(a, b) += add;
        }
    }
    Ok(out)
}
