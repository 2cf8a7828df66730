//! Image-operator families `{O_{αβ}}` and their exact dynamics.

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, DensityMatrix, Dims, Operator, SpaceKind, C64, I, ZERO};
use crate::ode::{self, OdeOptions, TimeGrid};
use crate::oracle::{self, total_hamiltonian, ModelSpec};

/// A `d_B × d_B` family of system-space blocks, `blocks[α][β] = T_α† X T_β`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFamily {
    dims: Dims,
    time: f64,
    blocks: Vec<CMatrix>,
}

impl ImageFamily {
    pub fn zeros(dims: Dims, time: f64) -> Self {
        let ds = dims.system;
        Self {
            dims,
            time,
            blocks: vec![CMatrix::zeros(ds, ds); dims.bath * dims.bath],
        }
    }

    /// `o · δ_{αβ}`.
    pub fn diagonal(o: &CMatrix, dims: Dims, time: f64) -> Self {
        let mut f = Self::zeros(dims, time);
        for a in 0..dims.bath {
            *f.block_mut(a, a) = o.clone();
        }
        f
    }

    /// `𝟙_S · δ_{αβ}`.
    pub fn identity(dims: Dims, time: f64) -> Self {
        Self::diagonal(&CMatrix::identity(dims.system, dims.system), dims, time)
    }

    /// Family from explicit blocks in row-major `(α, β)` order.
    pub fn from_blocks(dims: Dims, time: f64, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != dims.bath * dims.bath {
            return Err(Error::dim(
                "ImageFamily::from_blocks",
                dims.bath * dims.bath,
                blocks.len(),
            ));
        }
        if let Some(b) = blocks
            .iter()
            .find(|b| b.nrows() != dims.system || b.ncols() != dims.system)
        {
            return Err(Error::dim(
                "ImageFamily::from_blocks",
                format!("{0}x{0}", dims.system),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
        Ok(Self { dims, time, blocks })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    #[inline]
    pub fn block(&self, alpha: usize, beta: usize) -> &CMatrix {
        &self.blocks[alpha * self.dims.bath + beta]
    }

    #[inline]
    pub fn block_mut(&mut self, alpha: usize, beta: usize) -> &mut CMatrix {
        let db = self.dims.bath;
        &mut self.blocks[alpha * db + beta]
    }

    pub fn block_op(&self, alpha: usize, beta: usize) -> Result<Operator> {
        if alpha >= self.dims.bath || beta >= self.dims.bath {
            return Err(Error::IndexOutOfRange {
                index: alpha.max(beta),
                dim: self.dims.bath,
            });
        }
        Operator::system(self.block(alpha, beta).clone(), self.dims)
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    /// Family of `X†`: `(X†)_{αβ} = (X_{βα})†`.
    pub fn dagger(&self) -> Self {
        let db = self.dims.bath;
        let mut out = Self::zeros(self.dims, self.time);
        for a in 0..db {
            for b in 0..db {
                *out.block_mut(a, b) = self.block(b, a).adjoint();
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            dims: self.dims,
            time: self.time,
            blocks: self.blocks.iter().map(|b| b * c).collect(),
        }
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, c: C64, other: &ImageFamily) {
        debug_assert_eq!(self.dims, other.dims);
        for (x, y) in self.blocks.iter_mut().zip(&other.blocks) {
            *x += y * c;
        }
    }

    /// Frobenius norm of the whole family.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &ImageFamily) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Full-space matrix `Σ_{αβ} T_α X_{αβ} T_β†`.
    pub(crate) fn to_full_matrix(&self) -> CMatrix {
        let d = self.dims;
        CMatrix::from_fn(d.full(), d.full(), |r, c| {
            let (i, a) = (r / d.bath, r % d.bath);
            let (j, b) = (c / d.bath, c % d.bath);
            self.block(a, b)[(i, j)]
        })
    }

    pub(crate) fn from_full_matrix(m: &CMatrix, dims: Dims, time: f64) -> Self {
        let mut f = Self::zeros(dims, time);
        for a in 0..dims.bath {
            for b in 0..dims.bath {
                *f.block_mut(a, b) = CMatrix::from_fn(dims.system, dims.system, |i, j| {
                    m[(dims.flat(i, a), dims.flat(j, b))]
                });
            }
        }
        f
    }

    fn check_compatible(&self, other: &ImageFamily, context: &'static str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dim(
                context,
                format!("{:?}", self.dims),
                format!("{:?}", other.dims),
            ));
        }
        Ok(())
    }
}

/// Projection `T_α = Σ_i |iα⟩⟨i|` from the system into the full space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProjectionMap {
    alpha: usize,
    dims: Dims,
}

impl ProjectionMap {
    pub fn new(alpha: usize, dims: Dims) -> Result<Self> {
        if alpha >= dims.bath {
            return Err(Error::IndexOutOfRange {
                index: alpha,
                dim: dims.bath,
            });
        }
        Ok(Self { alpha, dims })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// `(d_S·d_B) × d_S` matrix of `T_α`.
    pub fn matrix(&self) -> CMatrix {
        oracle::projection_matrix(self.dims, self.alpha)
    }
}

/// Image family of a full-space operator.
pub fn to_image_family(x: &Operator) -> Result<ImageFamily> {
    x.require(SpaceKind::Full, "to_image_family")?;
    Ok(ImageFamily::from_full_matrix(x.matrix(), x.dims(), 0.0))
}

/// Reassembles the full-space operator of a family.
pub fn from_image_family(f: &ImageFamily) -> Result<Operator> {
    Operator::full(f.to_full_matrix(), f.dims)
}

/// `(f1 f2)_{αβ} = Σ_γ f1_{αγ} f2_{γβ}`. The result carries `f2`'s time.
pub fn compose_images(f1: &ImageFamily, f2: &ImageFamily) -> Result<ImageFamily> {
    f1.check_compatible(f2, "compose_images")?;
    Ok(compose_raw(f1, f2))
}

pub(crate) fn compose_raw(f1: &ImageFamily, f2: &ImageFamily) -> ImageFamily {
    let db = f1.dims.bath;
    let mut out = ImageFamily::zeros(f1.dims, f2.time);
    for a in 0..db {
        for b in 0..db {
            let blk = out.block_mut(a, b);
            for g in 0..db {
                blk.gemm(C64::new(1.0, 0.0), f1.block(a, g), f2.block(g, b), C64::new(1.0, 0.0));
            }
        }
    }
    out
}

/// `Σ_{αβ} f_{αβ} ρ_B[β, α]`.
pub fn contract_with_bath(f: &ImageFamily, rho_b: &DensityMatrix) -> Result<Operator> {
    if rho_b.kind() != SpaceKind::Bath || rho_b.dims().bath != f.dims.bath {
        return Err(Error::dim(
            "contract_with_bath",
            format!("bath state with d_B = {}", f.dims.bath),
            format!("{} state with {:?}", rho_b.kind(), rho_b.dims()),
        ));
    }
    Operator::system(contract_raw(f, rho_b.matrix()), f.dims)
}

pub(crate) fn contract_raw(f: &ImageFamily, rho: &CMatrix) -> CMatrix {
    let db = f.dims.bath;
    let ds = f.dims.system;
    let mut out = CMatrix::zeros(ds, ds);
    for a in 0..db {
        for b in 0..db {
            let w = rho[(b, a)];
            if w != ZERO {
                out += f.block(a, b) * w;
            }
        }
    }
    out
}

/// Integrates the coupled block equations
/// `dO_{αβ}/dt = (i/ħ) Σ_γ (H_{αγ} O_{γβ} − O_{αγ} H_{γβ})`
/// from `O_{αβ}(0) = o0 δ_{αβ}` and returns the family at every grid point.
pub fn evolve_images_exact(
    m: &ModelSpec,
    o0: &Operator,
    grid: &TimeGrid,
    opts: &OdeOptions,
) -> Result<Vec<ImageFamily>> {
    o0.require(SpaceKind::System, "evolve_images_exact")?;
    let dims = m.dims();
    if o0.dims() != dims {
        return Err(Error::dim(
            "evolve_images_exact",
            format!("{dims:?}"),
            format!("{:?}", o0.dims()),
        ));
    }
    let h = to_image_family(&total_hamiltonian(m)?)?;
    let hbar = m.hbar();
    let ds = dims.system;
    let db = dims.bath;
    let block_len = ds * ds;

    let init = ImageFamily::diagonal(o0.matrix(), dims, 0.0);
    let y0 = flatten(&init);
    let unflatten = |y: &[C64], t: f64| -> ImageFamily {
        let blocks = (0..db * db)
            .map(|k| CMatrix::from_column_slice(ds, ds, &y[k * block_len..(k + 1) * block_len]))
            .collect();
        ImageFamily {
            dims,
            time: t,
            blocks,
        }
    };
    let coeff = I / hbar;
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        let o = unflatten(y, t);
        let ho = compose_raw(&h, &o);
        let oh = compose_raw(&o, &h);
        for k in 0..db * db {
            let d = (&ho.blocks[k] - &oh.blocks[k]) * coeff;
            dy[k * block_len..(k + 1) * block_len].copy_from_slice(d.as_slice());
        }
    };
    let states = ode::integrate(rhs, &y0, grid.times(), opts)?;
    Ok(states
        .iter()
        .zip(grid.times())
        .map(|(y, &t)| unflatten(y, t))
        .collect())
}

fn flatten(f: &ImageFamily) -> Vec<C64> {
    f.blocks.iter().flat_map(|b| b.as_slice().iter().copied()).collect()
}
