use faer::Mat;

use super::{add_cores, bond_dims, check_bonds, compress, Mps, Tensor3, TruncationPolicy};
use crate::error::{Error, Result};

/// Matrix product operator. Core `k` has shape `(b_{k-1}, 2, 2, b_k)`,
/// stored as a [`Tensor3`] with fused physical index `2 * out + in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpo {
    cores: Vec<Tensor3>,
}

/// Direction of a cyclic grid shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    /// `(S u)_i = u_{i+1}`
    Forward,
    /// `(S u)_i = u_{i-1}`
    Backward,
}

impl Mpo {
    /// Largest `L` accepted by [`Mpo::to_dense`].
    pub const DENSE_GUARD: usize = 12;

    pub fn from_cores(cores: Vec<Tensor3>) -> Result<Self> {
        check_bonds(&cores)?;
        if let Some((k, c)) = cores.iter().enumerate().find(|(_, c)| c.phys() != 4) {
            return Err(Error::InvalidConfig(format!(
                "MPO core {k} has fused physical dimension {}",
                c.phys()
            )));
        }
        Ok(Self { cores })
    }

    pub fn identity(sites: usize) -> Self {
        let core = Tensor3::from_vec(1, 4, 1, vec![1.0, 0.0, 0.0, 1.0]).expect("1x4x1 core");
        Self {
            cores: vec![core; sites],
        }
    }

    pub fn sites(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[Tensor3] {
        &self.cores
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        bond_dims(&self.cores)
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Element `(out, in)` of core `k` between bonds `a` and `b`.
    pub fn entry(&self, k: usize, a: usize, out: usize, inp: usize, b: usize) -> f64 {
        self.cores[k].get(a, 2 * out + inp, b)
    }

    /// Multiplies the first core by `factor`.
    pub fn scale(&self, factor: f64) -> Self {
        let mut cores = self.cores.clone();
        cores[0] = cores[0].scaled(factor);
        Self { cores }
    }

    pub fn add(&self, other: &Mpo) -> Result<Self> {
        Ok(Self {
            cores: add_cores(&self.cores, &other.cores)?,
        })
    }

    /// SVD compression treating each core as a 4-dimensional site.
    pub fn compress(&self, policy: &TruncationPolicy) -> (Self, f64) {
        let mut cores = self.cores.clone();
        let discarded = compress(&mut cores, policy);
        (Self { cores }, discarded)
    }

    /// Operator product `self * other` (apply `other` first).
    pub fn compose(&self, other: &Mpo) -> Result<Self> {
        if self.sites() != other.sites() {
            return Err(Error::SiteMismatch(self.sites(), other.sites()));
        }
        let cores = self
            .cores
            .iter()
            .zip(&other.cores)
            .map(|(x, y)| {
                let (xl, xr, yl, yr) = (x.left(), x.right(), y.left(), y.right());
                let mut core = Tensor3::zeros(xl * yl, 4, xr * yr);
                for a in 0..xl {
                    for c in 0..yl {
                        for b in 0..xr {
                            for d in 0..yr {
                                for out in 0..2 {
                                    for inp in 0..2 {
                                        let v: f64 = (0..2)
                                            .map(|mid| {
                                                x.get(a, 2 * out + mid, b)
                                                    * y.get(c, 2 * mid + inp, d)
                                            })
                                            .sum();
                                        core.set(a * yl + c, 2 * out + inp, b * yr + d, v);
                                    }
                                }
                            }
                        }
                    }
                }
                core
            })
            .collect();
        Ok(Self { cores })
    }

    /// Contracts the operator with an MPS; bonds multiply (`b_k * r_k`).
    pub fn apply(&self, mps: &Mps) -> Result<Mps> {
        if self.sites() != mps.sites() {
            return Err(Error::SiteMismatch(self.sites(), mps.sites()));
        }
        let cores = self
            .cores
            .iter()
            .zip(mps.cores())
            .map(|(w, m)| {
                let (wl, wr, ml, mr) = (w.left(), w.right(), m.left(), m.right());
                let mut core = Tensor3::zeros(wl * ml, 2, wr * mr);
                for a in 0..wl {
                    for b in 0..wr {
                        for out in 0..2 {
                            let w0 = w.get(a, 2 * out, b);
                            let w1 = w.get(a, 2 * out + 1, b);
                            if w0 == 0.0 && w1 == 0.0 {
                                continue;
                            }
                            for c in 0..ml {
                                for d in 0..mr {
                                    let v = w0 * m.get(c, 0, d) + w1 * m.get(c, 1, d);
                                    core.set(a * ml + c, out, b * mr + d, v);
                                }
                            }
                        }
                    }
                }
                core
            })
            .collect();
        Mps::from_cores(cores)
    }

    /// Materializes the `2^L x 2^L` matrix (row = output index).
    pub fn to_dense(&self) -> Result<Mat<f64>> {
        let sites = self.sites();
        if sites > Self::DENSE_GUARD {
            return Err(Error::TooLarge {
                what: "mpo_to_dense",
                got: sites,
                max: Self::DENSE_GUARD,
            });
        }
        // acc[(row, col)][bond]: partial operator over the leading sites
        let mut dim = 1usize;
        let mut bond = 1usize;
        let mut acc = vec![1.0f64];
        for core in &self.cores {
            let right = core.right();
            let new_dim = dim * 2;
            let mut next = vec![0.0; new_dim * new_dim * right];
            for row in 0..dim {
                for col in 0..dim {
                    let base = (row * dim + col) * bond;
                    for a in 0..bond {
                        let v = acc[base + a];
                        if v == 0.0 {
                            continue;
                        }
                        for out in 0..2 {
                            for inp in 0..2 {
                                let r = row * 2 + out;
                                let c = col * 2 + inp;
                                let dst = (r * new_dim + c) * right;
                                for b in 0..right {
                                    next[dst + b] += v * core.get(a, 2 * out + inp, b);
                                }
                            }
                        }
                    }
                }
            }
            acc = next;
            dim = new_dim;
            bond = right;
        }
        Ok(super::from_row_major(dim, dim, &acc))
    }
}

/// Cyclic shift by one grid point as a bond-2 MPO.
///
/// The bond carries the carry (forward) or borrow (backward) bit of the
/// binary increment, propagating from the least significant site towards
/// site 0. The overflow out of site 0 is summed, which wraps the index.
pub fn shift_mpo(sites: usize, direction: Shift) -> Result<Mpo> {
    if sites == 0 {
        return Err(Error::InvalidGrid(
            "shift MPO needs at least one site".into(),
        ));
    }
    // generic core W[carry_out, out, in, carry_in]
    let mut bulk = Tensor3::zeros(2, 4, 2);
    for carry_in in 0..2 {
        for out in 0..2 {
            let (inp, carry_out) = match direction {
                // in = out + 1 with carry
                Shift::Forward => ((out + carry_in) % 2, (out + carry_in) / 2),
                // in = out - 1 with borrow
                Shift::Backward => ((out + 2 - carry_in) % 2, usize::from(out < carry_in)),
            };
            bulk.set(carry_out, 2 * out + inp, carry_in, 1.0);
        }
    }
    let left_boundary = super::from_row_major(1, 2, &[1.0, 1.0]);
    let right_boundary = super::from_row_major(2, 1, &[0.0, 1.0]);
    let mut cores = vec![bulk; sites];
    cores[0] = cores[0].absorb_left(&left_boundary);
    let last = sites - 1;
    cores[last] = cores[last].absorb_right(&right_boundary);
    Mpo::from_cores(cores)
}

/// Periodic central-difference operators `D1 = (S+ - S-) / (2 dx)` and
/// `D2 = (S+ - 2 I + S-) / dx^2` as bond-3 MPOs with integer cores.
///
/// The bond state is idle, carry (from `S+`) or borrow (from `S-`). The
/// right boundary weights each term of the stencil; once a carry or borrow
/// is absorbed the paths merge into the idle state. Scale factors sit on the
/// first core.
pub fn derivative_mpos(sites: usize, dx: f64) -> Result<(Mpo, Mpo)> {
    if sites < 2 {
        return Err(Error::InvalidGrid(format!(
            "derivative MPOs need at least 2 sites, got {sites}"
        )));
    }
    if !(dx.is_finite() && dx > 0.0) {
        return Err(Error::InvalidGrid(format!("dx must be positive, got {dx}")));
    }
    let d1 = stencil_mpo(sites, [0.0, 1.0, -1.0])?;
    let d2 = stencil_mpo(sites, [-2.0, 1.0, 1.0])?;
    Ok((d1.scale(1.0 / (2.0 * dx)), d2.scale(1.0 / (dx * dx))))
}

/// `w0 I + w1 S+ + w2 S-` with states idle = 0, carry = 1, borrow = 2.
fn stencil_mpo(sites: usize, weights: [f64; 3]) -> Result<Mpo> {
    let mut bulk = Tensor3::zeros(3, 4, 3);
    for out in 0..2 {
        bulk.set(0, 2 * out + out, 0, 1.0);
        // in = out + 1 with carry
        let inp = (out + 1) % 2;
        bulk.set(if out == 1 { 1 } else { 0 }, 2 * out + inp, 1, 1.0);
        // in = out - 1 with borrow
        bulk.set(if out == 0 { 2 } else { 0 }, 2 * out + inp, 2, 1.0);
    }
    let left_boundary = super::from_row_major(1, 3, &[1.0, 1.0, 1.0]);
    let right_boundary = super::from_row_major(3, 1, &weights);
    let mut cores = vec![bulk; sites];
    cores[0] = cores[0].absorb_left(&left_boundary);
    let last = sites - 1;
    cores[last] = cores[last].absorb_right(&right_boundary);
    Mpo::from_cores(cores)
}
