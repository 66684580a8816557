//! Quantized tensor trains: a length-`2^L` vector is reshaped into `L`
//! binary indices (site 0 is the most significant bit) and factored into a
//! chain of cores.
//!
//! Both [`Mps`] and [`Mpo`] store their cores as [`Tensor3`] with shape
//! `(left, phys, right)`. MPS cores have `phys = 2`; MPO cores fuse the
//! output and input bits into `phys = 4` with index `2 * out + in`.

mod io;
mod mpo;
mod mps;

pub use io::{read_tt, write_mpo, write_mps, TtText};
pub use mpo::{derivative_mpos, shift_mpo, Mpo, Shift};
pub use mps::{decode_mps, encode_mps, encode_values, Mps};

use faer::Mat;

use crate::error::{Error, Result};

/// Bond cap and relative singular-value cutoff for SVD truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    max_chi: usize,
    svd_cutoff: f64,
}

impl TruncationPolicy {
    pub const DEFAULT_CUTOFF: f64 = 1e-12;

    pub fn new(max_chi: usize, svd_cutoff: f64) -> Result<Self> {
        if max_chi == 0 {
            return Err(Error::InvalidConfig("max_chi must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&svd_cutoff) {
            return Err(Error::InvalidConfig(format!(
                "svd_cutoff must lie in [0, 1), got {svd_cutoff}"
            )));
        }
        Ok(Self {
            max_chi,
            svd_cutoff,
        })
    }

    /// Bond cap `chi` with the default cutoff.
    pub fn with_chi(max_chi: usize) -> Result<Self> {
        Self::new(max_chi, Self::DEFAULT_CUTOFF)
    }

    /// Keeps every nonzero singular value.
    pub fn unlimited() -> Self {
        Self {
            max_chi: usize::MAX,
            svd_cutoff: 0.0,
        }
    }

    pub fn max_chi(&self) -> usize {
        self.max_chi
    }

    pub fn svd_cutoff(&self) -> f64 {
        self.svd_cutoff
    }

    /// Number of singular values kept from a descending list; at least one.
    pub fn kept(&self, singular_values: &[f64]) -> usize {
        let Some(&largest) = singular_values.first() else {
            return 0;
        };
        let threshold = self.svd_cutoff * largest;
        let above = singular_values
            .iter()
            .take_while(|&&s| s > threshold)
            .count();
        above.min(self.max_chi).max(1)
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            max_chi: usize::MAX,
            svd_cutoff: Self::DEFAULT_CUTOFF,
        }
    }
}

/// Dense order-3 tensor stored row-major over `(left, phys, right)`.
///
/// The flat buffer doubles as the row-major left unfolding
/// `(left * phys) x right` and the right unfolding `left x (phys * right)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    left: usize,
    phys: usize,
    right: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(left: usize, phys: usize, right: usize) -> Self {
        Self {
            left,
            phys,
            right,
            data: vec![0.0; left * phys * right],
        }
    }

    pub fn from_vec(left: usize, phys: usize, right: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != left * phys * right {
            return Err(Error::LengthMismatch {
                expected: left * phys * right,
                got: data.len(),
            });
        }
        Ok(Self {
            left,
            phys,
            right,
            data,
        })
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn phys(&self) -> usize {
        self.phys
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.left, self.phys, self.right)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, a: usize, p: usize, b: usize) -> f64 {
        self.data[(a * self.phys + p) * self.right + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, p: usize, b: usize, value: f64) {
        self.data[(a * self.phys + p) * self.right + b] = value;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..*self
        }
    }

    fn left_unfolding(&self) -> Mat<f64> {
        from_row_major(self.left * self.phys, self.right, &self.data)
    }

    fn right_unfolding(&self) -> Mat<f64> {
        from_row_major(self.left, self.phys * self.right, &self.data)
    }

    fn from_left_unfolding(m: &Mat<f64>, phys: usize) -> Self {
        let (rows, right) = (m.nrows(), m.ncols());
        Self {
            left: rows / phys,
            phys,
            right,
            data: row_major(m),
        }
    }

    fn from_right_unfolding(m: &Mat<f64>, phys: usize) -> Self {
        let (left, cols) = (m.nrows(), m.ncols());
        Self {
            left,
            phys,
            right: cols / phys,
            data: row_major(m),
        }
    }

    /// Contracts `matrix` (shape `left' x left`) into the left bond.
    fn absorb_left(&self, matrix: &Mat<f64>) -> Self {
        let product = matrix * self.right_unfolding();
        Self::from_right_unfolding(&product, self.phys)
    }

    /// Contracts `matrix` (shape `right x right'`) into the right bond.
    fn absorb_right(&self, matrix: &Mat<f64>) -> Self {
        let product = self.left_unfolding() * matrix;
        Self::from_left_unfolding(&product, self.phys)
    }

    /// Max deviation of `sum_{a,p} T[a,p,b] T[a,p,b']` from the identity.
    pub fn left_orthonormality_error(&self) -> f64 {
        let m = self.left_unfolding();
        let gram = m.transpose() * &m;
        let eye = Mat::<f64>::identity(self.right, self.right);
        (gram - eye).norm_max()
    }
}

pub(crate) fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
    debug_assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

pub(crate) fn row_major(m: &Mat<f64>) -> Vec<f64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        out.extend((0..cols).map(|j| m[(i, j)]));
    }
    out
}

/// Thin SVD `m = U diag(s) Vt` with singular values in descending order.
/// `None` when the input is non-finite or the iteration fails.
fn svd_desc(m: &Mat<f64>) -> Option<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    if !m.is_all_finite() {
        return None;
    }
    let svd = m.thin_svd().ok()?;
    let s: Vec<f64> = (0..svd.S().dim()).map(|i| svd.S()[i]).collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u = svd.U();
    let v = svd.V();
    let u_sorted = Mat::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let vt_sorted = Mat::from_fn(order.len(), v.nrows(), |i, j| v[(j, order[i])]);
    let s_sorted = order.iter().map(|&k| s[k]).collect();
    Some((u_sorted, s_sorted, vt_sorted))
}

/// Keeps the leading `keep` columns of `u` and the matching rows of
/// `diag(s) vt`.
fn split_leading(u: &Mat<f64>, s: &[f64], vt: &Mat<f64>, keep: usize) -> (Mat<f64>, Mat<f64>) {
    let left = u.get(.., ..keep).to_owned();
    let right = Mat::from_fn(keep, vt.ncols(), |i, j| s[i] * vt[(i, j)]);
    (left, right)
}

pub(crate) fn check_bonds(cores: &[Tensor3]) -> Result<()> {
    if cores.is_empty() {
        return Err(Error::InvalidConfig(
            "tensor train needs at least one core".into(),
        ));
    }
    if cores[0].left != 1 {
        return Err(Error::BondMismatch {
            bond: 0,
            left: 1,
            right: cores[0].left,
        });
    }
    let last = cores.len() - 1;
    if cores[last].right != 1 {
        return Err(Error::BondMismatch {
            bond: cores.len(),
            left: cores[last].right,
            right: 1,
        });
    }
    for (k, pair) in cores.windows(2).enumerate() {
        if pair[0].right != pair[1].left {
            return Err(Error::BondMismatch {
                bond: k + 1,
                left: pair[0].right,
                right: pair[1].left,
            });
        }
    }
    Ok(())
}

pub(crate) fn bond_dims(cores: &[Tensor3]) -> Vec<usize> {
    let mut bonds = Vec::with_capacity(cores.len() + 1);
    bonds.push(cores.first().map_or(1, |c| c.left));
    bonds.extend(cores.iter().map(|c| c.right));
    bonds
}

/// Right-to-left LQ sweep: every core except the first becomes
/// right-orthonormal. Also trims bonds to the unfolding ranks' upper bound.
pub(crate) fn right_canonicalize(cores: &mut [Tensor3]) {
    for k in (1..cores.len()).rev() {
        let phys = cores[k].phys;
        // M = L Q  <=>  M^T = Q^T L^T
        let qr = cores[k].right_unfolding().transpose().qr();
        let q = qr.compute_thin_Q();
        let r = qr.thin_R().to_owned();
        cores[k] = Tensor3::from_right_unfolding(&q.transpose().to_owned(), phys);
        cores[k - 1] = cores[k - 1].absorb_right(&r.transpose().to_owned());
    }
}

/// Left-to-right SVD truncation sweep. Assumes cores right of the current
/// site are right-orthonormal so that each SVD sees true Schmidt values.
/// Returns the summed discarded squared singular values.
pub(crate) fn truncate_sweep(cores: &mut [Tensor3], policy: &TruncationPolicy) -> f64 {
    let mut discarded = 0.0;
    for k in 0..cores.len().saturating_sub(1) {
        let phys = cores[k].phys;
        let Some((u, s, vt)) = svd_desc(&cores[k].left_unfolding()) else {
            return poison(cores);
        };
        let keep = policy.kept(&s);
        discarded += s[keep..].iter().map(|v| v * v).sum::<f64>();
        let (u, sv) = split_leading(&u, &s, &vt, keep);
        cores[k] = Tensor3::from_left_unfolding(&u, phys);
        cores[k + 1] = cores[k + 1].absorb_left(&sv);
    }
    discarded
}

/// Replaces a train that overflowed with unit-bond NaN cores.
fn poison(cores: &mut [Tensor3]) -> f64 {
    for c in cores.iter_mut() {
        *c = Tensor3::zeros(1, c.phys, 1).scaled(f64::NAN);
    }
    f64::NAN
}

/// Canonicalize then truncate; the shared compression kernel for MPS and MPO.
///
/// Non-finite input collapses to a unit-bond NaN train with NaN weight.
pub(crate) fn compress(cores: &mut [Tensor3], policy: &TruncationPolicy) -> f64 {
    if cores.iter().any(|c| c.data.iter().any(|v| !v.is_finite())) {
        return poison(cores);
    }
    right_canonicalize(cores);
    truncate_sweep(cores, policy)
}

/// Block-diagonal core sum used by MPS and MPO addition.
pub(crate) fn add_cores(a: &[Tensor3], b: &[Tensor3]) -> Result<Vec<Tensor3>> {
    if a.len() != b.len() {
        return Err(Error::SiteMismatch(a.len(), b.len()));
    }
    let sites = a.len();
    let mut out = Vec::with_capacity(sites);
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        if x.phys != y.phys {
            return Err(Error::InvalidConfig(format!(
                "physical dimension mismatch at site {k}: {} vs {}",
                x.phys, y.phys
            )));
        }
        let phys = x.phys;
        let first = k == 0;
        let last = k + 1 == sites;
        let left = if first { 1 } else { x.left + y.left };
        let right = if last { 1 } else { x.right + y.right };
        let mut core = Tensor3::zeros(left, phys, right);
        let (ya, yb) = (
            if first { 0 } else { x.left },
            if last { 0 } else { x.right },
        );
        for p in 0..phys {
            for a in 0..x.left {
                for c in 0..x.right {
                    core.set(a, p, c, x.get(a, p, c));
                }
            }
            for a in 0..y.left {
                for c in 0..y.right {
                    let v = core.get(a + ya, p, c + yb) + y.get(a, p, c);
                    core.set(a + ya, p, c + yb, v);
                }
            }
        }
        out.push(core);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_validation() {
        assert!(TruncationPolicy::new(0, 0.0).is_err());
        assert!(TruncationPolicy::new(3, 1.0).is_err());
        assert!(TruncationPolicy::new(3, -0.1).is_err());
        let p = TruncationPolicy::with_chi(4).unwrap();
        assert_eq!(p.max_chi(), 4);
        assert_eq!(p.svd_cutoff(), 1e-12);
    }

    #[test]
    fn kept_counts() {
        let p = TruncationPolicy::new(2, 0.1).unwrap();
        assert_eq!(p.kept(&[10.0, 5.0, 3.0]), 2);
        assert_eq!(p.kept(&[10.0, 0.5, 0.1]), 1);
        assert_eq!(p.kept(&[0.0, 0.0]), 1);
        let u = TruncationPolicy::unlimited();
        assert_eq!(u.kept(&[1.0, 1e-300, 0.0]), 2);
    }

    #[test]
    fn unfoldings_share_buffer() {
        let t = Tensor3::from_vec(2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        let l = t.left_unfolding();
        let r = t.right_unfolding();
        assert_eq!((l.nrows(), l.ncols()), (4, 3));
        assert_eq!((r.nrows(), r.ncols()), (2, 6));
        assert_eq!(l[(3, 1)], t.get(1, 1, 1));
        assert_eq!(r[(1, 4)], t.get(1, 1, 1));
        assert_eq!(Tensor3::from_left_unfolding(&l, 2), t);
        assert_eq!(Tensor3::from_right_unfolding(&r, 2), t);
    }
}
