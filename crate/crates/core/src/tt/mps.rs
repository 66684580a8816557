use faer::Mat;

use super::{
    add_cores, bond_dims, check_bonds, compress, from_row_major, row_major, split_leading,
    svd_desc, Tensor3, TruncationPolicy,
};
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

/// Open-boundary matrix product state over binary sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Mps {
    cores: Vec<Tensor3>,
}

impl Mps {
    pub fn from_cores(cores: Vec<Tensor3>) -> Result<Self> {
        check_bonds(&cores)?;
        if let Some((k, c)) = cores.iter().enumerate().find(|(_, c)| c.phys() != 2) {
            return Err(Error::InvalidConfig(format!(
                "MPS core {k} has physical dimension {}",
                c.phys()
            )));
        }
        Ok(Self { cores })
    }

    /// All-zero state with unit bonds.
    pub fn zeros(sites: usize) -> Self {
        Self {
            cores: (0..sites).map(|_| Tensor3::zeros(1, 2, 1)).collect(),
        }
    }

    /// Product state with every site equal to `(a, b)`; scaled by `factor`.
    pub fn product(sites: usize, site: [f64; 2], factor: f64) -> Self {
        let mut cores: Vec<Tensor3> = (0..sites)
            .map(|_| Tensor3::from_vec(1, 2, 1, site.to_vec()).expect("1x2x1 core"))
            .collect();
        cores[0] = cores[0].scaled(factor);
        Self { cores }
    }

    pub fn sites(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[Tensor3] {
        &self.cores
    }

    /// `[r_0, ..., r_L]`.
    pub fn bond_dims(&self) -> Vec<usize> {
        bond_dims(&self.cores)
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Contracts the chain into the length-`2^L` vector (big-endian).
    pub fn to_vec(&self) -> Vec<f64> {
        // rows: already-contracted prefixes, cols: open right bond
        let mut acc = Mat::<f64>::from_fn(1, 1, |_, _| 1.0);
        for core in &self.cores {
            let next = &acc * core.right_unfolding();
            let prefixes = acc.nrows() * 2;
            // (P, 2r) row-major is (2P, r) row-major
            acc = from_row_major(prefixes, core.right(), &row_major(&next));
        }
        (0..acc.nrows()).map(|i| acc[(i, 0)]).collect()
    }

    /// Multiplies the first core by `factor`.
    pub fn scale(&self, factor: f64) -> Self {
        let mut cores = self.cores.clone();
        cores[0] = cores[0].scaled(factor);
        Self { cores }
    }

    pub fn add(&self, other: &Mps) -> Result<Self> {
        Ok(Self {
            cores: add_cores(&self.cores, &other.cores)?,
        })
    }

    /// Element-wise product: site-wise Kronecker product of cores.
    pub fn hadamard(&self, other: &Mps) -> Result<Self> {
        if self.sites() != other.sites() {
            return Err(Error::SiteMismatch(self.sites(), other.sites()));
        }
        let cores = self
            .cores
            .iter()
            .zip(&other.cores)
            .map(|(x, y)| {
                let (xl, xr, yl, yr) = (x.left(), x.right(), y.left(), y.right());
                let mut data = Vec::with_capacity(xl * yl * 2 * xr * yr);
                for a in 0..xl {
                    for c in 0..yl {
                        for p in 0..2 {
                            for b in 0..xr {
                                let xv = x.get(a, p, b);
                                data.extend((0..yr).map(|d| xv * y.get(c, p, d)));
                            }
                        }
                    }
                }
                Tensor3::from_vec(xl * yl, 2, xr * yr, data).expect("kron shape")
            })
            .collect();
        Ok(Self { cores })
    }

    /// Right-canonicalizes, then truncates left to right. Returns the
    /// compressed state and the sum of discarded squared singular values.
    pub fn truncate(&self, policy: &TruncationPolicy) -> (Self, f64) {
        let mut cores = self.cores.clone();
        let discarded = compress(&mut cores, policy);
        (Self { cores }, discarded)
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest left-orthonormality defect over all cores but the last.
    pub fn left_canonical_error(&self) -> f64 {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(Tensor3::left_orthonormality_error)
            .fold(0.0, f64::max)
    }
}

/// Successive-SVD encoding of a raw vector of length `2^L`.
/// Returns the left-canonical MPS and the discarded squared singular values.
pub fn encode_values(values: &[f64], policy: &TruncationPolicy) -> Result<(Mps, f64)> {
    let n = values.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let sites = n.trailing_zeros() as usize;
    if values.iter().all(|&v| v == 0.0) {
        return Ok((Mps::zeros(sites), 0.0));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "cannot encode non-finite values".into(),
        ));
    }
    let mut cores = Vec::with_capacity(sites);
    let mut discarded = 0.0;
    let mut rank = 1;
    let mut rest = values.to_vec();
    for k in 0..sites - 1 {
        let cols = n >> (k + 1);
        let m = from_row_major(rank * 2, cols, &rest);
        let (u, s, vt) =
            svd_desc(&m).ok_or_else(|| Error::InvalidConfig("SVD failed while encoding".into()))?;
        let keep = policy.kept(&s);
        discarded += s[keep..].iter().map(|v| v * v).sum::<f64>();
        let (u, sv) = split_leading(&u, &s, &vt, keep);
        cores.push(Tensor3::from_left_unfolding(&u, 2));
        rest = row_major(&sv);
        rank = keep;
    }
    cores.push(Tensor3::from_vec(rank, 2, 1, rest)?);
    Ok((Mps { cores }, discarded))
}

pub fn encode_mps(field: &Field, policy: &TruncationPolicy) -> Result<Mps> {
    Ok(encode_values(field.values(), policy)?.0)
}

pub fn decode_mps(mps: &Mps, spec: GridSpec) -> Result<Field> {
    if mps.sites() != spec.sites() {
        return Err(Error::SiteMismatch(mps.sites(), spec.sites()));
    }
    Field::new(spec, mps.to_vec())
}
