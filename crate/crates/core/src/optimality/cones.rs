//! Tangent cones of boxes and polyhedra, and their dual cones.

use nalgebra::{DMatrix, DVector};

use crate::directions::{dedup_directions, signed_axes, sphere_net};
use crate::error::{Error, Result};

/// Largest dimension handled by exact extreme-ray enumeration.
pub const ENUMERATION_MAX_DIM: usize = 3;
/// Net size per dimension used by sampled cones.
pub const SAMPLED_NET_PER_DIM: usize = 64;
const RAY_TOL: f64 = 1e-9;
const NET_SEED: u64 = 0xc0e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    FullSpace,
    Polyhedral,
    Sampled,
}

/// Polyhedral cone kept in both forms: K = cone(generators) = {g | (a, g) ≤ 0 for a in normals}.
/// The zero cone has no generators and normals ±eᵢ; the full space has neither.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeApprox {
    dim: usize,
    generators: Vec<DVector<f64>>,
    normals: Vec<DVector<f64>>,
    kind: ConeKind,
}

impl ConeApprox {
    pub fn full_space(dim: usize) -> Self {
        Self {
            dim,
            generators: Vec::new(),
            normals: Vec::new(),
            kind: ConeKind::FullSpace,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            generators: Vec::new(),
            normals: signed_axes(dim),
            kind: ConeKind::Polyhedral,
        }
    }

    /// {g | (a, g) ≤ 0 for every row a}.
    pub fn from_normals(dim: usize, normals: &[DVector<f64>]) -> Result<Self> {
        let normals = unit_rows(dim, normals)?;
        if normals.is_empty() {
            return Ok(Self::full_space(dim));
        }
        if dim > ENUMERATION_MAX_DIM {
            let generators = sampled_members(dim, &normals);
            return Ok(Self {
                dim,
                generators,
                normals,
                kind: ConeKind::Sampled,
            });
        }
        let generators = extreme_rays(dim, &normals);
        if generators.is_empty() {
            return Ok(Self::zero(dim));
        }
        // Irredundant normals are the extreme rays of the polar.
        let normals = extreme_rays(dim, &generators);
        if normals.is_empty() {
            return Ok(Self::full_space(dim));
        }
        Ok(Self {
            dim,
            generators,
            normals,
            kind: ConeKind::Polyhedral,
        })
    }

    /// Conic hull of the given vectors.
    pub fn from_generators(dim: usize, generators: &[DVector<f64>]) -> Result<Self> {
        let generators = unit_rows(dim, generators)?;
        if generators.is_empty() {
            return Ok(Self::zero(dim));
        }
        if dim > ENUMERATION_MAX_DIM {
            return Err(Error::UnsupportedCone("generator form needs dimension at most 3"));
        }
        let normals = extreme_rays(dim, &generators);
        if normals.is_empty() {
            return Ok(Self::full_space(dim));
        }
        Self::from_normals(dim, &normals)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ConeKind {
        self.kind
    }

    pub fn generators(&self) -> &[DVector<f64>] {
        &self.generators
    }

    pub fn normals(&self) -> &[DVector<f64>] {
        &self.normals
    }

    pub fn is_full_space(&self) -> bool {
        self.kind == ConeKind::FullSpace
    }

    pub fn is_zero(&self) -> bool {
        self.kind != ConeKind::FullSpace && self.generators.is_empty()
    }

    pub fn contains(&self, g: &DVector<f64>, tol: f64) -> bool {
        let scale = g.norm().max(1.0);
        self.normals.iter().all(|a| a.dot(g) <= tol * scale)
    }

    /// Unit directions of `net` lying in the cone, followed by the generators.
    pub fn directions(&self, net: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = net
            .iter()
            .filter(|g| self.contains(g, RAY_TOL))
            .map(|g| g / g.norm())
            .collect();
        out.extend(self.generators.iter().cloned());
        dedup_directions(out, 1e-9)
    }
}

fn unit_rows(dim: usize, rows: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        let n = r.norm();
        if n > 0.0 && n.is_finite() {
            out.push(r / n);
        }
    }
    Ok(dedup_directions(out, 1e-12))
}

fn sampled_members(dim: usize, normals: &[DVector<f64>]) -> Vec<DVector<f64>> {
    sphere_net(dim, SAMPLED_NET_PER_DIM * dim, NET_SEED)
        .into_iter()
        .filter(|g| normals.iter().all(|a| a.dot(g) <= RAY_TOL))
        .collect()
}

/// Orthonormal basis of the null space of the rows.
fn null_space(dim: usize, rows: &[&DVector<f64>]) -> Vec<DVector<f64>> {
    if rows.is_empty() {
        return (0..dim).map(|i| DVector::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    }
    // Pad to a square matrix so the SVD yields a full right basis.
    let m = rows.len().max(dim);
    let a = DMatrix::from_fn(m, dim, |i, j| if i < rows.len() { rows[i][j] } else { 0.0 });
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max().max(1.0);
    (0..dim)
        .filter(|&k| svd.singular_values[k] <= 1e-10 * smax)
        .map(|k| v_t.row(k).transpose())
        .collect()
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Generators of {g | (a, g) ≤ 0}: ± a basis of the lineality space plus
/// the extreme rays of the pointed part. Empty when the cone is {0}.
fn extreme_rays(dim: usize, normals: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let refs: Vec<&DVector<f64>> = normals.iter().collect();
    let lineality = null_space(dim, &refs);
    let feasible = |d: &DVector<f64>| normals.iter().all(|a| a.dot(d) <= RAY_TOL);
    let mut out = Vec::new();
    for l in &lineality {
        out.push(l.clone());
        out.push(-l);
    }
    let pointed_dim = dim - lineality.len();
    if pointed_dim == 0 {
        return dedup_directions(out, 1e-9);
    }
    for subset in subsets(normals.len(), pointed_dim - 1) {
        let mut eq: Vec<&DVector<f64>> = subset.iter().map(|&i| &normals[i]).collect();
        eq.extend(lineality.iter());
        let null = null_space(dim, &eq);
        if null.len() != 1 {
            continue;
        }
        for d in [null[0].clone(), -&null[0]] {
            if feasible(&d) {
                out.push(d);
            }
        }
    }
    dedup_directions(out, 1e-9)
}

/// Dual cone K⁺ = {w | (v, w) ≥ 0 for all v in K}.
pub fn polar_cone(k: &ConeApprox) -> Result<ConeApprox> {
    match k.kind {
        ConeKind::FullSpace => Ok(ConeApprox::zero(k.dim)),
        ConeKind::Polyhedral => {
            if k.generators.is_empty() {
                return Ok(ConeApprox::full_space(k.dim));
            }
            let normals: Vec<DVector<f64>> = k.generators.iter().map(|g| -g).collect();
            let generators: Vec<DVector<f64>> = k.normals.iter().map(|a| -a).collect();
            Ok(ConeApprox {
                dim: k.dim,
                generators,
                normals,
                kind: ConeKind::Polyhedral,
            })
        }
        ConeKind::Sampled => {
            // K⁺ = −K°, and K° is generated by the normals of K.
            let generators: Vec<DVector<f64>> = k.normals.iter().map(|a| -a).collect();
            let normals: Vec<DVector<f64>> = k.generators.iter().map(|g| -g).collect();
            if normals.is_empty() {
                return Ok(ConeApprox::full_space(k.dim));
            }
            Ok(ConeApprox {
                dim: k.dim,
                generators,
                normals,
                kind: ConeKind::Sampled,
            })
        }
    }
}

/// Feasible set Ω.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    None,
    Box { lower: DVector<f64>, upper: DVector<f64> },
    /// {x | A x ≤ b}.
    Polyhedron { a: DMatrix<f64>, b: DVector<f64> },
}

impl Constraint {
    pub fn is_none(&self) -> bool {
        matches!(self, Constraint::None)
    }

    /// Rows (a, b) of the inequality description.
    fn rows(&self, dim: usize) -> Result<Vec<(DVector<f64>, f64)>> {
        match self {
            Constraint::None => Ok(Vec::new()),
            Constraint::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: if lower.len() != dim { lower.len() } else { upper.len() },
                    });
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
                    return Err(Error::InvalidArgument("box needs lower <= upper".into()));
                }
                let mut rows = Vec::new();
                for i in 0..dim {
                    let e = DVector::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 });
                    if lower[i].is_finite() {
                        rows.push((-&e, -lower[i]));
                    }
                    if upper[i].is_finite() {
                        rows.push((e, upper[i]));
                    }
                }
                Ok(rows)
            }
            Constraint::Polyhedron { a, b } => {
                if a.ncols() != dim || a.nrows() != b.len() {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: a.ncols(),
                    });
                }
                Ok((0..a.nrows()).map(|i| (a.row(i).transpose(), b[i])).collect())
            }
        }
    }

    /// Largest constraint violation at x (0 when feasible).
    pub fn violation(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self
            .rows(x.len())?
            .iter()
            .map(|(a, b)| (a.dot(x) - b) / a.norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max))
    }
}

/// Active-constraint tolerance, relative to max(1, |b|).
pub const ACTIVE_TOL: f64 = 1e-9;

/// K(x₀, Ω) = {g | (aᵢ, g) ≤ 0 for active rows}.
pub fn tangent_cone(omega: &Constraint, x0: &DVector<f64>) -> Result<ConeApprox> {
    let n = x0.len();
    let mut active = Vec::new();
    for (a, b) in omega.rows(n)? {
        let slack = b - a.dot(x0);
        let tol = ACTIVE_TOL * b.abs().max(1.0) * a.norm().max(1.0);
        if slack < -tol {
            return Err(Error::Infeasible { violation: -slack });
        }
        if slack <= tol {
            active.push(a);
        }
    }
    ConeApprox::from_normals(n, &active)
}
