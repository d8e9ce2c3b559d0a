//! Steklov averages over frozen images and their derivatives.
//!
//! φ(x) is the mean of f over x + D(x); φ′ the mean of f′. ψ averages φ over
//! x + D(x) once more, with the inner image taken from the field at the inner
//! point. All quadrature is seeded: the same spec gives bit-identical results
//! at any thread count.

mod quadrature;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use quadrature::{average, nodes, sample_unit_ball, Average, NodeSet, QuadratureMethod, QuadratureSpec};

use crate::corpus::{GradStatus, LipschitzFunction};
use crate::error::{Error, Result};
use crate::mapping::{Image, ImageField};

/// Relative finite-difference step for gradients (times the half-width).
pub const GRAD_STEP: f64 = 1e-3;
/// Relative finite-difference step for Hessians (times the half-width).
pub const HESS_STEP: f64 = 1e-2;
/// Base jitter used to step off gradient ties, times max(L, 1).
pub const TIE_JITTER: f64 = 1e-12;
const TIE_ATTEMPTS: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedValue<T> {
    pub value: T,
    /// Standard error of the mean (Monte Carlo); 0 for tensor grids.
    pub stderr: f64,
    pub n_evals: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_dim(f: &LipschitzFunction, x: &DVector<f64>) -> Result<()> {
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: x.len(),
        });
    }
    Ok(())
}

fn check_image(image: &Image, dim: usize) -> Result<()> {
    if image.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: image.dim(),
        });
    }
    if !(image.half_width > 0.0 && image.half_width.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "image half-width must be positive, got {}",
            image.half_width
        )));
    }
    Ok(())
}

fn check_step(x: &[f64], h: f64) -> Result<()> {
    let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if !(h > 16.0 * f64::EPSILON * scale) {
        return Err(Error::StepUnderflow { step: h });
    }
    Ok(())
}

fn eval_checked(f: &LipschitzFunction, p: &[f64]) -> Result<f64> {
    let v = f.eval(p);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            point: p.to_vec(),
            message: format!("non-finite value {v}"),
        })
    }
}

/// Gradient samples for one function: the analytic handle with tie jitter,
/// or central differences of f at a fixed step when no handle exists.
pub(crate) struct GradOracle<'a> {
    f: &'a LipschitzFunction,
    jitter_dir: Vec<f64>,
    jitter_base: f64,
}

impl<'a> GradOracle<'a> {
    pub(crate) fn new(f: &'a LipschitzFunction, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7135_a3d1_9e37_79b9);
        let mut dir: Vec<f64> = (0..f.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&dir).max(1e-300);
        dir.iter_mut().for_each(|d| *d /= n);
        Self {
            f,
            jitter_dir: dir,
            jitter_base: TIE_JITTER * f.lipschitz_const().max(1.0),
        }
    }

    /// Writes f′(p) into `out`; `fd_step` is used only without a handle.
    pub(crate) fn grad(&self, p: &[f64], fd_step: f64, out: &mut [f64]) -> Result<()> {
        if !self.f.has_grad() {
            let mut q = p.to_vec();
            for j in 0..p.len() {
                q[j] = p[j] + fd_step;
                let up = eval_checked(self.f, &q)?;
                q[j] = p[j] - fd_step;
                let down = eval_checked(self.f, &q)?;
                q[j] = p[j];
                out[j] = (up - down) / (2.0 * fd_step);
            }
            return Ok(());
        }
        if self.f.grad_into(p, out) == Some(GradStatus::Defined) {
            return self.finite(p, out);
        }
        let scale = self.jitter_base * p.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut q = p.to_vec();
        for attempt in 0..TIE_ATTEMPTS {
            let s = scale * f64::from(1u32 << attempt);
            for j in 0..p.len() {
                q[j] = p[j] + s * self.jitter_dir[j];
            }
            if self.f.grad_into(&q, out) == Some(GradStatus::Defined) {
                return self.finite(p, out);
            }
        }
        Err(Error::UnresolvedTie { point: p.to_vec() })
    }

    fn finite(&self, p: &[f64], out: &[f64]) -> Result<()> {
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Evaluation {
                point: p.to_vec(),
                message: "non-finite gradient".into(),
            })
        }
    }
}

/// Writes x + offset + hw·u into `out`.
#[inline]
fn body_point(x: &[f64], image: &Image, u: &[f64], out: &mut [f64]) {
    for j in 0..x.len() {
        out[j] = x[j] + image.offset[j] + image.half_width * u[j];
    }
}

fn stderr_of(avg: &Average) -> f64 {
    norm(&avg.stderr)
}

/// Mean of f over x + D.
pub fn steklov_average(
    f: &LipschitzFunction,
    x: &DVector<f64>,
    image: &Image,
    spec: &QuadratureSpec,
) -> Result<SmoothedValue<f64>> {
    check_dim(f, x)?;
    check_image(image, f.dim())?;
    let n = f.dim();
    let set = nodes(image.shape, n, spec)?;
    let avg = average(set.len(), 1, set.weights.as_deref(), set.antithetic, |k, out| {
        let mut p = vec![0.0; n];
        body_point(x.as_slice(), image, set.point(k), &mut p);
        out[0] = eval_checked(f, &p)?;
        Ok(())
    })?;
    Ok(SmoothedValue {
        value: avg.mean[0],
        stderr: avg.stderr[0],
        n_evals: set.len(),
    })
}

/// φ′(x): mean of f′ over x + D, or central differences of φ with step
/// half_width·10⁻³ on common nodes when f has no gradient handle.
pub fn steklov_gradient(
    f: &LipschitzFunction,
    x: &DVector<f64>,
    image: &Image,
    spec: &QuadratureSpec,
) -> Result<SmoothedValue<DVector<f64>>> {
    check_dim(f, x)?;
    check_image(image, f.dim())?;
    let n = f.dim();
    let h = GRAD_STEP * image.half_width;
    if !f.has_grad() {
        check_step(x.as_slice(), h)?;
    }
    let set = nodes(image.shape, n, spec)?;
    let oracle = GradOracle::new(f, spec.seed);
    let avg = average(set.len(), n, set.weights.as_deref(), set.antithetic, |k, out| {
        let mut p = vec![0.0; n];
        body_point(x.as_slice(), image, set.point(k), &mut p);
        oracle.grad(&p, h, out)
    })?;
    let evals = if f.has_grad() { set.len() } else { 2 * n * set.len() };
    Ok(SmoothedValue {
        stderr: stderr_of(&avg),
        value: DVector::from_vec(avg.mean),
        n_evals: evals,
    })
}

/// Joint outer/inner node pairs for nested averages. Monte Carlo pairs the
/// k-th outer node with the k-th inner node (inner seed + 1); tensor grids
/// take the full cartesian product.
struct NestedNodes {
    outer: std::sync::Arc<NodeSet>,
    inner: std::sync::Arc<NodeSet>,
    cartesian: bool,
    weights: Option<Vec<f64>>,
}

impl NestedNodes {
    fn new(outer_img: &Image, field: &dyn ImageField, x: &DVector<f64>, spec: &QuadratureSpec) -> Result<Self> {
        let n = x.len();
        let outer = nodes(outer_img.shape, n, spec)?;
        // All inner images of one schedule share its shape; probe one point.
        let inner_shape = {
            let mut p = vec![0.0; n];
            body_point(x.as_slice(), outer_img, outer.point(0), &mut p);
            field.image_at(&DVector::from_vec(p))?.shape
        };
        let inner_spec = spec.with_seed(spec.seed.wrapping_add(1));
        let inner = nodes(inner_shape, n, &inner_spec)?;
        let cartesian = spec.method == QuadratureMethod::TensorGrid;
        let weights = match (&outer.weights, &inner.weights) {
            (Some(a), Some(b)) => Some(a.iter().flat_map(|wa| b.iter().map(move |wb| wa * wb)).collect()),
            _ => None,
        };
        Ok(Self {
            outer,
            inner,
            cartesian,
            weights,
        })
    }

    fn count(&self) -> usize {
        if self.cartesian {
            self.outer.len() * self.inner.len()
        } else {
            self.outer.len().min(self.inner.len())
        }
    }

    fn pair(&self, k: usize) -> (&[f64], &[f64]) {
        if self.cartesian {
            let m = self.inner.len();
            (self.outer.point(k / m), self.inner.point(k % m))
        } else {
            (self.outer.point(k), self.inner.point(k))
        }
    }

    fn antithetic(&self) -> bool {
        !self.cartesian && self.outer.antithetic
    }
}

/// ψ(x): mean over z ∈ D(x) of φ(x + z), the inner image taken at x + z.
pub fn double_average(
    f: &LipschitzFunction,
    x: &DVector<f64>,
    field: &dyn ImageField,
    spec: &QuadratureSpec,
) -> Result<SmoothedValue<f64>> {
    check_dim(f, x)?;
    let n = f.dim();
    let outer_img = field.image_at(x)?;
    check_image(&outer_img, n)?;
    let nn = NestedNodes::new(&outer_img, field, x, spec)?;
    let avg = average(nn.count(), 1, nn.weights.as_deref(), nn.antithetic(), |k, out| {
        let (u, v) = nn.pair(k);
        let mut p = vec![0.0; n];
        body_point(x.as_slice(), &outer_img, u, &mut p);
        let inner_img = field.image_at(&DVector::from_column_slice(&p))?;
        let mut y = vec![0.0; n];
        body_point(&p, &inner_img, v, &mut y);
        out[0] = eval_checked(f, &y)?;
        Ok(())
    })?;
    Ok(SmoothedValue {
        value: avg.mean[0],
        stderr: avg.stderr[0],
        n_evals: nn.count(),
    })
}

/// ψ′(x): mean over z ∈ D(x) of φ′(x + z).
pub fn double_average_gradient(
    f: &LipschitzFunction,
    x: &DVector<f64>,
    field: &dyn ImageField,
    spec: &QuadratureSpec,
) -> Result<SmoothedValue<DVector<f64>>> {
    check_dim(f, x)?;
    let n = f.dim();
    let outer_img = field.image_at(x)?;
    check_image(&outer_img, n)?;
    let nn = NestedNodes::new(&outer_img, field, x, spec)?;
    let oracle = GradOracle::new(f, spec.seed);
    let avg = average(nn.count(), n, nn.weights.as_deref(), nn.antithetic(), |k, out| {
        let (u, v) = nn.pair(k);
        let mut p = vec![0.0; n];
        body_point(x.as_slice(), &outer_img, u, &mut p);
        let inner_img = field.image_at(&DVector::from_column_slice(&p))?;
        let mut y = vec![0.0; n];
        body_point(&p, &inner_img, v, &mut y);
        oracle.grad(&y, GRAD_STEP * inner_img.half_width, out)
    })?;
    Ok(SmoothedValue {
        stderr: stderr_of(&avg),
        value: DVector::from_vec(avg.mean),
        n_evals: nn.count(),
    })
}

/// Symmetric n×n matrix from a row-major buffer, symmetrized as (A + Aᵀ)/2.
fn symmetrized(n: usize, buf: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(n, n, buf);
    let mut s = (&a + a.transpose()) * 0.5;
    // Make the symmetry exact rather than rounding-dependent.
    for i in 0..n {
        for j in 0..i {
            s[(i, j)] = s[(j, i)];
        }
    }
    s
}

/// ψ″(x): mean over z ∈ D(x) of central differences of φ′ at x + z with
/// step half_width·10⁻², the inner image frozen at the stencil centre.
pub fn smoothed_hessian(
    f: &LipschitzFunction,
    x: &DVector<f64>,
    field: &dyn ImageField,
    spec: &QuadratureSpec,
) -> Result<SmoothedValue<DMatrix<f64>>> {
    check_dim(f, x)?;
    let n = f.dim();
    let outer_img = field.image_at(x)?;
    check_image(&outer_img, n)?;
    check_step(x.as_slice(), HESS_STEP * outer_img.half_width)?;
    let nn = NestedNodes::new(&outer_img, field, x, spec)?;
    let oracle = GradOracle::new(f, spec.seed);
    let avg = average(nn.count(), n * n, nn.weights.as_deref(), nn.antithetic(), |k, out| {
        let (u, v) = nn.pair(k);
        let mut p = vec![0.0; n];
        body_point(x.as_slice(), &outer_img, u, &mut p);
        let inner_img = field.image_at(&DVector::from_column_slice(&p))?;
        let h = HESS_STEP * inner_img.half_width;
        let gh = GRAD_STEP * inner_img.half_width;
        let mut y = vec![0.0; n];
        body_point(&p, &inner_img, v, &mut y);
        let (mut gp, mut gm) = (vec![0.0; n], vec![0.0; n]);
        for j in 0..n {
            let yj = y[j];
            y[j] = yj + h;
            oracle.grad(&y, gh, &mut gp)?;
            y[j] = yj - h;
            oracle.grad(&y, gh, &mut gm)?;
            y[j] = yj;
            // column j of the Jacobian of the gradient, stored row-major
            for i in 0..n {
                out[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        Ok(())
    })?;
    Ok(SmoothedValue {
        value: symmetrized(n, &avg.mean),
        stderr: stderr_of(&avg),
        n_evals: nn.count() * 2 * n,
    })
}

/// Doubly averaged outer product f1′·f2′ᵀ over the same nested nodes as
/// [`smoothed_hessian`]; the product-rule cross term ψ²₁₂.
pub fn cross_term(
    f1: &LipschitzFunction,
    f2: &LipschitzFunction,
    x: &DVector<f64>,
    field: &dyn ImageField,
    spec: &QuadratureSpec,
) -> Result<SmoothedValue<DMatrix<f64>>> {
    check_dim(f1, x)?;
    check_dim(f2, x)?;
    let n = x.len();
    let outer_img = field.image_at(x)?;
    check_image(&outer_img, n)?;
    let nn = NestedNodes::new(&outer_img, field, x, spec)?;
    let (o1, o2) = (GradOracle::new(f1, spec.seed), GradOracle::new(f2, spec.seed));
    let avg = average(nn.count(), n * n, nn.weights.as_deref(), nn.antithetic(), |k, out| {
        let (u, v) = nn.pair(k);
        let mut p = vec![0.0; n];
        body_point(x.as_slice(), &outer_img, u, &mut p);
        let inner_img = field.image_at(&DVector::from_column_slice(&p))?;
        let gh = GRAD_STEP * inner_img.half_width;
        let mut y = vec![0.0; n];
        body_point(&p, &inner_img, v, &mut y);
        let (mut g1, mut g2) = (vec![0.0; n], vec![0.0; n]);
        o1.grad(&y, gh, &mut g1)?;
        o2.grad(&y, gh, &mut g2)?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = g1[i] * g2[j];
            }
        }
        Ok(())
    })?;
    Ok(SmoothedValue {
        value: DMatrix::from_row_slice(n, n, &avg.mean),
        stderr: stderr_of(&avg),
        n_evals: nn.count(),
    })
}
