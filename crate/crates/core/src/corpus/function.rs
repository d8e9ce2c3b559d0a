use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::smoothing::sample_unit_ball;

/// Outcome of an almost-everywhere gradient query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradStatus {
    Defined,
    /// The point sits on a kink (abs at 0, max/min at a tie); the output
    /// buffer is unspecified and callers must resample nearby.
    Tie,
}

pub type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) -> GradStatus + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstant {
    pub value: f64,
    /// False when the value came from sampling rather than analysis.
    pub certified: bool,
}

/// A Lipschitz function on R^n with an optional a.e. gradient handle.
#[derive(Clone)]
pub struct LipschitzFunction {
    dim: usize,
    label: String,
    eval: EvalFn,
    grad: Option<GradFn>,
    lipschitz: LipschitzConstant,
}

impl fmt::Debug for LipschitzFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzFunction")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("has_grad", &self.grad.is_some())
            .finish()
    }
}

impl LipschitzFunction {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        lipschitz: LipschitzConstant,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            label: label.into(),
            eval: Arc::new(eval),
            grad: None,
            lipschitz,
        }
    }

    pub fn with_grad(
        mut self,
        grad: impl Fn(&[f64], &mut [f64]) -> GradStatus + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn without_grad(mut self) -> Self {
        self.grad = None;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_lipschitz(mut self, lipschitz: LipschitzConstant) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lipschitz(&self) -> LipschitzConstant {
        self.lipschitz
    }

    pub fn lipschitz_const(&self) -> f64 {
        self.lipschitz.value
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn eval_at(&self, x: &DVector<f64>) -> f64 {
        (self.eval)(x.as_slice())
    }

    /// Writes the gradient into `out`; None when no gradient handle exists.
    #[inline]
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Option<GradStatus> {
        self.grad.as_ref().map(|g| g(x, out))
    }

    /// Gradient at `x`, or None if absent or at a tie.
    pub fn grad_at(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let mut out = DVector::zeros(self.dim);
        match self.grad_into(x.as_slice(), out.as_mut_slice())? {
            GradStatus::Defined => Some(out),
            GradStatus::Tie => None,
        }
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let (e1, e2) = (self.eval.clone(), other.eval.clone());
        let lip = LipschitzConstant {
            value: self.lipschitz.value + other.lipschitz.value,
            certified: self.lipschitz.certified && other.lipschitz.certified,
        };
        let mut f = Self::new(
            self.dim,
            format!("({})+({})", self.label, other.label),
            lip,
            move |x| e1(x) + e2(x),
        );
        if let (Some(g1), Some(g2)) = (self.grad.clone(), other.grad.clone()) {
            let n = self.dim;
            f = f.with_grad(move |x, out| {
                let mut tmp = vec![0.0; n];
                if g1(x, out) == GradStatus::Tie || g2(x, &mut tmp) == GradStatus::Tie {
                    return GradStatus::Tie;
                }
                out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
                GradStatus::Defined
            });
        }
        Ok(f)
    }

    /// Pointwise product. `bounds` are sup |f1|, sup |f2| over the region the
    /// Lipschitz constant should cover.
    pub fn product(&self, other: &Self, bounds: (f64, f64)) -> Result<Self> {
        self.check_same_dim(other)?;
        let (e1, e2) = (self.eval.clone(), other.eval.clone());
        let lip = LipschitzConstant {
            value: self.lipschitz.value * bounds.1 + other.lipschitz.value * bounds.0,
            certified: self.lipschitz.certified && other.lipschitz.certified,
        };
        let (ea, eb) = (e1.clone(), e2.clone());
        let mut f = Self::new(
            self.dim,
            format!("({})*({})", self.label, other.label),
            lip,
            move |x| ea(x) * eb(x),
        );
        if let (Some(g1), Some(g2)) = (self.grad.clone(), other.grad.clone()) {
            let n = self.dim;
            f = f.with_grad(move |x, out| {
                let mut tmp = vec![0.0; n];
                if g1(x, out) == GradStatus::Tie || g2(x, &mut tmp) == GradStatus::Tie {
                    return GradStatus::Tie;
                }
                let (v1, v2) = (e1(x), e2(x));
                out.iter_mut().zip(&tmp).for_each(|(o, t)| *o = *o * v2 + t * v1);
                GradStatus::Defined
            });
        }
        Ok(f)
    }

    pub fn scaled(&self, k: f64) -> Self {
        let e = self.eval.clone();
        let lip = LipschitzConstant {
            value: self.lipschitz.value * k.abs(),
            certified: self.lipschitz.certified,
        };
        let mut f = Self::new(self.dim, format!("{k}*({})", self.label), lip, move |x| k * e(x));
        if let Some(g) = self.grad.clone() {
            f = f.with_grad(move |x, out| {
                let s = g(x, out);
                out.iter_mut().for_each(|o| *o *= k);
                s
            });
        }
        f
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0).with_label(format!("-({})", self.label))
    }

    /// f(x) + L‖x − x₀‖, the shifted function whose lower approximation
    /// drives the minimality test.
    pub fn with_cone_penalty(&self, anchor: &DVector<f64>, weight: f64) -> Self {
        let e = self.eval.clone();
        let a = anchor.clone();
        let lip = LipschitzConstant {
            value: self.lipschitz.value + weight,
            certified: self.lipschitz.certified,
        };
        let a_eval = a.clone();
        let mut f = Self::new(self.dim, format!("{}+L|x-x0|", self.label), lip, move |x| {
            let r: f64 = x.iter().zip(a_eval.iter()).map(|(xi, ai)| (xi - ai).powi(2)).sum();
            e(x) + weight * r.sqrt()
        });
        if let Some(g) = self.grad.clone() {
            f = f.with_grad(move |x, out| {
                if g(x, out) == GradStatus::Tie {
                    return GradStatus::Tie;
                }
                let r: f64 = x.iter().zip(a.iter()).map(|(xi, ai)| (xi - ai).powi(2)).sum::<f64>().sqrt();
                if r == 0.0 {
                    return GradStatus::Tie;
                }
                for ((o, xi), ai) in out.iter_mut().zip(x).zip(a.iter()) {
                    *o += weight * (xi - ai) / r;
                }
                GradStatus::Defined
            });
        }
        f
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, format!("{c}"), LipschitzConstant { value: 0.0, certified: true }, move |_| c)
            .with_grad(|_, out| {
                out.fill(0.0);
                GradStatus::Defined
            })
    }

    pub fn linear(a: DVector<f64>) -> Self {
        let n = a.len();
        let lip = LipschitzConstant {
            value: a.norm(),
            certified: true,
        };
        let (ae, ag) = (a.clone(), a);
        Self::new(n, "linear", lip, move |x| x.iter().zip(ae.iter()).map(|(xi, ai)| xi * ai).sum())
            .with_grad(move |_, out| {
                out.copy_from_slice(ag.as_slice());
                GradStatus::Defined
            })
    }
}

/// Lipschitz-inequality violation found by [`validate_lipschitz`].
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzViolation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub quotient: f64,
}

fn random_pair(rng: &mut ChaCha8Rng, center: &DVector<f64>, radius: f64) -> (DVector<f64>, DVector<f64>) {
    let n = center.len();
    let mut u = vec![0.0; n];
    sample_unit_ball(rng, &mut u);
    let x = center + DVector::from_column_slice(&u) * radius;
    sample_unit_ball(rng, &mut u);
    let y = center + DVector::from_column_slice(&u) * radius;
    (x, y)
}

/// Largest sampled difference quotient over `pairs` random pairs in the ball.
pub fn max_difference_quotient(
    f: &LipschitzFunction,
    center: &DVector<f64>,
    radius: f64,
    pairs: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for k in 0..pairs {
        let (x, mut y) = random_pair(&mut rng, center, radius);
        // Every other pair is a short chord, so local slopes at kinks show up.
        if k % 2 == 1 {
            let t: f64 = rng.random_range(1e-4..1e-2);
            y = &x + (&y - &x) * t;
        }
        let d = (&x - &y).norm();
        if d > 0.0 {
            best = best.max((f.eval_at(&x) - f.eval_at(&y)).abs() / d);
        }
    }
    best
}

/// Spot-checks |f(x) − f(y)| ≤ L‖x − y‖ over random pairs in the ball.
pub fn validate_lipschitz(
    f: &LipschitzFunction,
    center: &DVector<f64>,
    radius: f64,
    pairs: usize,
    seed: u64,
) -> std::result::Result<(), LipschitzViolation> {
    let l = f.lipschitz_const();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let (x, y) = random_pair(&mut rng, center, radius);
        let d = (&x - &y).norm();
        let diff = (f.eval_at(&x) - f.eval_at(&y)).abs();
        if diff > l * d * (1.0 + 1e-12) + 1e-14 {
            return Err(LipschitzViolation {
                x: x.as_slice().to_vec(),
                y: y.as_slice().to_vec(),
                quotient: diff / d,
            });
        }
    }
    Ok(())
}

/// Safety factor applied to sampled Lipschitz estimates.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;
/// Pairs sampled when estimating a Lipschitz constant.
pub const LIPSCHITZ_PAIRS: usize = 10_000;

/// Non-certified Lipschitz estimate: 1.5 × the largest sampled quotient.
pub fn estimate_lipschitz(f: &LipschitzFunction, center: &DVector<f64>, radius: f64, seed: u64) -> LipschitzConstant {
    LipschitzConstant {
        value: LIPSCHITZ_SAFETY * max_difference_quotient(f, center, radius, LIPSCHITZ_PAIRS, seed),
        certified: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs1d() -> LipschitzFunction {
        LipschitzFunction::new(1, "abs", LipschitzConstant { value: 1.0, certified: true }, |x| x[0].abs())
            .with_grad(|x, out| {
                if x[0] == 0.0 {
                    return GradStatus::Tie;
                }
                out[0] = x[0].signum();
                GradStatus::Defined
            })
    }

    #[test]
    fn product_gradient_and_tie_propagation() {
        let f = abs1d();
        let p = f.product(&f, (1.0, 1.0)).unwrap();
        assert_eq!(p.eval(&[-0.5]), 0.25);
        let g = p.grad_at(&DVector::from_element(1, -0.5)).unwrap();
        assert_eq!(g[0], -1.0);
        assert!(p.grad_at(&DVector::from_element(1, 0.0)).is_none());
    }

    #[test]
    fn cone_penalty_adds_radial_term() {
        let f = abs1d().with_cone_penalty(&DVector::from_element(1, 0.0), 1.0);
        assert_eq!(f.eval(&[-0.25]), 0.5);
        assert_eq!(f.grad_at(&DVector::from_element(1, 0.3)).unwrap()[0], 2.0);
        assert_eq!(f.lipschitz_const(), 2.0);
    }

    #[test]
    fn validator_catches_understated_constant() {
        let f = abs1d().with_lipschitz(LipschitzConstant { value: 0.5, certified: true });
        assert!(validate_lipschitz(&f, &DVector::zeros(1), 1.0, 1000, 1).is_err());
        assert!(validate_lipschitz(&abs1d(), &DVector::zeros(1), 1.0, 1000, 1).is_ok());
    }

    #[test]
    fn estimate_is_conservative_and_flagged() {
        let est = estimate_lipschitz(&abs1d(), &DVector::zeros(1), 1.0, 9);
        assert!(!est.certified);
        assert!(est.value >= 1.0 && est.value <= 1.5 + 1e-12);
    }

    #[test]
    fn sum_dimension_mismatch() {
        let g = LipschitzFunction::constant(2, 1.0);
        assert!(matches!(abs1d().sum(&g), Err(Error::DimensionMismatch { .. })));
    }
}
