//! Shrinking set-valued mappings D(·) anchored at x₀.
//!
//! Radii ε_i = eps0·qⁱ split the punctured neighbourhood into annuli
//! ε_{i+1} < ‖x − x₀‖ < ε_i. On even annuli the image is frozen at the
//! annulus midpoint; odd annuli are transition zones that borrow the image of
//! the nearest even annulus and are never sampled by the estimators.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Ball,
    Cube,
}

impl Shape {
    /// Norm whose unit ball is the shape (ℓ2 for balls, ℓ∞ for cubes).
    pub fn norm(self, v: &DVector<f64>) -> f64 {
        match self {
            Shape::Ball => v.norm(),
            Shape::Cube => v.amax(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Ball => "ball",
            Shape::Cube => "cube",
        }
    }

    /// Euclidean diameter of the shape with half-width `hw` in `dim` dimensions.
    pub fn diameter(self, dim: usize, hw: f64) -> f64 {
        match self {
            Shape::Ball => 2.0 * hw,
            Shape::Cube => 2.0 * hw * (dim as f64).sqrt(),
        }
    }
}

/// Frozen image D(x) = offset + half_width·(unit shape).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub shape: Shape,
    pub offset: DVector<f64>,
    pub half_width: f64,
    pub annulus: usize,
    pub in_constancy_region: bool,
}

impl Image {
    /// Image centred at the evaluation point, outside any schedule.
    pub fn centered(shape: Shape, dim: usize, half_width: f64) -> Self {
        Self {
            shape,
            offset: DVector::zeros(dim),
            half_width,
            annulus: 0,
            in_constancy_region: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }
}

/// Anything that assigns an image to a point.
pub trait ImageField: Sync {
    fn dim(&self) -> usize;
    fn image_at(&self, x: &DVector<f64>) -> Result<Image>;
}

/// The same image everywhere; the test-oracle setting "constant D".
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantImage(pub Image);

impl ImageField for ConstantImage {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn image_at(&self, _x: &DVector<f64>) -> Result<Image> {
        Ok(self.0.clone())
    }
}

/// How the diameter of the frozen image depends on the midpoint radius m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiameterLaw {
    /// d = ρ·m (the only law that `make_schedule` produces).
    Linear,
    /// d = ρ·m^p.
    Power(f64),
    /// d fixed regardless of the annulus.
    Constant(f64),
}

/// Displacement of the frozen image away from the evaluation point:
/// offset = sigma·ε_i·w/‖w‖_shape on annulus i.
#[derive(Debug, Clone, PartialEq)]
pub struct Lean {
    pub direction: DVector<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingSchedule {
    anchor: DVector<f64>,
    shape: Shape,
    eps0: f64,
    q: f64,
    depth: usize,
    diam_ratio: f64,
    cone_const: f64,
    lean: Option<Lean>,
    law: DiameterLaw,
}

/// Default diameter ratio for balls.
pub const DEFAULT_DIAM_RATIO: f64 = 3.0;
/// Default number of annuli.
pub const DEFAULT_DEPTH: usize = 12;

/// Builds a centred schedule and checks conditions 1 and 2.
pub fn make_schedule(
    anchor: DVector<f64>,
    shape: Shape,
    eps0: f64,
    q: f64,
    depth: usize,
    diam_ratio: f64,
) -> Result<MappingSchedule> {
    build(anchor, shape, eps0, q, depth, diam_ratio, None)
}

/// As [`make_schedule`] with the image displaced along `lean.direction`.
pub fn make_leaned_schedule(
    anchor: DVector<f64>,
    shape: Shape,
    eps0: f64,
    q: f64,
    depth: usize,
    diam_ratio: f64,
    lean: Lean,
) -> Result<MappingSchedule> {
    if lean.direction.len() != anchor.len() {
        return Err(Error::DimensionMismatch {
            expected: anchor.len(),
            found: lean.direction.len(),
        });
    }
    if !(lean.sigma >= 0.0) || shape.norm(&lean.direction) == 0.0 {
        return Err(Error::InvalidArgument("lean needs a nonzero direction and sigma >= 0".into()));
    }
    build(anchor, shape, eps0, q, depth, diam_ratio, Some(lean))
}

/// Smallest diameter ratio meeting condition 1 with relative margin `margin`
/// for a lean of size `sigma` (0 for centred images).
pub fn tight_diam_ratio(q: f64, sigma: f64, margin: f64) -> f64 {
    4.0 * (1.0 + margin) * (1.0 + sigma) / (1.0 + q)
}

fn build(
    anchor: DVector<f64>,
    shape: Shape,
    eps0: f64,
    q: f64,
    depth: usize,
    diam_ratio: f64,
    lean: Option<Lean>,
) -> Result<MappingSchedule> {
    if anchor.is_empty() {
        return Err(Error::InvalidArgument("anchor must have positive dimension".into()));
    }
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps0 must be positive, got {eps0}")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("q must lie in (0,1), got {q}")));
    }
    if depth < 2 {
        return Err(Error::InvalidArgument(format!("depth must be at least 2, got {depth}")));
    }
    if !(diam_ratio > 0.0) {
        return Err(Error::InvalidArgument(format!("diam_ratio must be positive, got {diam_ratio}")));
    }
    if !diam_ratio.is_finite() {
        return Err(Error::DiameterNotControlled("cone constant would be infinite".into()));
    }
    let n = anchor.len() as f64;
    let cone_const = match shape {
        Shape::Ball => diam_ratio / q,
        Shape::Cube => diam_ratio * n.sqrt() / q,
    };
    let s = MappingSchedule {
        anchor,
        shape,
        eps0,
        q,
        depth,
        diam_ratio,
        cone_const,
        lean,
        law: DiameterLaw::Linear,
    };
    s.check_conditions()?;
    Ok(s)
}

impl MappingSchedule {
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn diam_ratio(&self) -> f64 {
        self.diam_ratio
    }

    pub fn cone_const(&self) -> f64 {
        self.cone_const
    }

    pub fn lean(&self) -> Option<&Lean> {
        self.lean.as_ref()
    }

    pub fn law(&self) -> DiameterLaw {
        self.law
    }

    /// Replaces the diameter law without re-validating; used to examine
    /// laws that fall outside the admissible family.
    pub fn with_diameter_law(mut self, law: DiameterLaw) -> Self {
        self.law = law;
        self
    }

    /// Short human-readable identifier.
    pub fn describe(&self) -> String {
        let mut s = format!("{}(q={}, rho={:.4}", self.shape.name(), self.q, self.diam_ratio);
        if let Some(l) = &self.lean {
            let dir: Vec<String> = l.direction.iter().map(|v| format!("{v:.3}")).collect();
            s.push_str(&format!(", lean={}@[{}]", l.sigma, dir.join(",")));
        }
        s.push(')');
        s
    }

    pub fn eps(&self, i: usize) -> f64 {
        self.eps0 * self.q.powi(i as i32)
    }

    /// Boundaries ε_0 > … > ε_depth.
    pub fn radii(&self) -> Vec<f64> {
        (0..=self.depth).map(|i| self.eps(i)).collect()
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.eps(i) + self.eps(i + 1))
    }

    /// Even annuli within the truncation depth.
    pub fn constancy_annuli(&self) -> Vec<usize> {
        (0..self.depth).step_by(2).collect()
    }

    /// Radius inside annulus i at relative position t ∈ (0,1) (0 = inner edge).
    pub fn radius_at(&self, i: usize, t: f64) -> f64 {
        let (inner, outer) = (self.eps(i + 1), self.eps(i));
        inner + t * (outer - inner)
    }

    /// Euclidean diameter of the image frozen on annulus i.
    pub fn image_diameter(&self, i: usize) -> f64 {
        self.shape.diameter(self.dim(), self.half_width(i))
    }

    fn half_width(&self, i: usize) -> f64 {
        let m = self.midpoint(i);
        match self.law {
            DiameterLaw::Linear => 0.5 * self.diam_ratio * m,
            DiameterLaw::Power(p) => 0.5 * self.diam_ratio * m.powf(p),
            DiameterLaw::Constant(d) => 0.5 * d,
        }
    }

    fn offset(&self, i: usize) -> DVector<f64> {
        match &self.lean {
            None => DVector::zeros(self.dim()),
            Some(l) => &l.direction * (l.sigma * self.eps(i) / self.shape.norm(&l.direction)),
        }
    }

    /// Image frozen on annulus i (odd indices are allowed here).
    pub fn frozen_image(&self, i: usize) -> Image {
        Image {
            shape: self.shape,
            offset: self.offset(i),
            half_width: self.half_width(i),
            annulus: i,
            in_constancy_region: i.is_multiple_of(2),
        }
    }

    /// Index i with ε_{i+1} ≤ r < ε_i, or ε_{i+1} < r ≤ ε_i at exact
    /// boundaries (flagged via `on_boundary`).
    fn locate(&self, r: f64) -> (usize, bool) {
        let mut i = ((r / self.eps0).ln() / self.q.ln()).floor().max(0.0) as usize;
        while self.eps(i + 1) > r {
            i += 1;
        }
        while i > 0 && self.eps(i) < r {
            i -= 1;
        }
        let on_boundary = r == self.eps(i) || r == self.eps(i + 1);
        (i, on_boundary)
    }

    fn check_conditions(&self) -> Result<()> {
        for i in self.constancy_annuli() {
            // Condition 1 over the whole closed annulus.
            let hw = self.half_width(i);
            let required = self.shape.norm(&self.offset(i)) + self.eps(i);
            if !(hw > required) {
                return Err(Error::AnchorNotCovered {
                    annulus: i,
                    half_width: hw,
                    required,
                });
            }
            // Condition 2 at the inner edge, the worst case for d/‖x − x₀‖.
            let d = self.image_diameter(i);
            if d > self.cone_const * self.eps(i + 1) * (1.0 + 1e-12) {
                return Err(Error::DiameterNotControlled(format!(
                    "annulus {i}: diameter {d} exceeds k·eps = {}",
                    self.cone_const * self.eps(i + 1)
                )));
            }
        }
        Ok(())
    }
}

impl ImageField for MappingSchedule {
    fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// The geometric sequence continues past `depth`, so every point of the
    /// punctured ball of radius ε₀ has an image.
    fn image_at(&self, x: &DVector<f64>) -> Result<Image> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let r = (x - &self.anchor).norm();
        if r == 0.0 {
            return Err(Error::AtAnchor);
        }
        if r >= self.eps0 {
            return Err(Error::OutOfRange {
                distance: r,
                eps0: self.eps0,
            });
        }
        let (i, on_boundary) = self.locate(r);
        if i % 2 == 0 {
            let mut img = self.frozen_image(i);
            img.in_constancy_region = !on_boundary;
            return Ok(img);
        }
        let even = if r >= self.midpoint(i) { i - 1 } else { i + 1 };
        let mut img = self.frozen_image(even);
        img.in_constancy_region = false;
        Ok(img)
    }
}

/// Result of [`validate_equilipschitz`].
#[derive(Debug, Clone, PartialEq)]
pub struct EquiLipschitzCertificate {
    pub schedule: MappingSchedule,
    /// (annulus, ‖x − x₀‖/d) at the inner and outer edge of each even annulus.
    pub ratio_trace: Vec<(usize, f64)>,
    pub sup_ratio: f64,
    pub bound: f64,
    pub growth_exponent: f64,
    /// (annulus, Euclidean image diameter).
    pub diameters: Vec<(usize, f64)>,
    pub valid: bool,
}

impl EquiLipschitzCertificate {
    /// Lipschitz constant of φ′ on each even annulus for an L-Lipschitz f:
    /// 4Lω_{n−1}/(ω_n d) for balls and 2√n·L/a for cubes of edge a.
    pub fn smoothing_lipschitz(&self, l: f64) -> Vec<(usize, f64)> {
        let n = self.schedule.dim();
        self.diameters
            .iter()
            .map(|&(i, d)| {
                let c = match self.schedule.shape {
                    Shape::Ball => 4.0 * l * unit_ball_volume(n - 1) / (unit_ball_volume(n) * d),
                    Shape::Cube => {
                        let edge = d / (n as f64).sqrt();
                        2.0 * (n as f64).sqrt() * l / edge
                    }
                };
                (i, c)
            })
            .collect()
    }
}

/// Volume of the unit ball in R^n (ω_0 = 1).
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * std::f64::consts::PI / n as f64,
    }
}

/// Least-squares slope of y against x.
pub(crate) fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Edge ratios ‖x − x₀‖/d(x) over the even annuli, with the closed-form bound
/// 1/(ρq) for linear laws. Ratios growing faster than ε^{-1/2} are rejected.
pub fn validate_equilipschitz(s: &MappingSchedule) -> Result<EquiLipschitzCertificate> {
    let mut trace = Vec::new();
    let mut diameters = Vec::new();
    let mut logs = (Vec::new(), Vec::new());
    for i in s.constancy_annuli() {
        let d = 2.0 * s.half_width(i);
        diameters.push((i, s.image_diameter(i)));
        for r in [s.eps(i + 1), s.eps(i)] {
            let ratio = r / d;
            trace.push((i, ratio));
            logs.0.push((1.0 / r).ln());
            logs.1.push(ratio.ln());
        }
    }
    let growth_exponent = ls_slope(&logs.0, &logs.1);
    if growth_exponent > 0.5 || trace.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::UnboundedRatio { growth_exponent });
    }
    let sup_ratio = trace.iter().map(|t| t.1).fold(0.0, f64::max);
    let bound = match s.law {
        DiameterLaw::Linear => 1.0 / (s.diam_ratio * s.q),
        _ => sup_ratio,
    };
    Ok(EquiLipschitzCertificate {
        schedule: s.clone(),
        valid: sup_ratio.is_finite() && sup_ratio <= bound * (1.0 + 1e-12),
        ratio_trace: trace,
        sup_ratio,
        bound,
        growth_exponent,
        diameters,
    })
}

/// Depth whose innermost radius first drops to `inner` (rounded up to even,
/// at least 6).
pub fn depth_for(eps0: f64, q: f64, inner: f64) -> usize {
    let k = ((inner / eps0).ln() / q.ln() - 1e-9).ceil().max(6.0) as usize;
    k + k % 2
}
