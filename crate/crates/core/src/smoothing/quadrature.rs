//! Seeded node sets on the unit ball and cube, and a deterministic parallel
//! averaging kernel.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mapping::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadratureMethod {
    MonteCarlo,
    TensorGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuadratureSpec {
    pub method: QuadratureMethod,
    /// Sample count N (Monte Carlo) or cells per axis m (tensor grid).
    pub samples: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl QuadratureSpec {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            method: QuadratureMethod::MonteCarlo,
            samples,
            seed,
            antithetic: false,
        }
    }

    pub fn tensor_grid(per_axis: usize) -> Self {
        Self {
            method: QuadratureMethod::TensorGrid,
            samples: per_axis,
            seed: 0,
            antithetic: false,
        }
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Quadrature("sample count must be positive".into()));
        }
        match self.method {
            QuadratureMethod::MonteCarlo => {
                if self.antithetic && self.samples < 2 {
                    return Err(Error::Quadrature("antithetic sampling needs at least 2 samples".into()));
                }
            }
            QuadratureMethod::TensorGrid => {
                if dim > 3 {
                    return Err(Error::Quadrature(format!("tensor grid limited to n <= 3, got n = {dim}")));
                }
                let nodes = (2 * self.samples).checked_pow(dim as u32);
                if nodes.is_none_or(|k| k > 20_000_000) {
                    return Err(Error::Quadrature("tensor grid too large".into()));
                }
            }
        }
        Ok(())
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::monte_carlo(20_000, 0x5eed)
    }
}

/// Uniform draw from the closed unit ball of dimension `out.len()`.
pub fn sample_unit_ball<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let n = out.len();
    loop {
        let mut norm2 = 0.0;
        for o in out.iter_mut() {
            *o = StandardNormal.sample(rng);
            norm2 += *o * *o;
        }
        if norm2 > 1e-300 {
            let radius = rng.random::<f64>().powf(1.0 / n as f64);
            let s = radius / norm2.sqrt();
            out.iter_mut().for_each(|o| *o *= s);
            return;
        }
    }
}

fn sample_unit_cube<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = rng.random_range(-1.0..1.0);
    }
}

pub(crate) const CHUNK: usize = 1024;

/// Nodes u_k in the unit shape with weights summing to one. Monte Carlo
/// nodes have uniform weights; antithetic sets store u, −u consecutively.
#[derive(Debug)]
pub struct NodeSet {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub antithetic: bool,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    fn monte_carlo(shape: Shape, dim: usize, spec: &QuadratureSpec) -> Self {
        let draws = if spec.antithetic { spec.samples / 2 } else { spec.samples };
        let chunks = draws.div_ceil(CHUNK);
        let blocks: Vec<Vec<f64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(c as u64);
                let count = CHUNK.min(draws - c * CHUNK);
                let per = if spec.antithetic { 2 } else { 1 };
                let mut block = vec![0.0; count * dim * per];
                for k in 0..count {
                    let u = &mut block[k * dim * per..k * dim * per + dim];
                    match shape {
                        Shape::Ball => sample_unit_ball(&mut rng, u),
                        Shape::Cube => sample_unit_cube(&mut rng, u),
                    }
                    if spec.antithetic {
                        let base = k * dim * 2;
                        for j in 0..dim {
                            block[base + dim + j] = -block[base + j];
                        }
                    }
                }
                block
            })
            .collect();
        Self {
            dim,
            points: blocks.concat(),
            weights: None,
            antithetic: spec.antithetic,
        }
    }

    /// Two-point Gauss–Legendre rule on each of m^n cells of [−1,1]^n; for
    /// balls only cells whose centre lies inside the unit ball are kept.
    fn tensor_grid(shape: Shape, dim: usize, m: usize) -> Self {
        let h = 2.0 / m as f64;
        let g = 0.5 / 3f64.sqrt();
        let mut axis = Vec::with_capacity(2 * m);
        for c in 0..m {
            let mid = -1.0 + (c as f64 + 0.5) * h;
            axis.push((mid - g * h, c));
            axis.push((mid + g * h, c));
        }
        let cell_center = |c: usize| -1.0 + (c as f64 + 0.5) * h;
        let total = axis.len().pow(dim as u32);
        let mut points = Vec::with_capacity(total * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let keep = match shape {
                Shape::Cube => true,
                Shape::Ball => idx.iter().map(|&k| cell_center(axis[k].1).powi(2)).sum::<f64>() < 1.0,
            };
            if keep {
                points.extend(idx.iter().map(|&k| axis[k].0));
            }
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < axis.len() {
                    break;
                }
                *slot = 0;
            }
        }
        let count = points.len() / dim;
        Self {
            dim,
            points,
            weights: Some(vec![1.0 / count as f64; count]),
            antithetic: false,
        }
    }
}

type CacheKey = (Shape, usize, QuadratureSpec);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<NodeSet>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<NodeSet>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Cached node set for (shape, dim, spec).
pub fn nodes(shape: Shape, dim: usize, spec: &QuadratureSpec) -> Result<Arc<NodeSet>> {
    spec.validate(dim)?;
    let key = (shape, dim, *spec);
    if let Some(n) = cache().lock().map_err(|_| Error::Quadrature("node cache poisoned".into()))?.get(&key) {
        return Ok(n.clone());
    }
    let set = Arc::new(match spec.method {
        QuadratureMethod::MonteCarlo => NodeSet::monte_carlo(shape, dim, spec),
        QuadratureMethod::TensorGrid => NodeSet::tensor_grid(shape, dim, spec.samples),
    });
    let mut guard = cache().lock().map_err(|_| Error::Quadrature("node cache poisoned".into()))?;
    if guard.len() >= 64 {
        guard.clear();
    }
    guard.insert(key, set.clone());
    Ok(set)
}

/// Mean and per-component standard error of a vector-valued integrand.
#[derive(Debug, Clone, PartialEq)]
pub struct Average {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

fn pairwise(parts: &[Vec<f64>]) -> Vec<f64> {
    match parts.len() {
        0 => Vec::new(),
        1 => parts[0].clone(),
        n => {
            let (a, b) = parts.split_at(n / 2);
            let (mut a, b) = (pairwise(a), pairwise(b));
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        }
    }
}

/// Averages `integrand(k, out)` over sample indices 0..count.
///
/// Chunks of [`CHUNK`] samples are summed sequentially, then combined by
/// pairwise summation in chunk order, so the result does not depend on the
/// thread count. With `antithetic`, consecutive index pairs are averaged
/// before the variance is taken. `weights` switches to a weighted rule with
/// zero reported error.
pub fn average<F>(count: usize, width: usize, weights: Option<&[f64]>, antithetic: bool, integrand: F) -> Result<Average>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    if count == 0 {
        return Err(Error::Quadrature("no quadrature nodes".into()));
    }
    let group = if antithetic && weights.is_none() { 2 } else { 1 };
    let groups = count / group;
    // Accumulate deviations from the first sample: constant integrands come
    // out exact and the variance sum is better conditioned.
    let mut shift = vec![0.0; width];
    integrand(0, &mut shift)?;
    let shift = &shift;
    let chunks = groups.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; 2 * width];
            let mut buf = vec![0.0; width];
            let mut tmp = vec![0.0; width];
            for gi in c * CHUNK..groups.min((c + 1) * CHUNK) {
                buf.iter_mut().for_each(|b| *b = 0.0);
                for k in gi * group..(gi + 1) * group {
                    integrand(k, &mut tmp)?;
                    let w = weights.map_or(1.0 / group as f64, |w| w[k]);
                    for j in 0..width {
                        buf[j] += w * (tmp[j] - shift[j]);
                    }
                }
                for j in 0..width {
                    acc[j] += buf[j];
                    acc[width + j] += buf[j] * buf[j];
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = pairwise(&parts);
    let (sum, sumsq) = total.split_at(width);
    if weights.is_some() {
        return Ok(Average {
            mean: sum.iter().zip(shift).map(|(s, c)| c + s).collect(),
            stderr: vec![0.0; width],
            samples: count,
        });
    }
    let n = groups as f64;
    let centered: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr = centered
        .iter()
        .zip(sumsq)
        .map(|(m, s2)| {
            if groups < 2 {
                return 0.0;
            }
            let var = ((s2 / n - m * m) * n / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    Ok(Average {
        mean: centered.iter().zip(shift).map(|(m, c)| c + m).collect(),
        stderr,
        samples: count,
    })
}
