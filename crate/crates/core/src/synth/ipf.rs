//! Iterative proportional fitting over one-dimensional marginal constraints.
//!
//! Each sweep rescales the array along every dimension in turn by
//! `target / current marginal`. Two storage forms share the sweep:
//! a rank-one product of per-dimension factors, which is exact for the
//! uniform starting array and stays rank-one under every update, and a
//! sparse list of nonzero cells for arbitrary starting arrays.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::attribute::Attribute;
use crate::census::MarginalTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpfConfig {
    pub max_iterations: usize,
    pub epsilon: f64,
}

impl Default for IpfConfig {
    fn default() -> Self {
        Self { max_iterations: 10, epsilon: 1e-9 }
    }
}

impl IpfConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.max_iterations == 0 {
            return Err(SynthError::Config("max_iterations must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(SynthError::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cells {
    /// cell(i_1, ..., i_D) = factors[0][i_1] * ... * factors[D-1][i_D]
    Product { factors: Vec<Vec<f64>> },
    /// Nonzero cells as (row-major flat index, value).
    Sparse { entries: Vec<(u64, f64)> },
}

/// A nonnegative D-dimensional array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpfArray {
    shape: Vec<usize>,
    cells: Cells,
}

fn strides(shape: &[usize]) -> Vec<u64> {
    let mut s = vec![1u64; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1] as u64;
    }
    s
}

impl IpfArray {
    /// Every cell equal to 1 / (number of cells).
    pub fn uniform(shape: &[usize]) -> Self {
        let factors = shape.iter().map(|&n| vec![1.0 / n as f64; n]).collect();
        Self { shape: shape.to_vec(), cells: Cells::Product { factors } }
    }

    /// Sparse array from dense row-major values; zeros are dropped.
    pub fn from_dense(shape: &[usize], values: &[f64]) -> Result<Self, SynthError> {
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(SynthError::Domain(format!("{} values for {n} cells", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(SynthError::Domain(format!("cell value {v} is negative or not finite")));
        }
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| (i as u64, v))
            .collect();
        Ok(Self { shape: shape.to_vec(), cells: Cells::Sparse { entries } })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn cells(&self) -> &Cells {
        &self.cells
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn total(&self) -> f64 {
        match &self.cells {
            Cells::Product { factors } => factors.iter().map(|f| f.iter().sum::<f64>()).product(),
            Cells::Sparse { entries } => entries.iter().map(|e| e.1).sum(),
        }
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len());
        match &self.cells {
            Cells::Product { factors } => index.iter().zip(factors).map(|(&i, f)| f[i]).product(),
            Cells::Sparse { entries } => {
                let flat: u64 = index.iter().zip(strides(&self.shape)).map(|(&i, s)| i as u64 * s).sum();
                entries
                    .binary_search_by_key(&flat, |e| e.0)
                    .map(|k| entries[k].1)
                    .unwrap_or(0.0)
            }
        }
    }

    /// Row-major dense copy. Only sensible for small arrays.
    pub fn to_dense(&self) -> Vec<f64> {
        let n: usize = self.shape.iter().product();
        let mut idx = vec![0usize; self.shape.len()];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.get(&idx));
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < self.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        out
    }

    /// Sum over every dimension except `d`.
    pub fn marginal(&self, d: usize) -> Vec<f64> {
        match &self.cells {
            Cells::Product { factors } => {
                let rest: f64 = factors
                    .iter()
                    .enumerate()
                    .filter(|(e, _)| *e != d)
                    .map(|(_, f)| f.iter().sum::<f64>())
                    .product();
                factors[d].iter().map(|&v| v * rest).collect()
            }
            Cells::Sparse { entries } => {
                let stride = strides(&self.shape)[d];
                let len = self.shape[d] as u64;
                let mut m = vec![0.0; self.shape[d]];
                for &(flat, v) in entries {
                    m[((flat / stride) % len) as usize] += v;
                }
                m
            }
        }
    }

    /// Multiplies every cell by `factors[i_d]`; zero factors remove cells.
    fn scale(&mut self, d: usize, scale: &[f64]) {
        match &mut self.cells {
            Cells::Product { factors } => {
                for (v, s) in factors[d].iter_mut().zip(scale) {
                    *v *= s;
                }
            }
            Cells::Sparse { entries } => {
                let stride = strides(&self.shape)[d];
                let len = self.shape[d] as u64;
                for e in entries.iter_mut() {
                    e.1 *= scale[((e.0 / stride) % len) as usize];
                }
                entries.retain(|e| e.1 > 0.0);
            }
        }
    }

    /// Divides by the total so cells sum to one.
    pub fn normalize(&mut self) {
        let t = self.total();
        if t > 0.0 {
            match &mut self.cells {
                Cells::Product { factors } => {
                    // Spread the correction over the first factor only.
                    if let Some(f) = factors.first_mut() {
                        f.iter_mut().for_each(|v| *v /= t);
                    }
                }
                Cells::Sparse { entries } => entries.iter_mut().for_each(|e| e.1 /= t),
            }
        }
    }

    /// Precomputed draw tables for repeated sampling of cell indices.
    pub fn sampler(&self) -> Result<CellSampler, SynthError> {
        let err = |e: rand::distr::weighted::Error| SynthError::Domain(format!("cannot sample from array: {e}"));
        match &self.cells {
            Cells::Product { factors } => Ok(CellSampler::Product(
                factors.iter().map(|f| WeightedIndex::new(f).map_err(err)).collect::<Result<_, _>>()?,
            )),
            Cells::Sparse { entries } => Ok(CellSampler::Sparse {
                shape: self.shape.clone(),
                flat: entries.iter().map(|e| e.0).collect(),
                index: WeightedIndex::new(entries.iter().map(|e| e.1)).map_err(err)?,
            }),
        }
    }
}

/// Draws multi-indices with probability proportional to cell value.
#[derive(Debug, Clone)]
pub enum CellSampler {
    Product(Vec<WeightedIndex<f64>>),
    Sparse { shape: Vec<usize>, flat: Vec<u64>, index: WeightedIndex<f64> },
}

impl CellSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match self {
            CellSampler::Product(dims) => dims.iter().map(|w| w.sample(rng)).collect(),
            CellSampler::Sparse { shape, flat, index } => {
                let mut f = flat[index.sample(rng)];
                let mut out = vec![0usize; shape.len()];
                for d in (0..shape.len()).rev() {
                    out[d] = (f % shape[d] as u64) as usize;
                    f /= shape[d] as u64;
                }
                out
            }
        }
    }
}

/// Fitted array plus convergence bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpfOutcome {
    pub array: IpfArray,
    /// Completed sweeps over all dimensions.
    pub iterations: usize,
    pub converged: bool,
    /// Largest |marginal - target| over all dimensions and categories.
    pub max_deviation: f64,
}

fn check_targets(shape: &[usize], targets: &[Vec<f64>]) -> Result<(), SynthError> {
    if targets.is_empty() {
        return Err(SynthError::Domain("no target marginals".into()));
    }
    if targets.len() != shape.len() {
        return Err(SynthError::Domain(format!("{} targets for {} dimensions", targets.len(), shape.len())));
    }
    for (d, (t, &n)) in targets.iter().zip(shape).enumerate() {
        if t.len() != n || n == 0 {
            return Err(SynthError::Domain(format!("target {d} has {} categories, array has {n}", t.len())));
        }
        if let Some(v) = t.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(SynthError::Domain(format!("target {d} has negative or non-finite entry {v}")));
        }
        let s: f64 = t.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(SynthError::Domain(format!(
                "target {d} sums to {s}; all targets must share a unit total"
            )));
        }
    }
    Ok(())
}

fn max_deviation(array: &IpfArray, targets: &[Vec<f64>]) -> f64 {
    (0..targets.len())
        .flat_map(|d| {
            let m = array.marginal(d);
            m.into_iter().zip(&targets[d]).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// Fits `seed` to the probability `targets`, sweeping dimensions in order.
///
/// Categories with zero target mass are zeroed out before the first sweep.
/// Converged means the L-infinity gap on every dimension fell below epsilon
/// after a completed sweep.
pub fn fit(mut array: IpfArray, targets: &[Vec<f64>], config: &IpfConfig) -> Result<IpfOutcome, SynthError> {
    config.validate()?;
    check_targets(array.shape(), targets)?;
    for (d, t) in targets.iter().enumerate() {
        if t.iter().any(|&v| v == 0.0) {
            let mask: Vec<f64> = t.iter().map(|&v| if v == 0.0 { 0.0 } else { 1.0 }).collect();
            array.scale(d, &mask);
        }
    }
    if array.total() <= 0.0 {
        return Err(SynthError::Domain("starting array has no mass on the target support".into()));
    }
    let mut iterations = 0;
    let mut deviation = f64::INFINITY;
    while iterations < config.max_iterations {
        for (d, t) in targets.iter().enumerate() {
            let m = array.marginal(d);
            let factors: Vec<f64> = m
                .iter()
                .zip(t)
                .map(|(&cur, &want)| if cur > 0.0 { want / cur } else { 1.0 })
                .collect();
            array.scale(d, &factors);
        }
        iterations += 1;
        deviation = max_deviation(&array, targets);
        if deviation < config.epsilon {
            break;
        }
    }
    Ok(IpfOutcome { converged: deviation < config.epsilon, array, iterations, max_deviation: deviation })
}

/// Fits from the uniform array.
pub fn fit_uniform(targets: &[Vec<f64>], config: &IpfConfig) -> Result<IpfOutcome, SynthError> {
    let shape: Vec<usize> = targets.iter().map(Vec::len).collect();
    fit(IpfArray::uniform(&shape), targets, config)
}

/// IPF-fitted joint distribution over named census dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub dimensions: Vec<Attribute>,
    pub categories: Vec<Vec<String>>,
    pub targets: Vec<Vec<f64>>,
    pub fit: IpfOutcome,
}

impl JointDistribution {
    pub fn shape(&self) -> Vec<usize> {
        self.categories.iter().map(Vec::len).collect()
    }

    pub fn marginal(&self, d: usize) -> Vec<f64> {
        self.fit.array.marginal(d)
    }
}

/// Normalizes each table to proportions and fits from the uniform array.
pub fn ipf_fit(tables: &[MarginalTable], config: &IpfConfig) -> Result<JointDistribution, SynthError> {
    let mut targets = Vec::with_capacity(tables.len());
    for t in tables {
        if t.total() == 0 {
            return Err(SynthError::Domain(format!("{}: marginal total is zero", t.dimension())));
        }
        targets.push(t.proportions());
    }
    let fit = fit_uniform(&targets, config)?;
    if !fit.converged {
        log::warn!(
            "IPF stopped after {} iterations with deviation {:e}",
            fit.iterations,
            fit.max_deviation
        );
    }
    Ok(JointDistribution {
        dimensions: tables.iter().map(|t| t.dimension()).collect(),
        categories: tables.iter().map(|t| t.categories().to_vec()).collect(),
        targets,
        fit,
    })
}
