//! One-dimensional distributions represented by their distribution functions.
//!
//! Every kind supports the distribution function, its left limit, both survival
//! functions, and the lower and upper quantile functions. Discrete inputs stay discrete
//! under every transform and under comonotone addition, so they are evaluated without
//! quadrature.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, sorted_unique, CompensatedSum};

/// Probability tolerance used when validating and merging atoms.
pub const PROBABILITY_TOL: f64 = 1e-12;
const BREAKPOINT_TOL: f64 = 1e-13;

/// A probability level `u` in `(0, 1)` carried together with `1 - u`.
///
/// Levels built from their complement keep `1 - u` exact even when `u` itself rounds
/// to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    u: f64,
    complement: f64,
}

impl Level {
    pub fn new(u: f64) -> Result<Self> {
        if u > 0.0 && u < 1.0 {
            Ok(Level {
                u,
                complement: 1.0 - u,
            })
        } else {
            Err(Error::domain(format!("probability level {u} is not in (0, 1)")))
        }
    }

    /// The level `1 - complement`.
    pub fn from_complement(complement: f64) -> Result<Self> {
        if complement > 0.0 && complement < 1.0 {
            Ok(Level {
                u: 1.0 - complement,
                complement,
            })
        } else {
            Err(Error::domain(format!(
                "complementary level {complement} is not in (0, 1)"
            )))
        }
    }

    pub(crate) fn unchecked(u: f64, complement: f64) -> Self {
        Level { u, complement }
    }

    pub fn value(&self) -> f64 {
        self.u
    }

    pub fn complement(&self) -> f64 {
        self.complement
    }

    fn flip(self) -> Level {
        Level {
            u: self.complement,
            complement: self.u,
        }
    }
}

/// Finitely many atoms with strictly increasing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms {
    values: Vec<f64>,
    probs: Vec<f64>,
    /// `P[X <= values[k]]`, last entry exactly one.
    cumulative: Vec<f64>,
    /// `P[X > values[k]]`, last entry exactly zero.
    upper_tail: Vec<f64>,
}

impl Atoms {
    /// Atoms from sorted `(value, probability)` pairs.
    ///
    /// Probabilities must be strictly positive and sum to one within `1e-12`, values
    /// strictly increasing.
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        for (i, &(v, p)) in pairs.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidDistribution(format!("atom {i} has non-finite value {v}")));
            }
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i} has probability {p}, expected a positive number"
                )));
            }
            if i > 0 && pairs[i - 1].0 >= v {
                return Err(Error::InvalidDistribution(format!(
                    "atom values must be strictly increasing, found {} before {v}",
                    pairs[i - 1].0
                )));
            }
        }
        let total = compensated_sum(pairs.iter().map(|p| p.1));
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::InvalidDistribution(format!(
                "atom probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self::build(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        ))
    }

    /// Atoms from unsorted pairs; equal values are merged and zero masses dropped.
    pub fn from_unsorted(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        pairs.retain(|p| p.1 != 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        Self::new(&merged)
    }

    /// Equally weighted sample; duplicates become atoms with the combined weight.
    pub fn empirical(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InvalidDistribution("empty sample".into()));
        }
        if let Some(bad) = sample.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution(format!("non-finite sample value {bad}")));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut values = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for v in sorted {
            match values.last() {
                Some(&last) if last == v => *counts.last_mut().unwrap() += 1,
                _ => {
                    values.push(v);
                    counts.push(1);
                }
            }
        }
        let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        // exact k/n cumulative weights
        let mut running = 0usize;
        let cumulative: Vec<f64> = counts
            .iter()
            .map(|&c| {
                running += c;
                running as f64 / n
            })
            .collect();
        let total = sample.len();
        let mut above = total;
        let upper_tail: Vec<f64> = counts
            .iter()
            .map(|&c| {
                above -= c;
                above as f64 / n
            })
            .collect();
        Ok(Atoms {
            values,
            probs,
            cumulative,
            upper_tail,
        })
    }

    fn build(values: Vec<f64>, probs: Vec<f64>) -> Self {
        let n = values.len();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = CompensatedSum::new();
        for &p in &probs {
            acc.add(p);
            cumulative.push(acc.total().min(1.0));
        }
        cumulative[n - 1] = 1.0;
        let mut upper_tail = vec![0.0; n];
        let mut acc = CompensatedSum::new();
        for k in (0..n - 1).rev() {
            acc.add(probs[k + 1]);
            upper_tail[k] = acc.total().min(1.0);
        }
        Atoms {
            values,
            probs,
            cumulative,
            upper_tail,
        }
    }

    pub fn point(value: f64) -> Self {
        Atoms {
            values: vec![value],
            probs: vec![1.0],
            cumulative: vec![1.0],
            upper_tail: vec![0.0],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// `P[X <= x_k]` for every atom.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    // number of atoms <= x
    fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x)
    }

    fn count_lt(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v < x)
    }

    fn cdf(&self, x: f64) -> f64 {
        match self.count_le(x) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    fn cdf_strict(&self, x: f64) -> f64 {
        match self.count_lt(x) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    fn sf(&self, x: f64) -> f64 {
        match self.count_le(x) {
            0 => 1.0,
            k => self.upper_tail[k - 1],
        }
    }

    fn sf_inclusive(&self, x: f64) -> f64 {
        match self.count_lt(x) {
            0 => 1.0,
            k => self.upper_tail[k - 1],
        }
    }

    fn quantile_lower(&self, level: Level) -> f64 {
        let k = self.cumulative.partition_point(|&c| c < level.u);
        self.values[k.min(self.len() - 1)]
    }

    fn quantile_upper(&self, level: Level) -> f64 {
        let k = self.cumulative.partition_point(|&c| c <= level.u);
        self.values[k.min(self.len() - 1)]
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> Atoms {
        let pairs = self.iter().map(|(v, p)| (f(v), p)).collect();
        let mut mapped = Atoms::from_unsorted(pairs).expect("mapping preserves a valid atom list");
        if mapped.len() == self.len() {
            // monotone injective maps keep the exact cumulative weights
            let increasing = self.len() < 2 || f(self.values[0]) < f(self.values[1]);
            if increasing {
                mapped.cumulative = self.cumulative.clone();
                mapped.upper_tail = self.upper_tail.clone();
            }
        }
        mapped
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.iter().map(|(v, p)| v * p))
    }

    /// Atoms of `X + Y` for comonotone `X`, `Y`: quantile functions added level by level.
    fn comonotone_sum(&self, other: &Atoms) -> Atoms {
        let mut pairs = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        let mut previous = 0.0;
        while i < self.len() && j < other.len() {
            let ci = self.cumulative[i];
            let cj = other.cumulative[j];
            let level = ci.min(cj);
            let mass = level - previous;
            if mass > 0.0 {
                pairs.push((self.values[i] + other.values[j], mass));
            }
            previous = level;
            if ci <= level + BREAKPOINT_TOL {
                i += 1;
            }
            if cj <= level + BREAKPOINT_TOL {
                j += 1;
            }
        }
        let total: f64 = compensated_sum(pairs.iter().map(|p| p.1));
        if let Some(last) = pairs.last_mut() {
            last.1 += 1.0 - total;
        }
        Atoms::from_unsorted(pairs).expect("comonotone merge keeps total mass one")
    }
}

/// A monotone transform applied to a distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// `aX` with `a >= 0`.
    Scale(f64),
    /// `X + c`.
    Shift(f64),
    /// `max(X, 0)`.
    PosPart,
    /// `max(-X, 0)`.
    NegPart,
    /// `|X|`.
    Abs,
}

/// Leading behaviour of the quantile function at the ends of `(0, 1)`.
///
/// `Some(p)` means `|F^{<-}(u)|` grows like `t^{-p}` where `t` is the distance of `u` to
/// the respective end; `None` means the quantile function stays bounded there.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TailShape {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

fn max_tail(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Atoms(Atoms),
    /// `F(x) = (scale / -x)^index` for `x < -scale`, one otherwise.
    ParetoNegative { scale: f64, index: f64 },
    /// `F(x) = 1 - (scale / x)^tail_index` for `x >= scale`, zero otherwise.
    ParetoPositive { tail_index: f64, scale: f64 },
    Transformed { base: Arc<Distribution>, op: Transform },
    ComonotoneSum(Arc<Distribution>, Arc<Distribution>),
}

/// The law of a real random variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    kind: Kind,
}

impl From<Atoms> for Distribution {
    fn from(atoms: Atoms) -> Self {
        Distribution {
            kind: Kind::Atoms(atoms),
        }
    }
}

impl Distribution {
    pub fn empirical(sample: &[f64]) -> Result<Self> {
        Atoms::empirical(sample).map(Into::into)
    }

    pub fn atoms(pairs: &[(f64, f64)]) -> Result<Self> {
        Atoms::new(pairs).map(Into::into)
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidDistribution(format!("point mass at {value}")));
        }
        Ok(Atoms::point(value).into())
    }

    /// Negative Pareto law `F(x) = (scale / -x)^2` on `x < -scale`.
    pub fn pareto_negative(scale: f64) -> Result<Self> {
        Self::pareto_negative_with_index(scale, 2.0)
    }

    /// Negative Pareto law `F(x) = (scale / -x)^index` on `x < -scale`.
    pub fn pareto_negative_with_index(scale: f64, index: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("pareto scale {scale} must be positive")));
        }
        if !(index > 0.0 && index.is_finite()) {
            return Err(Error::domain(format!("pareto index {index} must be positive")));
        }
        Ok(Distribution {
            kind: Kind::ParetoNegative { scale, index },
        })
    }

    pub fn pareto_positive(tail_index: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("pareto scale {scale} must be positive")));
        }
        if !(tail_index > 0.0 && tail_index.is_finite()) {
            return Err(Error::domain(format!("pareto tail index {tail_index} must be positive")));
        }
        Ok(Distribution {
            kind: Kind::ParetoPositive { tail_index, scale },
        })
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn as_atoms(&self) -> Option<&Atoms> {
        match &self.kind {
            Kind::Atoms(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.as_atoms().is_some()
    }

    /// Applies a monotone transform. Discrete inputs stay discrete.
    pub fn transform(&self, op: Transform) -> Result<Self> {
        match op {
            Transform::Scale(a) if !(a >= 0.0 && a.is_finite()) => {
                return Err(Error::Unsupported(format!(
                    "scaling by {a}: only factors a >= 0 preserve the quantile calculus"
                )))
            }
            Transform::Shift(c) if !c.is_finite() => {
                return Err(Error::domain(format!("shift by {c}")))
            }
            Transform::Scale(0.0) => return Ok(Atoms::point(0.0).into()),
            _ => {}
        }
        if let Some(atoms) = self.as_atoms() {
            let mapped = match op {
                Transform::Scale(a) => atoms.map_values(|v| a * v),
                Transform::Shift(c) => atoms.map_values(|v| v + c),
                Transform::PosPart => atoms.map_values(|v| v.max(0.0)),
                Transform::NegPart => atoms.map_values(|v| (-v).max(0.0)),
                Transform::Abs => atoms.map_values(f64::abs),
            };
            return Ok(mapped.into());
        }
        Ok(Distribution {
            kind: Kind::Transformed {
                base: Arc::new(self.clone()),
                op,
            },
        })
    }

    pub fn scale(&self, a: f64) -> Result<Self> {
        self.transform(Transform::Scale(a))
    }

    pub fn shift(&self, c: f64) -> Result<Self> {
        self.transform(Transform::Shift(c))
    }

    pub fn positive_part(&self) -> Self {
        self.transform(Transform::PosPart).expect("positive part is always defined")
    }

    pub fn negative_part(&self) -> Self {
        self.transform(Transform::NegPart).expect("negative part is always defined")
    }

    pub fn abs(&self) -> Self {
        self.transform(Transform::Abs).expect("absolute value is always defined")
    }

    /// Law of `X + Y` for comonotone `X ~ self`, `Y ~ other`.
    pub fn comonotone_sum(&self, other: &Distribution) -> Self {
        match (self.as_atoms(), other.as_atoms()) {
            (Some(a), _) if a.len() == 1 => other.shift(a.values[0]).expect("finite shift"),
            (_, Some(b)) if b.len() == 1 => self.shift(b.values[0]).expect("finite shift"),
            (Some(a), Some(b)) => a.comonotone_sum(b).into(),
            _ => Distribution {
                kind: Kind::ComonotoneSum(Arc::new(self.clone()), Arc::new(other.clone())),
            },
        }
    }

    /// `P[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Atoms(a) => a.cdf(x),
            Kind::ParetoNegative { scale, index } => {
                if x < -scale {
                    (scale / -x).powf(*index)
                } else {
                    1.0
                }
            }
            Kind::ParetoPositive { tail_index, scale } => {
                if x < *scale {
                    0.0
                } else {
                    -(tail_index * (scale / x).ln()).exp_m1()
                }
            }
            Kind::Transformed { base, op } => match *op {
                Transform::Scale(a) => base.cdf(x / a),
                Transform::Shift(c) => base.cdf(x - c),
                Transform::PosPart => {
                    if x < 0.0 {
                        0.0
                    } else {
                        base.cdf(x)
                    }
                }
                Transform::NegPart => {
                    if x < 0.0 {
                        0.0
                    } else {
                        base.sf_inclusive(-x)
                    }
                }
                Transform::Abs => {
                    if x < 0.0 {
                        0.0
                    } else {
                        (base.cdf(x) - base.cdf_strict(-x)).clamp(0.0, 1.0)
                    }
                }
            },
            Kind::ComonotoneSum(..) => {
                let (p, from_complement) = self.level_sup(|q| q <= x);
                if from_complement {
                    1.0 - p
                } else {
                    p
                }
            }
        }
    }

    /// `P[X < x]`, the left limit of the distribution function.
    pub fn cdf_strict(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Atoms(a) => a.cdf_strict(x),
            Kind::ParetoNegative { .. } | Kind::ParetoPositive { .. } => self.cdf(x),
            Kind::Transformed { base, op } => match *op {
                Transform::Scale(a) => base.cdf_strict(x / a),
                Transform::Shift(c) => base.cdf_strict(x - c),
                Transform::PosPart => {
                    if x <= 0.0 {
                        0.0
                    } else {
                        base.cdf_strict(x)
                    }
                }
                Transform::NegPart => {
                    if x <= 0.0 {
                        0.0
                    } else {
                        base.sf(-x)
                    }
                }
                Transform::Abs => {
                    if x <= 0.0 {
                        0.0
                    } else {
                        (base.cdf_strict(x) - base.cdf(-x)).clamp(0.0, 1.0)
                    }
                }
            },
            Kind::ComonotoneSum(..) => {
                let (p, from_complement) = self.level_sup(|q| q < x);
                if from_complement {
                    1.0 - p
                } else {
                    p
                }
            }
        }
    }

    /// `P[X > x]`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Atoms(a) => a.sf(x),
            Kind::ParetoNegative { scale, index } => {
                if x < -scale {
                    -(index * (scale / -x).ln()).exp_m1()
                } else {
                    0.0
                }
            }
            Kind::ParetoPositive { tail_index, scale } => {
                if x < *scale {
                    1.0
                } else {
                    (scale / x).powf(*tail_index)
                }
            }
            Kind::Transformed { base, op } => match *op {
                Transform::Scale(a) => base.sf(x / a),
                Transform::Shift(c) => base.sf(x - c),
                Transform::PosPart => {
                    if x < 0.0 {
                        1.0
                    } else {
                        base.sf(x)
                    }
                }
                Transform::NegPart => {
                    if x < 0.0 {
                        1.0
                    } else {
                        base.cdf_strict(-x)
                    }
                }
                Transform::Abs => {
                    if x < 0.0 {
                        1.0
                    } else {
                        (base.sf(x) + base.cdf_strict(-x)).clamp(0.0, 1.0)
                    }
                }
            },
            Kind::ComonotoneSum(..) => {
                let (p, from_complement) = self.level_sup(|q| q <= x);
                if from_complement {
                    p
                } else {
                    1.0 - p
                }
            }
        }
    }

    /// `P[X >= x]`.
    pub fn sf_inclusive(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Atoms(a) => a.sf_inclusive(x),
            Kind::ParetoNegative { .. } | Kind::ParetoPositive { .. } => self.sf(x),
            Kind::Transformed { base, op } => match *op {
                Transform::Scale(a) => base.sf_inclusive(x / a),
                Transform::Shift(c) => base.sf_inclusive(x - c),
                Transform::PosPart => {
                    if x <= 0.0 {
                        1.0
                    } else {
                        base.sf_inclusive(x)
                    }
                }
                Transform::NegPart => {
                    if x <= 0.0 {
                        1.0
                    } else {
                        base.cdf(-x)
                    }
                }
                Transform::Abs => {
                    if x <= 0.0 {
                        1.0
                    } else {
                        (base.sf_inclusive(x) + base.cdf(-x)).clamp(0.0, 1.0)
                    }
                }
            },
            Kind::ComonotoneSum(..) => {
                let (p, from_complement) = self.level_sup(|q| q < x);
                if from_complement {
                    p
                } else {
                    1.0 - p
                }
            }
        }
    }

    /// Lower quantile `inf { x : F(x) >= u }` for `u` in `(0, 1)`.
    pub fn quantile_lower(&self, u: f64) -> Result<f64> {
        Ok(self.quantile_lower_at(Level::new(u)?))
    }

    /// Upper quantile `sup { x : F(x) <= u }` for `u` in `(0, 1)`.
    pub fn quantile_upper(&self, u: f64) -> Result<f64> {
        Ok(self.quantile_upper_at(Level::new(u)?))
    }

    pub fn quantiles(&self, u: f64) -> Result<QuantilePair> {
        let level = Level::new(u)?;
        Ok(QuantilePair {
            lower: self.quantile_lower_at(level),
            upper: self.quantile_upper_at(level),
        })
    }

    pub fn quantile_lower_at(&self, level: Level) -> f64 {
        match &self.kind {
            Kind::Atoms(a) => a.quantile_lower(level),
            Kind::ParetoNegative { scale, index } => -scale * level.u.powf(-1.0 / index),
            Kind::ParetoPositive { tail_index, scale } => {
                scale * level.complement.powf(-1.0 / tail_index)
            }
            Kind::Transformed { base, op } => match *op {
                Transform::Scale(a) => a * base.quantile_lower_at(level),
                Transform::Shift(c) => base.quantile_lower_at(level) + c,
                Transform::PosPart => base.quantile_lower_at(level).max(0.0),
                Transform::NegPart => (-base.quantile_upper_at(level.flip())).max(0.0),
                Transform::Abs => self.invert_lower(level),
            },
            Kind::ComonotoneSum(a, b) => a.quantile_lower_at(level) + b.quantile_lower_at(level),
        }
    }

    pub fn quantile_upper_at(&self, level: Level) -> f64 {
        match &self.kind {
            Kind::Atoms(a) => a.quantile_upper(level),
            Kind::ParetoNegative { .. } | Kind::ParetoPositive { .. } => {
                self.quantile_lower_at(level)
            }
            Kind::Transformed { base, op } => match *op {
                Transform::Scale(a) => a * base.quantile_upper_at(level),
                Transform::Shift(c) => base.quantile_upper_at(level) + c,
                Transform::PosPart => base.quantile_upper_at(level).max(0.0),
                Transform::NegPart => (-base.quantile_lower_at(level.flip())).max(0.0),
                Transform::Abs => self.invert_upper(level),
            },
            Kind::ComonotoneSum(a, b) => a.quantile_upper_at(level) + b.quantile_upper_at(level),
        }
    }

    /// `inf { x : F(x) >= u }` by bisection on the distribution function.
    fn invert_lower(&self, level: Level) -> f64 {
        let reached = |x: f64| {
            if level.u <= 0.5 {
                self.cdf(x) >= level.u
            } else {
                self.sf(x) <= level.complement
            }
        };
        let (lo, hi) = self.bracket(&reached);
        let (_, hi) = bisect(lo, hi, reached);
        hi
    }

    /// `sup { x : F(x) <= u }` by bisection on the distribution function.
    fn invert_upper(&self, level: Level) -> f64 {
        let below = |x: f64| {
            if level.u <= 0.5 {
                self.cdf(x) <= level.u
            } else {
                self.sf(x) >= level.complement
            }
        };
        let exceeded = |x: f64| !below(x);
        let (lo, hi) = self.bracket(&exceeded);
        let (lo, _) = bisect(lo, hi, exceeded);
        lo
    }

    /// Finds `lo < hi` with `pred(lo)` false and `pred(hi)` true for an increasing predicate.
    fn bracket(&self, pred: &impl Fn(f64) -> bool) -> (f64, f64) {
        let (support_lo, support_hi) = self.support();
        let mut lo = if support_lo.is_finite() { support_lo - 1.0 } else { -1.0 };
        let mut step = 1.0;
        while pred(lo) {
            step *= 2.0;
            lo -= step;
        }
        let mut hi = if support_hi.is_finite() { support_hi } else { lo.max(0.0) + 1.0 };
        let mut step = 1.0;
        while !pred(hi) {
            step *= 2.0;
            hi += step;
        }
        (lo, hi)
    }

    /// For comonotone sums: `sup { u : pred(F^{<-}(u)) }`, returned as `(u, false)` or as
    /// `(1 - u, true)` when the boundary sits in the upper half.
    fn level_sup(&self, pred: impl Fn(f64) -> bool) -> (f64, bool) {
        let holds = |level: Level| pred(self.quantile_lower_at(level));
        if holds(Level::unchecked(0.5, 0.5)) {
            // bisect on the complement v = 1 - u, where the predicate holds for large v
            let in_set = |v: f64| v >= 0.5 || holds(Level::unchecked(1.0 - v, v));
            if in_set(f64::MIN_POSITIVE) {
                return (0.0, true);
            }
            let (_, hi) = bisect(f64::MIN_POSITIVE, 0.5, in_set);
            (hi, true)
        } else {
            let outside = |u: f64| u >= 0.5 || !holds(Level::unchecked(u, 1.0 - u));
            if outside(f64::MIN_POSITIVE) {
                return (0.0, false);
            }
            let (lo, _) = bisect(f64::MIN_POSITIVE, 0.5, outside);
            (lo, false)
        }
    }

    /// `(inf, sup)` of the support, possibly infinite.
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            Kind::Atoms(a) => (a.values[0], a.values[a.len() - 1]),
            Kind::ParetoNegative { scale, .. } => (f64::NEG_INFINITY, -scale),
            Kind::ParetoPositive { scale, .. } => (*scale, f64::INFINITY),
            Kind::Transformed { base, op } => {
                let (lo, hi) = base.support();
                match *op {
                    Transform::Scale(a) => (a * lo, a * hi),
                    Transform::Shift(c) => (lo + c, hi + c),
                    Transform::PosPart => (lo.max(0.0), hi.max(0.0)),
                    Transform::NegPart => ((-hi).max(0.0), (-lo).max(0.0)),
                    Transform::Abs => {
                        let inner = if lo >= 0.0 {
                            lo
                        } else if hi <= 0.0 {
                            -hi
                        } else {
                            0.0
                        };
                        (inner, lo.abs().max(hi.abs()))
                    }
                }
            }
            Kind::ComonotoneSum(a, b) => {
                let (alo, ahi) = a.support();
                let (blo, bhi) = b.support();
                (alo + blo, ahi + bhi)
            }
        }
    }

    /// Levels in `(0, 1)` where the quantile function may jump or kink.
    pub fn level_breakpoints(&self) -> Vec<f64> {
        let mut out = match &self.kind {
            Kind::Atoms(a) => a.cumulative[..a.len() - 1].to_vec(),
            Kind::ParetoNegative { .. } | Kind::ParetoPositive { .. } => Vec::new(),
            Kind::Transformed { base, op } => {
                let inner = base.level_breakpoints();
                match *op {
                    Transform::Scale(_) | Transform::Shift(_) => inner,
                    Transform::PosPart => {
                        let mut v = inner;
                        v.push(base.cdf(0.0));
                        v.push(base.cdf_strict(0.0));
                        v
                    }
                    Transform::NegPart => {
                        let mut v: Vec<f64> = inner.iter().map(|p| 1.0 - p).collect();
                        v.push(base.sf(0.0));
                        v.push(base.sf_inclusive(0.0));
                        v
                    }
                    Transform::Abs => {
                        let mut v = Vec::new();
                        for x in base.value_breakpoints() {
                            v.push(self.cdf(x.abs()));
                            v.push(self.cdf_strict(x.abs()));
                        }
                        v
                    }
                }
            }
            Kind::ComonotoneSum(a, b) => {
                let mut v = a.level_breakpoints();
                v.extend(b.level_breakpoints());
                v
            }
        };
        out.retain(|&p| p > 0.0 && p < 1.0);
        sorted_unique(out, BREAKPOINT_TOL)
    }

    /// Points of the real line where the distribution function may jump or kink.
    pub fn value_breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(a) = self.as_atoms() {
            out.extend_from_slice(&a.values);
        } else {
            for p in self.level_breakpoints() {
                let level = Level::unchecked(p, 1.0 - p);
                out.push(self.quantile_lower_at(level));
                out.push(self.quantile_upper_at(level));
            }
            let (lo, hi) = self.support();
            out.push(lo);
            out.push(hi);
        }
        sorted_unique(out, 0.0)
    }

    pub fn tail_shape(&self) -> TailShape {
        match &self.kind {
            Kind::Atoms(_) => TailShape::default(),
            Kind::ParetoNegative { index, .. } => TailShape {
                lower: Some(1.0 / index),
                upper: None,
            },
            Kind::ParetoPositive { tail_index, .. } => TailShape {
                lower: None,
                upper: Some(1.0 / tail_index),
            },
            Kind::Transformed { base, op } => {
                let t = base.tail_shape();
                match *op {
                    Transform::Scale(_) | Transform::Shift(_) => t,
                    Transform::PosPart => TailShape {
                        lower: None,
                        upper: t.upper,
                    },
                    Transform::NegPart => TailShape {
                        lower: None,
                        upper: t.lower,
                    },
                    Transform::Abs => TailShape {
                        lower: None,
                        upper: max_tail(t.lower, t.upper),
                    },
                }
            }
            Kind::ComonotoneSum(a, b) => {
                let (ta, tb) = (a.tail_shape(), b.tail_shape());
                TailShape {
                    lower: max_tail(ta.lower, tb.lower),
                    upper: max_tail(ta.upper, tb.upper),
                }
            }
        }
    }

    /// `E[X]` for discrete laws, `None` otherwise.
    pub fn discrete_mean(&self) -> Option<f64> {
        self.as_atoms().map(Atoms::mean)
    }

    /// Short human-readable description.
    pub fn describe(&self) -> String {
        match &self.kind {
            Kind::Atoms(a) if a.len() == 1 => format!("point({})", a.values[0]),
            Kind::Atoms(a) => format!("atoms(n={})", a.len()),
            Kind::ParetoNegative { scale, index } => {
                format!("pareto_negative(scale={scale}, index={index})")
            }
            Kind::ParetoPositive { tail_index, scale } => {
                format!("pareto_positive(tail_index={tail_index}, scale={scale})")
            }
            Kind::Transformed { base, op } => {
                let op = match op {
                    Transform::Scale(a) => format!("scale({a})"),
                    Transform::Shift(c) => format!("shift({c})"),
                    Transform::PosPart => "pos_part".into(),
                    Transform::NegPart => "neg_part".into(),
                    Transform::Abs => "abs".into(),
                };
                format!("{op}[{}]", base.describe())
            }
            Kind::ComonotoneSum(a, b) => format!("comonotone({} + {})", a.describe(), b.describe()),
        }
    }
}

/// Lower and upper quantile at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantilePair {
    pub lower: f64,
    pub upper: f64,
}

/// Bisection on an increasing predicate with `pred(lo) == false` and `pred(hi) == true`,
/// down to adjacent floating point numbers.
fn bisect(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> (f64, f64) {
    for _ in 0..2200 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}
