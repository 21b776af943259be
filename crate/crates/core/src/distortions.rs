//! Distortion functions, the probability measures they induce on `(0, 1)`, spectral
//! densities and the mixing measure behind the expected-shortfall mixture.
//!
//! A distortion is stored as contiguous pieces over `[0, 1)`. On each piece
//!
//! ```text
//! D(u) = offset + slope * (u - origin) + coefficient * ((u - origin) / width)^exponent
//! ```
//!
//! Jumps live at piece boundaries; `D` is right-continuous, so the value at a boundary is
//! the value of the piece starting there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Tolerance for total mass, jump detection and endpoint conditions.
pub const MASS_TOL: f64 = 1e-12;
/// Grid resolution of the opaque midpoint test: `u = k / 512`.
pub const GRID_U_DENOM: u32 = 512;
/// Grid resolution of the opaque midpoint test: `eps = j / 1024`.
pub const GRID_EPS_DENOM: u32 = 1024;

/// One analytic piece of a distortion, density or mixing measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub coefficient: f64,
    #[serde(default)]
    pub origin: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub exponent: f64,
}

fn one() -> f64 {
    1.0
}

impl Piece {
    /// Constant `value` on `[start, end)`.
    pub fn constant(start: f64, end: f64, value: f64) -> Self {
        Piece {
            start,
            end,
            offset: value,
            slope: 0.0,
            coefficient: 0.0,
            origin: start,
            width: 1.0,
            exponent: 1.0,
        }
    }

    /// `intercept + slope * u` on `[start, end)`.
    pub fn linear(start: f64, end: f64, intercept: f64, slope: f64) -> Self {
        Piece {
            start,
            end,
            offset: intercept,
            slope,
            coefficient: 0.0,
            origin: 0.0,
            width: 1.0,
            exponent: 1.0,
        }
    }

    /// `offset + coefficient * ((u - origin) / width)^exponent` on `[start, end)`.
    pub fn power(
        start: f64,
        end: f64,
        offset: f64,
        coefficient: f64,
        origin: f64,
        width: f64,
        exponent: f64,
    ) -> Self {
        Piece {
            start,
            end,
            offset,
            slope: 0.0,
            coefficient,
            origin,
            width,
            exponent,
        }
    }

    fn has_power(&self) -> bool {
        self.coefficient != 0.0 && self.exponent != 0.0
    }

    fn scaled(&self, u: f64) -> f64 {
        ((u - self.origin) / self.width).max(0.0)
    }

    pub fn value(&self, u: f64) -> f64 {
        let mut v = self.offset + self.slope * (u - self.origin);
        if self.coefficient != 0.0 {
            v += self.coefficient * self.scaled(u).powf(self.exponent);
        }
        v
    }

    pub fn derivative(&self, u: f64) -> f64 {
        let mut d = self.slope;
        if self.has_power() {
            d += self.coefficient * self.exponent / self.width
                * self.scaled(u).powf(self.exponent - 1.0);
        }
        d
    }

    /// The derivative as a piece on the same interval.
    pub fn derivative_piece(&self) -> Piece {
        let mut p = Piece::constant(self.start, self.end, self.slope);
        p.origin = self.origin;
        p.width = self.width;
        if self.has_power() {
            let c = self.coefficient * self.exponent / self.width;
            if self.exponent == 1.0 {
                p.offset += c;
            } else {
                p.coefficient = c;
                p.exponent = self.exponent - 1.0;
            }
        }
        p
    }

    /// The primitive on this interval taking the value `at_start` at `start`.
    /// Only defined for pieces without a slope term.
    fn primitive(&self, at_start: f64) -> Piece {
        debug_assert_eq!(self.slope, 0.0);
        let mut p = Piece {
            start: self.start,
            end: self.end,
            offset: 0.0,
            slope: self.offset,
            coefficient: 0.0,
            origin: self.origin,
            width: self.width,
            exponent: 1.0,
        };
        if self.has_power() {
            p.coefficient = self.coefficient * self.width / (self.exponent + 1.0);
            p.exponent = self.exponent + 1.0;
        } else if self.coefficient != 0.0 {
            // exponent zero: a constant folded into the slope
            p.slope += self.coefficient;
        }
        p.offset = at_start - p.value(self.start);
        p
    }

    /// `int_a^b value(u) du` in closed form.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let (za, zb) = (a - self.origin, b - self.origin);
        let mut total = self.offset * (b - a) + 0.5 * self.slope * (zb * zb - za * za);
        if self.coefficient != 0.0 {
            let e = self.exponent + 1.0;
            total += self.coefficient * self.width / e * (self.scaled(b).powf(e) - self.scaled(a).powf(e));
        }
        total
    }

    fn is_zero(&self) -> bool {
        self.offset == 0.0 && self.slope == 0.0 && (self.coefficient == 0.0)
    }

    fn has_zero_derivative(&self) -> bool {
        self.slope == 0.0 && !self.has_power()
    }

    fn is_increasing(&self) -> bool {
        self.slope >= 0.0 && (self.coefficient >= 0.0 || self.exponent == 0.0)
    }

    fn is_convex(&self) -> bool {
        !self.has_power() || self.exponent >= 1.0
    }

    fn validate(&self, what: &str) -> std::result::Result<(), String> {
        let fields = [
            self.start,
            self.end,
            self.offset,
            self.slope,
            self.coefficient,
            self.origin,
            self.width,
            self.exponent,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(format!("{what} piece [{}, {}) has a non-finite field", self.start, self.end));
        }
        if self.start >= self.end {
            return Err(format!("{what} piece [{}, {}) is empty", self.start, self.end));
        }
        if self.width <= 0.0 {
            return Err(format!("{what} piece [{}, {}) has non-positive width", self.start, self.end));
        }
        if self.exponent < 0.0 {
            return Err(format!("{what} piece [{}, {}) has negative exponent", self.start, self.end));
        }
        if self.origin > self.start {
            return Err(format!(
                "{what} piece [{}, {}) has origin {} to the right of its start",
                self.start, self.end, self.origin
            ));
        }
        Ok(())
    }
}

fn check_cover(pieces: &[Piece], what: &str) -> std::result::Result<(), String> {
    let first = pieces.first().ok_or_else(|| format!("{what} has no pieces"))?;
    if first.start != 0.0 {
        return Err(format!("{what} must start at 0, starts at {}", first.start));
    }
    let last = pieces.last().unwrap();
    if last.end != 1.0 {
        return Err(format!("{what} must end at 1, ends at {}", last.end));
    }
    for w in pieces.windows(2) {
        if w[0].end != w[1].start {
            return Err(format!(
                "{what} pieces are not contiguous: [{}, {}) followed by [{}, {})",
                w[0].start, w[0].end, w[1].start, w[1].end
            ));
        }
    }
    for p in pieces {
        p.validate(what)?;
    }
    Ok(())
}

fn piece_index(pieces: &[Piece], u: f64) -> usize {
    pieces.partition_point(|p| p.start <= u).saturating_sub(1)
}

/// Closed-form tags for the named families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Expectation,
    #[serde(rename = "var")]
    ValueAtRisk { alpha: f64 },
    #[serde(rename = "es")]
    ExpectedShortfall { alpha: f64 },
    #[serde(rename = "es_n")]
    ExpectedShortfallOrder { n: u32, alpha: f64 },
    Threshold { delta: f64 },
    SqrtExample,
    Piecewise,
    Spectral,
}

impl Family {
    pub fn label(&self) -> String {
        match self {
            Family::Expectation => "expectation".into(),
            Family::ValueAtRisk { alpha } => format!("var({alpha})"),
            Family::ExpectedShortfall { alpha } => format!("es({alpha})"),
            Family::ExpectedShortfallOrder { n, alpha } => format!("es_n({n}, {alpha})"),
            Family::Threshold { delta } => format!("threshold({delta})"),
            Family::SqrtExample => "sqrt_example".into(),
            Family::Piecewise => "piecewise".into(),
            Family::Spectral => "spectral".into(),
        }
    }
}

/// A point `(u, eps)` with `2 D(u) > D(u - eps) + D(u + eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidpointWitness {
    pub u: f64,
    pub eps: f64,
    /// `2 D(u) - D(u - eps) - D(u + eps)`, strictly positive.
    pub excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub convex: bool,
    pub witness: Option<MidpointWitness>,
}

/// Increasing right-continuous `D: [0, 1] -> [0, 1]` with `D(0) = 0` and `D(1-) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distortion {
    pieces: Vec<Piece>,
    family: Family,
}

impl Distortion {
    pub fn from_pieces(pieces: Vec<Piece>) -> Result<Self> {
        Self::with_family(pieces, Family::Piecewise)
    }

    fn with_family(pieces: Vec<Piece>, family: Family) -> Result<Self> {
        check_cover(&pieces, "distortion").map_err(Error::InvalidDistortion)?;
        for p in &pieces {
            if !p.is_increasing() {
                return Err(Error::InvalidDistortion(format!(
                    "piece [{}, {}) is not increasing",
                    p.start, p.end
                )));
            }
        }
        let at_zero = pieces[0].value(0.0);
        if at_zero.abs() > MASS_TOL {
            return Err(Error::InvalidDistortion(format!("D(0) = {at_zero}, expected 0")));
        }
        for w in pieces.windows(2) {
            let t = w[1].start;
            let jump = w[1].value(t) - w[0].value(t);
            if jump < -MASS_TOL {
                return Err(Error::InvalidDistortion(format!(
                    "D decreases by {} at {t}",
                    -jump
                )));
            }
        }
        let at_one = pieces.last().unwrap().value(1.0);
        if (at_one - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistortion(format!(
                "D(1-) = {at_one}, expected 1"
            )));
        }
        Ok(Distortion { pieces, family })
    }

    pub fn expectation() -> Self {
        Distortion {
            pieces: vec![Piece::power(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0)],
            family: Family::Expectation,
        }
    }

    /// `D(u) = 1` for `u >= alpha`, zero below.
    pub fn value_at_risk(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("value at risk needs alpha in (0, 1), got {alpha}")));
        }
        Ok(Distortion {
            pieces: vec![Piece::constant(0.0, alpha, 0.0), Piece::constant(alpha, 1.0, 1.0)],
            family: Family::ValueAtRisk { alpha },
        })
    }

    /// `D(u) = (u - alpha) / (1 - alpha)` on `[alpha, 1]`, zero below.
    pub fn expected_shortfall(alpha: f64) -> Result<Self> {
        let mut d = Self::expected_shortfall_order(1, alpha)?;
        d.family = if alpha == 0.0 {
            Family::Expectation
        } else {
            Family::ExpectedShortfall { alpha }
        };
        Ok(d)
    }

    /// `D(u) = ((u - alpha) / (1 - alpha))^n` on `[alpha, 1]`, zero below.
    pub fn expected_shortfall_order(n: u32, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("expected shortfall order n must be at least 1"));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::domain(format!(
                "expected shortfall needs alpha in [0, 1), got {alpha}"
            )));
        }
        let tail = Piece::power(alpha, 1.0, 0.0, 1.0, alpha, 1.0 - alpha, n as f64);
        let pieces = if alpha == 0.0 {
            vec![tail]
        } else {
            vec![Piece::constant(0.0, alpha, 0.0), tail]
        };
        Ok(Distortion {
            pieces,
            family: Family::ExpectedShortfallOrder { n, alpha },
        })
    }

    /// `D(u) = u` below `delta`, one from `delta` on.
    pub fn threshold(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("threshold needs delta in (0, 1), got {delta}")));
        }
        Ok(Distortion {
            pieces: vec![
                Piece::power(0.0, delta, 0.0, 1.0, 0.0, 1.0, 1.0),
                Piece::constant(delta, 1.0, 1.0),
            ],
            family: Family::Threshold { delta },
        })
    }

    /// `D(u) = sqrt(u) / 2` below `1/4`, `u` from `1/4` on.
    pub fn sqrt_example() -> Self {
        Distortion {
            pieces: vec![
                Piece::power(0.0, 0.25, 0.0, 0.5, 0.0, 1.0, 0.5),
                Piece::power(0.25, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0),
            ],
            family: Family::SqrtExample,
        }
    }

    /// Builds a named family. `Piecewise` and `Spectral` need explicit pieces.
    pub fn named(family: &Family) -> Result<Self> {
        match *family {
            Family::Expectation => Ok(Self::expectation()),
            Family::ValueAtRisk { alpha } => Self::value_at_risk(alpha),
            Family::ExpectedShortfall { alpha } => Self::expected_shortfall(alpha),
            Family::ExpectedShortfallOrder { n, alpha } => Self::expected_shortfall_order(n, alpha),
            Family::Threshold { delta } => Self::threshold(delta),
            Family::SqrtExample => Ok(Self::sqrt_example()),
            Family::Piecewise | Family::Spectral => Err(Error::InvalidDistortion(format!(
                "{} distortions are built from explicit pieces",
                family.label()
            ))),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn label(&self) -> String {
        self.family.label()
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Interior boundaries between pieces.
    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces.iter().skip(1).map(|p| p.start)
    }

    /// `D(u)` for `u` in `[0, 1]`, right-continuous at jumps.
    pub fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        self.pieces[piece_index(&self.pieces, u)].value(u).clamp(0.0, 1.0)
    }

    /// `D(u-)`.
    pub fn left_limit(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u > 1.0 {
            return 1.0;
        }
        let i = self.pieces.partition_point(|p| p.start < u).saturating_sub(1);
        self.pieces[i].value(u).clamp(0.0, 1.0)
    }

    /// `1 - D(1 - v)`, accurate for small `v`.
    pub fn complement(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let last = self.pieces.last().unwrap();
        if v < 1.0 - last.start {
            let mut out = (1.0 - last.value(1.0)) + last.slope * v;
            if last.coefficient != 0.0 {
                let z = (1.0 - last.origin) / last.width;
                let dz = v / last.width;
                let e = last.exponent;
                out += last.coefficient * z.powf(e) * -(e * (-dz / z).ln_1p()).exp_m1();
            }
            out.clamp(0.0, 1.0)
        } else {
            1.0 - self.eval(1.0 - v)
        }
    }

    /// Jump heights `D(t) - D(t-)` at interior knots, above the mass tolerance.
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        self.pieces
            .windows(2)
            .filter_map(|w| {
                let t = w[1].start;
                let jump = w[1].value(t) - w[0].value(t);
                (jump > MASS_TOL).then_some((t, jump))
            })
            .collect()
    }

    /// The probability measure `Q` on `(0, 1)` with distribution function `D`.
    pub fn measure(&self) -> DistortionMeasure {
        DistortionMeasure {
            atoms: self.jumps(),
            density: self
                .pieces
                .iter()
                .filter(|p| !p.has_zero_derivative())
                .map(Piece::derivative_piece)
                .collect(),
        }
    }

    /// Local exponent `d` with `Q`-density of order `u^d` near zero, or `None` when `Q`
    /// puts no mass on some interval `(0, delta)`.
    pub fn density_exponent_near_zero(&self) -> Option<f64> {
        let first = &self.pieces[0];
        if first.has_zero_derivative() {
            return None;
        }
        let mut d = f64::INFINITY;
        if first.slope > 0.0 {
            d = 0.0;
        }
        if first.has_power() {
            d = d.min(if first.origin == 0.0 { first.exponent - 1.0 } else { 0.0 });
        }
        Some(d)
    }

    /// `Some(0)` when the density of `Q` is bounded and positive near one, `None` when `Q`
    /// puts no mass on some interval `(1 - delta, 1)`.
    pub fn density_exponent_near_one(&self) -> Option<f64> {
        let last = self.pieces.last().unwrap();
        (!last.has_zero_derivative()).then_some(0.0)
    }

    /// `true` when `D` vanishes on some `(0, delta)`.
    pub fn vanishes_near_zero(&self) -> bool {
        let first = &self.pieces[0];
        first.is_zero() || (first.has_zero_derivative() && first.value(0.0) == 0.0)
    }

    fn excess(&self, u: f64, eps: f64) -> f64 {
        2.0 * self.eval(u) - self.eval(u - eps) - self.eval(u + eps)
    }

    /// Structural convexity test over the piecewise representation.
    ///
    /// A distortion is convex iff it has no interior jumps, every piece is convex and the
    /// derivative does not drop at any knot. On failure the report carries a midpoint
    /// witness located at the first defect.
    pub fn convexity(&self) -> ConvexityReport {
        let mut defect: Option<(f64, f64)> = None;
        for (i, p) in self.pieces.iter().enumerate() {
            if i > 0 {
                let prev = &self.pieces[i - 1];
                let t = p.start;
                let jump = p.value(t) - prev.value(t);
                let (left, right) = (prev.derivative(t), p.derivative(t));
                let kink = left > right + MASS_TOL * (1.0 + left.abs());
                if jump > MASS_TOL || kink {
                    defect = Some((t, f64::INFINITY));
                    break;
                }
            }
            if !p.is_convex() {
                defect = Some((0.5 * (p.start + p.end), 0.5 * (p.end - p.start)));
                break;
            }
        }
        match defect {
            None => ConvexityReport {
                convex: true,
                witness: None,
            },
            Some((u, reach)) => ConvexityReport {
                convex: false,
                witness: self.witness_near(u, reach).or_else(|| self.grid_witness()),
            },
        }
    }

    pub fn is_convex(&self) -> bool {
        self.convexity().convex
    }

    /// Starts at `eps = min(u, 1 - u) / 2` (capped by `reach`) and halves until the
    /// midpoint inequality fails strictly.
    fn witness_near(&self, u: f64, reach: f64) -> Option<MidpointWitness> {
        let mut eps = (0.5 * u.min(1.0 - u)).min(reach);
        for _ in 0..64 {
            let excess = self.excess(u, eps);
            if excess > MASS_TOL {
                return Some(MidpointWitness { u, eps, excess });
            }
            eps *= 0.5;
        }
        None
    }

    /// Midpoint test on the lattice `u = k/512`, `eps = j/1024`.
    pub fn grid_witness(&self) -> Option<MidpointWitness> {
        grid_midpoint_witness(|u| self.eval(u))
    }

    /// The spectral density `s = D'` of a convex distortion.
    pub fn spectral(&self) -> Result<SpectralDensity> {
        let report = self.convexity();
        if !report.convex {
            return Err(match report.witness {
                Some(w) => Error::NotSpectral(w),
                None => Error::WitnessNotFound,
            });
        }
        SpectralDensity::new(self.pieces.iter().map(Piece::derivative_piece).collect())
    }
}

/// Opaque-form midpoint convexity check: scans `u = k/512` ascending and, for each `u`,
/// `eps = j/1024 < min(u, 1 - u)` ascending; returns the first strict violation.
pub fn grid_midpoint_witness(f: impl Fn(f64) -> f64) -> Option<MidpointWitness> {
    for k in 1..GRID_U_DENOM {
        let u = k as f64 / GRID_U_DENOM as f64;
        let radius = u.min(1.0 - u);
        let fu = f(u);
        for j in 1..GRID_EPS_DENOM {
            let eps = j as f64 / GRID_EPS_DENOM as f64;
            if eps >= radius {
                break;
            }
            let excess = 2.0 * fu - f(u - eps) - f(u + eps);
            if excess > MASS_TOL {
                return Some(MidpointWitness { u, eps, excess });
            }
        }
    }
    None
}

/// The measure `Q` induced by a distortion: atoms at jumps plus a piecewise density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionMeasure {
    /// `(location, mass)` pairs.
    pub atoms: Vec<(f64, f64)>,
    pub density: Vec<Piece>,
}

impl DistortionMeasure {
    pub fn total_mass(&self) -> f64 {
        compensated_sum(
            self.atoms
                .iter()
                .map(|a| a.1)
                .chain(self.density.iter().map(|p| p.integral(p.start, p.end))),
        )
    }

    /// Density value at `u` (right-continuous).
    pub fn density_at(&self, u: f64) -> f64 {
        self.density
            .iter()
            .find(|p| p.start <= u && u < p.end)
            .map_or(0.0, |p| p.value(u))
    }
}

/// Increasing density `s` on `(0, 1)` with unit integral.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralDensity {
    pieces: Vec<Piece>,
}

impl SpectralDensity {
    /// Pieces must cover `[0, 1)` and carry no slope term (constant plus power form).
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        check_cover(&pieces, "spectral density").map_err(Error::InvalidSpectral)?;
        for p in &pieces {
            if p.slope != 0.0 {
                return Err(Error::InvalidSpectral(format!(
                    "piece [{}, {}) must be constant or power",
                    p.start, p.end
                )));
            }
            if !p.is_increasing() {
                return Err(Error::InvalidSpectral(format!(
                    "piece [{}, {}) is decreasing",
                    p.start, p.end
                )));
            }
        }
        if pieces[0].value(0.0) < -MASS_TOL {
            return Err(Error::InvalidSpectral("density is negative near 0".into()));
        }
        for w in pieces.windows(2) {
            let t = w[1].start;
            if w[1].value(t) < w[0].value(t) - MASS_TOL * (1.0 + w[0].value(t).abs()) {
                return Err(Error::InvalidSpectral(format!("density decreases at {t}")));
            }
        }
        let total = compensated_sum(pieces.iter().map(|p| p.integral(p.start, p.end)));
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidSpectral(format!("density integrates to {total}, expected 1")));
        }
        Ok(SpectralDensity { pieces })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `s(u)`, right-continuous.
    pub fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.pieces[0].value(0.0);
        }
        let u = u.min(1.0);
        self.pieces[piece_index(&self.pieces, u)].value(u)
    }

    /// The convex distortion with derivative `s`: `D(u) = int_0^u s`.
    pub fn distortion(&self) -> Result<Distortion> {
        let mut acc = 0.0;
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            let prim = p.primitive(acc);
            acc = prim.value(p.end);
            pieces.push(prim);
        }
        Distortion::with_family(pieces, Family::Spectral)
    }

    /// The measure `nu` on `[0, 1)` with `nu([0, u]) = s(u)`: an atom `s(0+)` at zero,
    /// atoms at the jumps of `s`, and density `s'` elsewhere.
    pub fn mixture_measure(&self) -> MixtureMeasure {
        let mut atoms = Vec::new();
        let at_zero = self.pieces[0].value(0.0);
        if at_zero > 0.0 {
            atoms.push((0.0, at_zero));
        }
        for w in self.pieces.windows(2) {
            let t = w[1].start;
            let jump = w[1].value(t) - w[0].value(t);
            if jump > MASS_TOL {
                atoms.push((t, jump));
            }
        }
        let density = self
            .pieces
            .iter()
            .filter(|p| !p.has_zero_derivative())
            .map(Piece::derivative_piece)
            .collect();
        MixtureMeasure { atoms, density }
    }
}

/// Mixing measure on `[0, 1)` for the expected-shortfall representation of a spectral
/// risk measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureMeasure {
    pub atoms: Vec<(f64, f64)>,
    pub density: Vec<Piece>,
}

impl MixtureMeasure {
    /// `nu([0, u])`.
    pub fn cumulative(&self, u: f64) -> f64 {
        let atoms = self.atoms.iter().filter(|a| a.0 <= u).map(|a| a.1);
        let density = self
            .density
            .iter()
            .filter(|p| p.start < u)
            .map(|p| p.integral(p.start, p.end.min(u)));
        compensated_sum(atoms.chain(density))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> impl Iterator<Item = f64> {
        (0..=n).map(move |k| k as f64 / n as f64)
    }

    #[test]
    fn es_half_values() {
        let d = Distortion::expected_shortfall(0.5).unwrap();
        assert_eq!(d.eval(0.3), 0.0);
        assert_eq!(d.eval(0.75), 0.5);
        assert_eq!(d.eval(1.0), 1.0);
    }

    #[test]
    fn es_order_one_is_es_and_es_zero_is_expectation() {
        let a = Distortion::expected_shortfall_order(1, 0.3).unwrap();
        let b = Distortion::expected_shortfall(0.3).unwrap();
        assert_eq!(a.pieces(), b.pieces());
        let e = Distortion::expected_shortfall(0.0).unwrap();
        assert_eq!(e.pieces(), Distortion::expectation().pieces());
    }

    #[test]
    fn var_is_right_closed() {
        let d = Distortion::value_at_risk(0.25).unwrap();
        assert_eq!(d.eval(0.2), 0.0);
        assert_eq!(d.eval(0.25), 1.0);
        assert_eq!(d.left_limit(0.25), 0.0);
        assert_eq!(Distortion::value_at_risk(0.5).unwrap().eval(0.5), 1.0);
        assert_eq!(Distortion::expectation().eval(0.37), 0.37);
    }

    #[test]
    fn parameters_out_of_range() {
        assert!(matches!(Distortion::value_at_risk(0.0), Err(Error::Domain(_))));
        assert!(matches!(Distortion::value_at_risk(1.0), Err(Error::Domain(_))));
        assert!(matches!(Distortion::expected_shortfall(1.0), Err(Error::Domain(_))));
        assert!(matches!(Distortion::expected_shortfall(-0.1), Err(Error::Domain(_))));
        assert!(matches!(Distortion::expected_shortfall_order(0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(Distortion::threshold(1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn measures_of_named_families() {
        let m = Distortion::value_at_risk(0.4).unwrap().measure();
        assert_eq!(m.atoms, vec![(0.4, 1.0)]);
        assert!(m.density.iter().all(|p| p.integral(p.start, p.end) == 0.0));

        let m = Distortion::expected_shortfall(0.2).unwrap().measure();
        assert!(m.atoms.is_empty());
        assert!((m.density_at(0.5) - 1.25).abs() < 1e-15);
        assert_eq!(m.density_at(0.1), 0.0);

        let m = Distortion::threshold(0.3).unwrap().measure();
        assert_eq!(m.atoms.len(), 1);
        assert_eq!(m.atoms[0].0, 0.3);
        assert!((m.atoms[0].1 - 0.7).abs() < 1e-15);
        assert_eq!(m.density_at(0.1), 1.0);
        assert_eq!(m.density_at(0.5), 0.0);
    }

    #[test]
    fn measure_mass_is_one() {
        for d in [
            Distortion::expectation(),
            Distortion::value_at_risk(0.3).unwrap(),
            Distortion::expected_shortfall_order(4, 0.6).unwrap(),
            Distortion::threshold(0.7).unwrap(),
            Distortion::sqrt_example(),
        ] {
            assert!((d.measure().total_mass() - 1.0).abs() < 1e-12, "{}", d.label());
        }
    }

    #[test]
    fn convexity_of_named_families() {
        assert!(Distortion::expected_shortfall_order(3, 0.2).unwrap().is_convex());
        assert!(Distortion::expectation().is_convex());

        let r = Distortion::value_at_risk(0.5).unwrap().convexity();
        assert!(!r.convex);
        let w = r.witness.unwrap();
        assert_eq!((w.u, w.eps), (0.5, 0.25));
        assert_eq!(w.excess, 1.0);

        assert!(!Distortion::threshold(0.5).unwrap().is_convex());
        assert!(!Distortion::sqrt_example().is_convex());
    }

    #[test]
    fn grid_test_on_sqrt_example_picks_smallest_u() {
        let w = Distortion::sqrt_example().grid_witness().unwrap();
        assert_eq!(w.u, 1.0 / 512.0);
        assert_eq!(w.eps, 1.0 / 1024.0);
    }

    #[test]
    fn kink_with_decreasing_slope_is_not_convex() {
        let d = Distortion::from_pieces(vec![
            Piece::linear(0.0, 0.5, 0.0, 1.5),
            Piece::linear(0.5, 1.0, 0.5, 0.5),
        ])
        .unwrap();
        let r = d.convexity();
        assert!(!r.convex);
        assert_eq!(r.witness.unwrap().u, 0.5);
    }

    #[test]
    fn invalid_distortions_are_rejected() {
        // does not reach one
        assert!(Distortion::from_pieces(vec![Piece::linear(0.0, 1.0, 0.0, 0.5)]).is_err());
        // decreasing jump
        assert!(Distortion::from_pieces(vec![
            Piece::linear(0.0, 0.5, 0.0, 1.0),
            Piece::linear(0.5, 1.0, -1.0, 2.0),
        ])
        .is_err());
        // gap
        assert!(Distortion::from_pieces(vec![
            Piece::linear(0.0, 0.4, 0.0, 1.0),
            Piece::linear(0.5, 1.0, 0.0, 1.0),
        ])
        .is_err());
    }

    #[test]
    fn spectral_densities_of_named_families() {
        let s = Distortion::expected_shortfall(0.25).unwrap().spectral().unwrap();
        assert_eq!(s.eval(0.1), 0.0);
        assert!((s.eval(0.5) - 4.0 / 3.0).abs() < 1e-15);

        let s = Distortion::expectation().spectral().unwrap();
        for u in [0.0, 0.3, 0.99] {
            assert_eq!(s.eval(u), 1.0);
        }

        let (n, alpha) = (3u32, 0.2);
        let s = Distortion::expected_shortfall_order(n, alpha).unwrap().spectral().unwrap();
        for u in [0.1, 0.3, 0.6, 0.95] {
            let expected = if u > alpha {
                n as f64 / (1.0 - alpha) * ((u - alpha) / (1.0 - alpha)).powi(n as i32 - 1)
            } else {
                0.0
            };
            assert!((s.eval(u) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn spectral_of_var_fails_with_witness() {
        match Distortion::value_at_risk(0.5).unwrap().spectral() {
            Err(Error::NotSpectral(w)) => assert_eq!(w.u, 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distortion_of_linear_density_is_square() {
        let s = SpectralDensity::new(vec![Piece::power(0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 1.0)]).unwrap();
        let d = s.distortion().unwrap();
        for u in grid(100) {
            assert!((d.eval(u) - u * u).abs() < 1e-15);
        }
        let flat = SpectralDensity::new(vec![Piece::constant(0.0, 1.0, 1.0)]).unwrap();
        let d = flat.distortion().unwrap();
        for u in grid(100) {
            assert!((d.eval(u) - u).abs() < 1e-15);
        }
    }

    #[test]
    fn spectral_round_trip_es() {
        let d = Distortion::expected_shortfall(0.75).unwrap();
        let back = d.spectral().unwrap().distortion().unwrap();
        for u in grid(1000) {
            assert!((back.eval(u) - d.eval(u)).abs() <= 1e-12);
        }
    }

    #[test]
    fn invalid_spectral_densities() {
        // decreasing
        assert!(SpectralDensity::new(vec![
            Piece::constant(0.0, 0.5, 1.5),
            Piece::constant(0.5, 1.0, 0.5)
        ])
        .is_err());
        // wrong mass
        assert!(SpectralDensity::new(vec![Piece::constant(0.0, 1.0, 2.0)]).is_err());
    }

    #[test]
    fn mixture_measures() {
        let flat = Distortion::expectation().spectral().unwrap().mixture_measure();
        assert_eq!(flat.atoms, vec![(0.0, 1.0)]);
        assert!(flat.density.is_empty());

        let alpha = 0.4;
        let es = Distortion::expected_shortfall(alpha).unwrap().spectral().unwrap().mixture_measure();
        assert_eq!(es.atoms.len(), 1);
        assert_eq!(es.atoms[0].0, alpha);
        assert!((es.atoms[0].1 - 1.0 / (1.0 - alpha)).abs() < 1e-15);
        assert_eq!(es.cumulative(0.0), 0.0);

        let lin = SpectralDensity::new(vec![Piece::power(0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 1.0)])
            .unwrap()
            .mixture_measure();
        assert!(lin.atoms.is_empty());
        assert_eq!(lin.density.len(), 1);
        assert_eq!(lin.density[0].value(0.3), 2.0);
    }

    #[test]
    fn mixture_cumulative_matches_density() {
        for d in [
            Distortion::expected_shortfall_order(3, 0.25).unwrap(),
            Distortion::expected_shortfall(0.6).unwrap(),
            Distortion::expectation(),
        ] {
            let s = d.spectral().unwrap();
            let nu = s.mixture_measure();
            for k in 1..1000 {
                let u = k as f64 / 1000.0;
                assert!((nu.cumulative(u) - s.eval(u)).abs() < 1e-10, "{} at {u}", d.label());
            }
        }
    }

    #[test]
    fn complement_is_accurate_near_one() {
        let d = Distortion::expected_shortfall_order(2, 0.5).unwrap();
        let v = 1e-20;
        // 1 - (1 - v/0.5)^2 = 4v - 4v^2
        assert!((d.complement(v) / (4.0 * v) - 1.0).abs() < 1e-12);
        let e = Distortion::expectation();
        assert_eq!(e.complement(1e-300), 1e-300);
    }

    #[test]
    fn local_density_exponents() {
        assert_eq!(Distortion::sqrt_example().density_exponent_near_zero(), Some(-0.5));
        assert_eq!(Distortion::expectation().density_exponent_near_zero(), Some(0.0));
        assert_eq!(Distortion::expected_shortfall(0.1).unwrap().density_exponent_near_zero(), None);
        assert_eq!(Distortion::threshold(0.5).unwrap().density_exponent_near_one(), None);
        assert_eq!(Distortion::expectation().density_exponent_near_one(), Some(0.0));
        assert!(Distortion::value_at_risk(0.3).unwrap().vanishes_near_zero());
        assert!(!Distortion::threshold(0.3).unwrap().vanishes_near_zero());
    }
}
