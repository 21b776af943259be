//! Quantile risk measures `rho_Q[X] = int F^{<-}_X dQ` and their alternative
//! representations.
//!
//! Discrete distributions combined with piecewise distortions are evaluated in closed
//! form. Everything else goes through tanh-sinh quadrature split at every point where the
//! integrand may jump or kink. Whether a value is finite is decided first from the tail
//! exponents of the quantile function and the local density exponents of `Q`, so
//! quadrature never runs on a divergent integral.

use std::fmt;

use serde::Serialize;

use crate::distortions::{Distortion, DistortionMeasure, Piece};
use crate::distributions::{Distribution, Level, TailShape};
use crate::error::{Error, Result};
use crate::numeric::{sorted_unique, CompensatedSum};
use crate::quadrature::{self, Tolerance};

/// Number of dyadic truncation levels used by the divergence probe.
pub const PROBE_LEVELS: u32 = 40;

/// Numerical tolerances. The defaults are the contracted ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Absolute tolerance of every quantile or tail integral.
    pub quadrature: f64,
    /// Absolute tolerance of the integral against the mixing measure.
    pub mixture: f64,
    /// Bracket width at which the golden-section search stops.
    pub infimum: f64,
    /// Increments below this count as converged in the divergence probe.
    pub probe_cauchy: f64,
    /// Increments above this count as sustained growth in the divergence probe.
    pub probe_growth: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quadrature: 1e-9,
            mixture: 1e-8,
            infimum: 1e-10,
            probe_cauchy: 1e-9,
            probe_growth: 1e-3,
        }
    }
}

impl Tolerances {
    /// Fails unless every tolerance is a positive finite number.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("quadrature", self.quadrature),
            ("mixture", self.mixture),
            ("infimum", self.infimum),
            ("probe_cauchy", self.probe_cauchy),
            ("probe_growth", self.probe_growth),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("tolerance {name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// A risk value in `[-inf, inf)`, or the flag that `X` lies outside the domain `L_Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedRisk {
    Finite(f64),
    NegInfinity,
    /// The positive part of the quantile integral diverges.
    NotInDomain,
}

impl ExtendedRisk {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedRisk::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedRisk::Finite(_))
    }

    /// The value as an extended real, with `+inf` standing for non-membership.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedRisk::Finite(v) => v,
            ExtendedRisk::NegInfinity => f64::NEG_INFINITY,
            ExtendedRisk::NotInDomain => f64::INFINITY,
        }
    }
}

impl fmt::Display for ExtendedRisk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedRisk::Finite(v) => write!(f, "{v}"),
            ExtendedRisk::NegInfinity => f.write_str("-inf"),
            ExtendedRisk::NotInDomain => f.write_str("not-in-domain"),
        }
    }
}

impl Serialize for ExtendedRisk {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedRisk::Finite(v) => s.serialize_f64(*v),
            ExtendedRisk::NegInfinity => s.serialize_str("-inf"),
            ExtendedRisk::NotInDomain => s.serialize_str("not-in-domain"),
        }
    }
}

/// `int_0 t^d * t^-p dt < inf` near an end of `(0, 1)`.
fn end_integrable(density_exponent: Option<f64>, quantile_exponent: Option<f64>) -> bool {
    match (density_exponent, quantile_exponent) {
        (Some(d), Some(p)) => d - p > -1.0,
        _ => true,
    }
}

fn upper_end_finite(tails: TailShape, d: &Distortion) -> bool {
    end_integrable(d.density_exponent_near_one(), tails.upper)
}

fn lower_end_finite(tails: TailShape, d: &Distortion) -> bool {
    end_integrable(d.density_exponent_near_zero(), tails.lower)
}

/// `NotInDomain`, `NegInfinity` or `None` when the value is finite.
fn infinite_status(dist: &Distribution, d: &Distortion) -> Option<ExtendedRisk> {
    if dist.is_discrete() {
        return None;
    }
    let tails = dist.tail_shape();
    if !upper_end_finite(tails, d) {
        Some(ExtendedRisk::NotInDomain)
    } else if !lower_end_finite(tails, d) {
        Some(ExtendedRisk::NegInfinity)
    } else {
        None
    }
}

/// Result of `expected_shortfall_infimum`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfimumResult {
    pub value: f64,
    pub minimizer: f64,
}

/// Evaluates risk measures with a fixed set of tolerances.
#[derive(Debug, Clone, Copy, Default)]
pub struct Evaluator {
    pub tol: Tolerances,
}

impl Evaluator {
    pub fn new(tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        Ok(Evaluator { tol })
    }

    fn quad_tol(&self) -> Tolerance {
        Tolerance::absolute(self.tol.quadrature)
    }

    /// `int F^{<-}_X dQ`.
    pub fn rho_quantile(&self, dist: &Distribution, d: &Distortion) -> Result<ExtendedRisk> {
        if let Some(atoms) = dist.as_atoms() {
            if d.pieces() == Distortion::expectation().pieces() {
                // increments of the identity are the atom probabilities
                return Ok(ExtendedRisk::Finite(atoms.mean()));
            }
            let mut acc = CompensatedSum::new();
            let mut previous = 0.0;
            let n = atoms.len();
            for (k, (&x, &c)) in atoms.values().iter().zip(atoms.cumulative()).enumerate() {
                let dk = if k + 1 == n { 1.0 } else { d.eval(c) };
                acc.add(x * (dk - previous));
                previous = dk;
            }
            return Ok(ExtendedRisk::Finite(acc.total()));
        }
        if let Some(status) = infinite_status(dist, d) {
            return Ok(status);
        }
        let g = |level: Level| dist.quantile_lower_at(level);
        let breaks = dist.level_breakpoints();
        let measure = d.measure();
        let mut acc = CompensatedSum::new();
        for &(u, m) in &measure.atoms {
            acc.add(m * g(Level::unchecked(u, 1.0 - u)));
        }
        acc.add(self.density_integral(&g, &measure.density, &breaks, 0.0, 1.0, 0.0)?);
        Ok(ExtendedRisk::Finite(acc.total()))
    }

    /// `int_{(a, b)} g(F^{<-}) dQ` over the absolutely continuous part of `Q`, where the
    /// right end `b` has complement `b_complement`.
    fn density_integral(
        &self,
        g: &impl Fn(Level) -> f64,
        density: &[Piece],
        breaks: &[f64],
        a: f64,
        b: f64,
        b_complement: f64,
    ) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        for p in density {
            let lo = p.start.max(a);
            let hi = p.end.min(b);
            if hi <= lo {
                continue;
            }
            let hi_complement = if hi == b { b_complement } else { 1.0 - hi };
            let mut cuts = vec![lo];
            cuts.extend(breaks.iter().copied().filter(|&t| t > lo && t < hi));
            cuts.push(hi);
            for w in cuts.windows(2) {
                let (s, t) = (w[0], w[1]);
                let t_complement = if t == hi { hi_complement } else { 1.0 - t };
                let mut f = |u: f64, to_t: f64| {
                    let v = g(Level::unchecked(u, t_complement + to_t));
                    if v == 0.0 {
                        0.0
                    } else {
                        v * p.value(u)
                    }
                };
                acc.add(quadrature::integrate(&mut f, s, t, self.quad_tol())?.value);
            }
        }
        Ok(acc.total())
    }

    /// `int_0^inf (1 - D(F(x))) dx - int_{-inf}^0 D(F(x)) dx`.
    pub fn rho_choquet(&self, dist: &Distribution, d: &Distortion) -> Result<ExtendedRisk> {
        if let Some(atoms) = dist.as_atoms() {
            // F is constant on [x_k, x_{k+1}); merge in zero as an extra cut
            let values = atoms.values();
            let cum = atoms.cumulative();
            let n = values.len();
            let mut acc = CompensatedSum::new();
            for k in 0..n - 1 {
                let (l, r) = (values[k], values[k + 1]);
                let dk = d.eval(cum[k]);
                if r <= 0.0 {
                    acc.add(-(r - l) * dk);
                } else if l >= 0.0 {
                    acc.add((r - l) * (1.0 - dk));
                } else {
                    acc.add(-(0.0 - l) * dk);
                    acc.add(r * (1.0 - dk));
                }
            }
            // below the smallest atom F = 0, above the largest 1 - D(F) = 0
            let x0 = values[0];
            if x0 > 0.0 {
                acc.add(x0);
            }
            let xn = values[n - 1];
            if xn < 0.0 {
                acc.add(xn);
            }
            return Ok(ExtendedRisk::Finite(acc.total()));
        }
        if let Some(status) = infinite_status(dist, d) {
            return Ok(status);
        }
        let (lo, hi) = dist.support();
        let mut cuts = dist.value_breakpoints();
        cuts.push(0.0);
        for t in d.knots() {
            if t > 0.0 && t < 1.0 {
                let level = Level::unchecked(t, 1.0 - t);
                cuts.push(dist.quantile_lower_at(level));
                cuts.push(dist.quantile_upper_at(level));
            }
        }
        let cuts = sorted_unique(cuts, 0.0);
        let tol = self.quad_tol();

        // left of zero: -int D(F)
        let neg = |x: f64| {
            let f = dist.cdf(x);
            if f > 0.5 {
                1.0 - d.complement(dist.sf(x))
            } else {
                d.eval(f)
            }
        };
        // right of zero: int (1 - D(F))
        let pos = |x: f64| {
            let f = dist.cdf(x);
            if f > 0.5 {
                d.complement(dist.sf(x))
            } else {
                1.0 - d.eval(f)
            }
        };
        let mut acc = CompensatedSum::new();
        let neg_cuts: Vec<f64> = cuts.iter().copied().filter(|&x| x <= 0.0 && x >= lo).collect();
        let pos_cuts: Vec<f64> = cuts.iter().copied().filter(|&x| x >= 0.0 && x <= hi).collect();
        if lo < 0.0 {
            let first = *neg_cuts.first().unwrap_or(&0.0);
            if lo == f64::NEG_INFINITY {
                acc.add(-quadrature::integrate_from_neg_infinity(&mut |x| neg(x), first, tol)?.value);
            }
            for w in neg_cuts.windows(2) {
                acc.add(-quadrature::integrate(&mut |x, _| neg(x), w[0], w[1], tol)?.value);
            }
        }
        if hi > 0.0 {
            let last = *pos_cuts.last().unwrap_or(&0.0);
            for w in pos_cuts.windows(2) {
                acc.add(quadrature::integrate(&mut |x, _| pos(x), w[0], w[1], tol)?.value);
            }
            if hi == f64::INFINITY {
                acc.add(quadrature::integrate_to_infinity(&mut |x| pos(x), last, tol)?.value);
            }
        }
        Ok(ExtendedRisk::Finite(acc.total()))
    }

    /// `E[(X - c)^+]`, or `None` when `E[X^+]` is infinite.
    pub fn stop_loss(&self, dist: &Distribution, c: f64) -> Result<Option<f64>> {
        self.stop_loss_with(dist, c, self.quad_tol())
    }

    fn stop_loss_with(&self, dist: &Distribution, c: f64, tol: Tolerance) -> Result<Option<f64>> {
        if let Some(atoms) = dist.as_atoms() {
            let mut acc = CompensatedSum::new();
            for (x, p) in atoms.iter() {
                if x > c {
                    acc.add(p * (x - c));
                }
            }
            return Ok(Some(acc.total()));
        }
        if !end_integrable(Some(0.0), dist.tail_shape().upper) {
            return Ok(None);
        }
        let (lo, hi) = dist.support();
        let start = c.max(lo);
        let mut acc = CompensatedSum::new();
        if start > c {
            // sf = 1 on [c, lo)
            acc.add(start - c);
        }
        if start >= hi {
            return Ok(Some(acc.total()));
        }
        let mut cuts = vec![start];
        cuts.extend(dist.value_breakpoints().into_iter().filter(|&x| x > start && x < hi));
        if hi.is_finite() {
            cuts.push(hi);
        }
        for w in cuts.windows(2) {
            acc.add(quadrature::integrate(&mut |x, _| dist.sf(x), w[0], w[1], tol)?.value);
        }
        if hi == f64::INFINITY {
            let last = *cuts.last().unwrap();
            acc.add(quadrature::integrate_to_infinity(&mut |x| dist.sf(x), last, tol)?.value);
        }
        Ok(Some(acc.total()))
    }

    /// `E[(c - X)^+]` for a continuous law with integrable lower tail.
    fn lower_stop_loss(&self, dist: &Distribution, c: f64, tol: Tolerance) -> Result<f64> {
        let (lo, hi) = dist.support();
        let end = c.min(hi);
        let mut acc = CompensatedSum::new();
        if c > hi {
            // F = 1 on (hi, c]
            acc.add(c - hi);
        }
        if end <= lo {
            return Ok(acc.total());
        }
        let mut cuts = Vec::new();
        if lo.is_finite() {
            cuts.push(lo);
        }
        cuts.extend(dist.value_breakpoints().into_iter().filter(|&x| x > lo && x < end));
        cuts.push(end);
        if lo == f64::NEG_INFINITY {
            acc.add(quadrature::integrate_from_neg_infinity(&mut |x| dist.cdf(x), cuts[0], tol)?.value);
        }
        for w in cuts.windows(2) {
            acc.add(quadrature::integrate(&mut |x, _| dist.cdf(x), w[0], w[1], tol)?.value);
        }
        Ok(acc.total())
    }

    /// The mean when the lower form of the shortfall applies, i.e. for continuous laws with finite mean.
    fn lower_form_mean(&self, dist: &Distribution) -> Result<Option<f64>> {
        if dist.is_discrete() || !end_integrable(Some(0.0), dist.tail_shape().lower) {
            return Ok(None);
        }
        match self.mean(dist)? {
            ExtendedRisk::Finite(m) => Ok(Some(m)),
            _ => Ok(None),
        }
    }

    /// `E[X]`.
    pub fn mean(&self, dist: &Distribution) -> Result<ExtendedRisk> {
        match dist.discrete_mean() {
            Some(m) => Ok(ExtendedRisk::Finite(m)),
            None => self.rho_quantile(dist, &Distortion::expectation()),
        }
    }

    /// `F^{<-}(alpha) + E[(X - F^{<-}(alpha))^+] / (1 - alpha)`, the mean for `alpha = 0`.
    pub fn expected_shortfall(&self, dist: &Distribution, alpha: f64) -> Result<ExtendedRisk> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::domain(format!("ES level alpha = {alpha} is not in [0, 1)")));
        }
        if alpha == 0.0 {
            return self.mean(dist);
        }
        if self.stop_loss(dist, 0.0)?.is_none() {
            return Ok(ExtendedRisk::NotInDomain);
        }
        let mean = if alpha <= 0.5 { self.lower_form_mean(dist)? } else { None };
        let level = Level::new(alpha)?;
        let w = self.weighted_shortfall(dist, level, mean, self.quad_tol())?;
        Ok(ExtendedRisk::Finite(w / (1.0 - alpha)))
    }

    /// `(1 - alpha) ES_alpha`, finite inputs only.
    ///
    /// Uses `(1 - alpha) q + E[(X - q)^+]` above the median and the equal
    /// `E[X] - alpha q + E[(q - X)^+]` below it when `mean` is given.
    fn weighted_shortfall(&self, dist: &Distribution, level: Level, mean: Option<f64>, tol: Tolerance) -> Result<f64> {
        let q = dist.quantile_lower_at(level);
        if let (Some(m), true) = (mean, level.value() <= 0.5) {
            return Ok(m - level.value() * q + self.lower_stop_loss(dist, q, tol)?);
        }
        let sl = self
            .stop_loss_with(dist, q, tol)?
            .ok_or_else(|| Error::Inconclusive("stop-loss transform diverges".into()))?;
        Ok(level.complement() * q + sl)
    }

    /// `inf_c ( c + E[(X - c)^+] / (1 - alpha) )` by golden-section search.
    pub fn expected_shortfall_infimum(&self, dist: &Distribution, alpha: f64) -> Result<InfimumResult> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("ES level alpha = {alpha} is not in (0, 1)")));
        }
        if self.stop_loss(dist, 0.0)?.is_none() {
            return Err(Error::domain("E[X^+] is infinite, so X is not in the domain of ES"));
        }
        let objective = |c: f64| -> Result<f64> {
            let sl = self.stop_loss(dist, c)?.expect("checked above");
            Ok(c + sl / (1.0 - alpha))
        };
        let mut spread = 0.5;
        for _ in 0..4 {
            let a = dist.quantile_lower(alpha * spread)?;
            let b = dist.quantile_lower_at(Level::unchecked(
                1.0 - (1.0 - alpha) * spread,
                (1.0 - alpha) * spread,
            ));
            let best = golden_section(&objective, a, b, self.tol.infimum)?;
            let width = (b - a).abs().max(f64::MIN_POSITIVE);
            let interior = best.minimizer > a + 1e-3 * width && best.minimizer < b - 1e-3 * width;
            // accept boundary minimizers only when the objective is flat across them
            let at_edge_ok = |edge: f64, step: f64| -> Result<bool> {
                Ok(objective(edge + step)? >= best.value - self.tol.infimum)
            };
            let step = 1e-3 * width.max(1.0);
            if a == b
                || interior
                || (best.minimizer <= a + 1e-3 * width && at_edge_ok(a, -step)?)
                || (best.minimizer >= b - 1e-3 * width && at_edge_ok(b, step)?)
            {
                return Ok(best);
            }
            spread *= 0.25;
        }
        Err(Error::Inconclusive(format!(
            "golden-section bracket for alpha = {alpha} did not contain the minimizer"
        )))
    }

    /// `rho` under `es_n(n, alpha)`.
    pub fn expected_shortfall_order_n(&self, dist: &Distribution, n: u32, alpha: f64) -> Result<ExtendedRisk> {
        let d = Distortion::expected_shortfall_order(n, alpha)?;
        self.rho_quantile(dist, &d)
    }

    /// `VaR_alpha = F^{<-}(alpha)`.
    pub fn value_at_risk(&self, dist: &Distribution, alpha: f64) -> Result<f64> {
        dist.quantile_lower(alpha)
    }

    /// `int_{[0, 1)} (1 - alpha) ES_alpha d nu(alpha)` for convex `D`.
    pub fn rho_mixture(&self, dist: &Distribution, d: &Distortion) -> Result<ExtendedRisk> {
        let nu = d.spectral()?.mixture_measure();
        if let Some(status) = infinite_status(dist, d) {
            return Ok(status);
        }
        let mean = self.lower_form_mean(dist)?;
        let inner = Tolerance::absolute(self.tol.quadrature.min(self.tol.mixture * 1e-3));
        let mut acc = CompensatedSum::new();
        for &(alpha, m) in &nu.atoms {
            let w = if alpha == 0.0 {
                match self.mean(dist)? {
                    ExtendedRisk::Finite(v) => v,
                    other => return Ok(other),
                }
            } else {
                self.weighted_shortfall(dist, Level::unchecked(alpha, 1.0 - alpha), mean, inner)?
            };
            acc.add(m * w);
        }
        let breaks = dist.level_breakpoints();
        let tol = Tolerance::absolute(self.tol.mixture);
        for p in &nu.density {
            let mut cuts = vec![p.start];
            cuts.extend(breaks.iter().copied().filter(|&t| t > p.start && t < p.end));
            cuts.push(p.end);
            for w in cuts.windows(2) {
                let (s, t) = (w[0], w[1]);
                let mut failure = None;
                let mut f = |a: f64, to_t: f64| {
                    let density = p.value(a);
                    if density == 0.0 || failure.is_some() {
                        return 0.0;
                    }
                    match self.weighted_shortfall(dist, Level::unchecked(a, (1.0 - t) + to_t), mean, inner) {
                        Ok(v) => density * v,
                        Err(e) => {
                            failure = Some(e);
                            0.0
                        }
                    }
                };
                let est = quadrature::integrate(&mut f, s, t, tol);
                if let Some(e) = failure {
                    return Err(e);
                }
                acc.add(est?.value);
            }
        }
        Ok(ExtendedRisk::Finite(acc.total()))
    }

    /// Decides membership of `dist` in one of the three domain classes of `D`.
    pub fn classify(&self, dist: &Distribution, d: &Distortion, class: DomainClass) -> MembershipVerdict {
        if dist.is_discrete() {
            return MembershipVerdict {
                class,
                verdict: Verdict::Member,
                method: Method::Discrete,
                probe: None,
            };
        }
        MembershipVerdict {
            class,
            verdict: membership(dist, d, class),
            method: Method::Analytic,
            probe: Some(self.probe_membership(dist, d, class)),
        }
    }

    /// Truncation probe: partial integrals over `(2^-k, 1 - 2^-k)` for `k = 1..=40`.
    pub fn probe_membership(&self, dist: &Distribution, d: &Distortion, class: DomainClass) -> ProbeReport {
        let abs = dist.abs();
        let g = |level: Level| -> f64 {
            match class {
                DomainClass::LQ => dist.quantile_lower_at(level).max(0.0),
                DomainClass::Acerbi => dist.quantile_lower_at(level).abs(),
                DomainClass::Pichler => abs.quantile_lower_at(level),
            }
        };
        let breaks = match class {
            DomainClass::Pichler => abs.level_breakpoints(),
            _ => dist.level_breakpoints(),
        };
        let measure = d.measure();
        match self.probe_partial_integrals(&g, &measure, &breaks) {
            Ok(partial) => {
                let verdict = probe_verdict(&partial, self.tol.probe_cauchy, self.tol.probe_growth);
                ProbeReport {
                    partial_integrals: partial,
                    verdict,
                    error: None,
                }
            }
            Err(e) => ProbeReport {
                partial_integrals: Vec::new(),
                verdict: Verdict::Inconclusive,
                error: Some(e.to_string()),
            },
        }
    }

    fn probe_partial_integrals(
        &self,
        g: &impl Fn(Level) -> f64,
        measure: &DistortionMeasure,
        breaks: &[f64],
    ) -> Result<Vec<f64>> {
        let atoms_inside = |k: u32| -> f64 {
            let edge = 0.5f64.powi(k as i32);
            let mut acc = CompensatedSum::new();
            for &(u, m) in &measure.atoms {
                if u > edge && 1.0 - u > edge {
                    acc.add(m * g(Level::unchecked(u, 1.0 - u)));
                }
            }
            acc.total()
        };
        let mut partial = Vec::with_capacity(PROBE_LEVELS as usize);
        let mut running = 0.0;
        partial.push(0.0);
        for k in 2..=PROBE_LEVELS {
            let inner = 0.5f64.powi(k as i32 - 1);
            let outer = 0.5f64.powi(k as i32);
            let mut inc = CompensatedSum::new();
            inc.add(atoms_inside(k) - atoms_inside(k - 1));
            inc.add(self.density_integral(g, &measure.density, breaks, outer, inner, 1.0 - inner)?);
            inc.add(self.density_integral(g, &measure.density, breaks, 1.0 - inner, 1.0 - outer, outer)?);
            running += inc.total();
            partial.push(running);
        }
        Ok(partial)
    }
}

/// Membership verdict without probe diagnostics.
pub fn membership(dist: &Distribution, d: &Distortion, class: DomainClass) -> Verdict {
    if dist.is_discrete() {
        return Verdict::Member;
    }
    let tails = dist.tail_shape();
    let member = match class {
        DomainClass::LQ => upper_end_finite(tails, d),
        DomainClass::Acerbi => upper_end_finite(tails, d) && lower_end_finite(tails, d),
        DomainClass::Pichler => upper_end_finite(dist.abs().tail_shape(), d),
    };
    if member {
        Verdict::Member
    } else {
        Verdict::NonMember
    }
}

fn probe_verdict(partial: &[f64], cauchy: f64, growth: f64) -> Verdict {
    let increments: Vec<f64> = partial.windows(2).map(|w| w[1] - w[0]).collect();
    let n = increments.len();
    if n >= 3 && increments[n - 3..].iter().all(|d| d.abs() <= cauchy) {
        return Verdict::Member;
    }
    if n >= 5 {
        let tail = &increments[n - 5..];
        let large = tail.iter().all(|&d| d > growth);
        let sustained = tail.windows(2).all(|w| w[1] >= w[0] * (1.0 - growth));
        if large && sustained {
            return Verdict::NonMember;
        }
    }
    Verdict::Inconclusive
}

fn golden_section(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<InfimumResult> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut best = InfimumResult {
        value: f(a)?,
        minimizer: a,
    };
    let consider = |c: f64, v: f64, best: &mut InfimumResult| {
        if v < best.value {
            *best = InfimumResult { value: v, minimizer: c };
        }
    };
    let fb = f(b)?;
    consider(b, fb, &mut best);
    if b - a <= tol {
        return Ok(best);
    }
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    consider(c, fc, &mut best);
    consider(d, fd, &mut best);
    while b - a > tol * (1.0 + a.abs().max(b.abs())) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
            consider(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
            consider(d, fd, &mut best);
        }
    }
    Ok(best)
}

/// The three candidate domains of a quantile risk measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DomainClass {
    /// `int (F^{<-}_X)^+ dQ < inf`.
    LQ,
    /// `int |F^{<-}_X| dQ < inf`.
    Acerbi,
    /// `int F^{<-}_{|X|} dQ < inf`.
    Pichler,
}

impl DomainClass {
    pub const ALL: [DomainClass; 3] = [DomainClass::LQ, DomainClass::Acerbi, DomainClass::Pichler];

    pub fn name(self) -> &'static str {
        match self {
            DomainClass::LQ => "LQ",
            DomainClass::Acerbi => "Acerbi",
            DomainClass::Pichler => "Pichler",
        }
    }
}

impl std::str::FromStr for DomainClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lq" => Ok(DomainClass::LQ),
            "acerbi" => Ok(DomainClass::Acerbi),
            "pichler" => Ok(DomainClass::Pichler),
            _ => Err(Error::Parse {
                line: None,
                message: format!("unknown domain class '{s}', expected LQ, Acerbi or Pichler"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Member,
    NonMember,
    Inconclusive,
}

/// How a verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Finitely many finite quantile values.
    Discrete,
    /// Tail exponent of the quantile function against the local density exponent of `Q`.
    Analytic,
}

/// Partial integrals of the dyadic truncation probe and the verdict they support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    /// Entry `k - 1` is the integral over `(2^-k, 1 - 2^-k)`.
    pub partial_integrals: Vec<f64>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipVerdict {
    pub class: DomainClass,
    pub verdict: Verdict,
    pub method: Method,
    pub probe: Option<ProbeReport>,
}

/// `es_n(n, alpha) <= D <= identity` on `[delta, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub n: u32,
    pub alpha: f64,
}

/// Evidence about the ordering of two domains `L_{Q1}` and `L_{Q2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainComparison {
    pub delta: f64,
    /// `D1 <= D2` on the grid, hence `L_{Q1} ⊆ L_{Q2}`.
    pub first_in_second: bool,
    /// `D2 <= D1` on the grid, hence `L_{Q2} ⊆ L_{Q1}`.
    pub second_in_first: bool,
    /// A sandwich for `D1`, which gives `L_{Q1} = L_{Q^E}`.
    pub first_equals_expectation_domain: Option<Sandwich>,
    pub second_equals_expectation_domain: Option<Sandwich>,
    pub relation: DomainRelation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainRelation {
    Equal,
    FirstInSecond,
    SecondInFirst,
    Incomparable,
}

const COMPARE_GRID: usize = 4096;
const COMPARE_SLACK: f64 = 1e-12;

fn comparison_grid(delta: f64, ds: &[&Distortion]) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..COMPARE_GRID)
        .map(|k| delta + (1.0 - delta) * k as f64 / COMPARE_GRID as f64)
        .collect();
    for d in ds {
        grid.extend(d.knots().filter(|&t| t >= delta && t < 1.0));
    }
    sorted_unique(grid, 0.0)
}

fn below_on(grid: &[f64], lower: impl Fn(f64) -> f64, upper: impl Fn(f64) -> f64) -> bool {
    grid.iter().all(|&u| lower(u) <= upper(u) + COMPARE_SLACK)
}

/// Searches `n = 1..=8` and `alpha = k/64` for a sandwich of `D` on `[delta, 1)`.
pub fn find_sandwich(d: &Distortion, delta: f64) -> Option<Sandwich> {
    let grid = comparison_grid(delta, &[d]);
    if !below_on(&grid, |u| d.eval(u), |u| u) {
        return None;
    }
    for n in 1..=8u32 {
        for k in 1..64 {
            let alpha = k as f64 / 64.0;
            let lower = Distortion::expected_shortfall_order(n, alpha).expect("valid parameters");
            if below_on(&grid, |u| lower.eval(u), |u| d.eval(u)) {
                return Some(Sandwich { n, alpha });
            }
        }
    }
    None
}

/// Pointwise comparison of `D1` and `D2` on `[delta, 1)`.
pub fn compare_domains(d1: &Distortion, d2: &Distortion, delta: f64) -> Result<DomainComparison> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta = {delta} is not in (0, 1)")));
    }
    let grid = comparison_grid(delta, &[d1, d2]);
    let first_in_second = below_on(&grid, |u| d1.eval(u), |u| d2.eval(u));
    let second_in_first = below_on(&grid, |u| d2.eval(u), |u| d1.eval(u));
    let s1 = find_sandwich(d1, delta);
    let s2 = find_sandwich(d2, delta);
    let relation = match (first_in_second, second_in_first) {
        (true, true) => DomainRelation::Equal,
        _ if s1.is_some() && s2.is_some() => DomainRelation::Equal,
        (true, false) => DomainRelation::FirstInSecond,
        (false, true) => DomainRelation::SecondInFirst,
        (false, false) => DomainRelation::Incomparable,
    };
    Ok(DomainComparison {
        delta,
        first_in_second,
        second_in_first,
        first_equals_expectation_domain: s1,
        second_equals_expectation_domain: s2,
        relation,
    })
}

pub fn rho_quantile(dist: &Distribution, d: &Distortion) -> Result<ExtendedRisk> {
    Evaluator::default().rho_quantile(dist, d)
}

pub fn rho_choquet(dist: &Distribution, d: &Distortion) -> Result<ExtendedRisk> {
    Evaluator::default().rho_choquet(dist, d)
}

pub fn rho_mixture(dist: &Distribution, d: &Distortion) -> Result<ExtendedRisk> {
    Evaluator::default().rho_mixture(dist, d)
}

pub fn value_at_risk(dist: &Distribution, alpha: f64) -> Result<f64> {
    Evaluator::default().value_at_risk(dist, alpha)
}

pub fn expected_shortfall(dist: &Distribution, alpha: f64) -> Result<ExtendedRisk> {
    Evaluator::default().expected_shortfall(dist, alpha)
}

pub fn expected_shortfall_infimum(dist: &Distribution, alpha: f64) -> Result<InfimumResult> {
    Evaluator::default().expected_shortfall_infimum(dist, alpha)
}

pub fn expected_shortfall_order_n(dist: &Distribution, n: u32, alpha: f64) -> Result<ExtendedRisk> {
    Evaluator::default().expected_shortfall_order_n(dist, n, alpha)
}

pub fn stop_loss(dist: &Distribution, c: f64) -> Result<Option<f64>> {
    Evaluator::default().stop_loss(dist, c)
}

pub fn classify(dist: &Distribution, d: &Distortion, class: DomainClass) -> MembershipVerdict {
    Evaluator::default().classify(dist, d, class)
}

pub fn probe_membership(dist: &Distribution, d: &Distortion, class: DomainClass) -> ProbeReport {
    Evaluator::default().probe_membership(dist, d, class)
}
