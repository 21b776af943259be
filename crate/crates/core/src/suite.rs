//! Property suite over a matrix of distributions and distortions.
//!
//! Each check produces one [`CaseResult`]. Non-convex distortions are expected to fail
//! subadditivity; that outcome is reported as [`Status::ExpectedFailure`] together with
//! the constructed counterexample, not as a failure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortions::Distortion;
use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::io::{DistortionSpec, DistributionSpec};
use crate::properties::{build_counterexample, comonotone_additivity_check, subadditivity_search};
use crate::riskmeasures::{membership, DomainClass, Evaluator, ExtendedRisk, Verdict};

/// Agreement of the quantile and Choquet representations.
pub const CHOQUET_TOL: f64 = 1e-8;
/// Agreement of the quantile and mixture representations.
pub const MIXTURE_TOL: f64 = 1e-6;
/// Agreement of the three expected-shortfall expressions.
pub const ES_TOL: f64 = 1e-8;
/// Exact-path tolerance of the axiom checks.
pub const AXIOM_TOL: f64 = 1e-9;
/// Slack of the ordering checks.
pub const ORDER_TOL: f64 = 1e-8;
/// Distance of the dyadic minimum of `ES_alpha` to the mean.
pub const INFIMUM_TOL: f64 = 1e-6;
/// Round-trip tolerance of spectral densities.
pub const ROUND_TRIP_TOL: f64 = 1e-12;

pub const DEFAULT_TRIALS: u64 = 10_000;

pub const ES_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];
pub const SCALES: [f64; 4] = [0.0, 0.5, 1.0, 3.0];
pub const SHIFTS: [f64; 3] = [-5.0, 0.0, 7.0];
/// Exponents `k` of the dyadic levels `2^-k` used for the infimum of `ES_alpha`.
pub const DYADIC_LEVELS: std::ops::RangeInclusive<i32> = 1..=60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Representation,
    ExpectedShortfall,
    Axioms,
    Ordering,
    Domain,
    Subadditivity,
    SpectralRoundTrip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    ExpectedFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub check: Check,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distortion: Option<String>,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub passed: usize,
    pub failed: usize,
    pub expected_failures: usize,
    pub results: Vec<CaseResult>,
}

impl SuiteReport {
    fn new(results: Vec<CaseResult>) -> Self {
        let count = |s: Status| results.iter().filter(|r| r.status == s).count();
        SuiteReport {
            passed: count(Status::Pass),
            failed: count(Status::Fail),
            expected_failures: count(Status::ExpectedFailure),
            results,
        }
    }

    pub fn all_green(&self) -> bool {
        self.failed == 0
    }
}

/// Suite configuration as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub distributions: Vec<DistributionSpec>,
    pub distortions: Vec<DistortionSpec>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_trials() -> u64 {
    DEFAULT_TRIALS
}

/// Named distributions and distortions to cross.
#[derive(Debug, Clone)]
pub struct Matrix {
    pub distributions: Vec<(String, Distribution)>,
    pub distortions: Vec<(String, Distortion)>,
    pub trials: u64,
    pub seed: u64,
}

fn no_cases() -> Error {
    Error::Parse {
        line: None,
        message: "no cases: the matrix needs at least one distribution and one distortion".into(),
    }
}

impl Matrix {
    pub fn from_config(config: &SuiteConfig) -> Result<Self> {
        if config.distributions.is_empty() || config.distortions.is_empty() {
            return Err(no_cases());
        }
        let distributions = config
            .distributions
            .iter()
            .enumerate()
            .map(|(i, s)| s.build().map(|d| (format!("#{i} {}", d.describe()), d)))
            .collect::<Result<_>>()?;
        let distortions = config
            .distortions
            .iter()
            .map(|s| s.build().map(|d| (d.label(), d)))
            .collect::<Result<_>>()?;
        Ok(Matrix {
            distributions,
            distortions,
            trials: config.trials,
            seed: config.seed,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: SuiteConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: (e.line() > 0).then_some(e.line()),
            message: e.to_string(),
        })?;
        Self::from_config(&config)
    }

    /// The default matrix: 14 distributions and 12 distortions.
    pub fn default_matrix() -> Self {
        let e = |v: &[f64]| Distribution::empirical(v).expect("valid sample");
        let pn = Distribution::pareto_negative(1.0).expect("valid");
        let pp = Distribution::pareto_positive(3.0, 1.0).expect("valid");
        let shifted = pn.shift(3.0).expect("valid");
        let hundred: Vec<f64> = (0..100).map(|k| ((k * 37) % 101) as f64 / 4.0 - 12.0).collect();
        let distributions = vec![
            e(&[3.0]),
            e(&[1.0, 2.0, 3.0, 4.0]),
            e(&hundred),
            Distribution::atoms(&[(-3.0, 0.2), (-1.0, 0.1), (0.0, 0.1), (1.0, 0.3), (3.0, 0.3)]).expect("valid"),
            e(&[1.0, 1.0, 2.0, 5.0, -2.0]),
            pn.clone(),
            Distribution::pareto_negative_with_index(2.0, 1.0).expect("valid"),
            pp.clone(),
            Distribution::pareto_positive(0.8, 1.0).expect("valid"),
            shifted.clone(),
            pn.comonotone_sum(&pp),
            pn.abs(),
            pp.scale(0.5).expect("valid"),
            shifted.positive_part(),
        ];
        let distributions = distributions
            .into_iter()
            .enumerate()
            .map(|(i, d)| (format!("#{i} {}", d.describe()), d))
            .collect();
        let mut distortions: Vec<Distortion> = vec![
            Distortion::expectation(),
            Distortion::value_at_risk(0.25).expect("valid"),
            Distortion::value_at_risk(0.5).expect("valid"),
            Distortion::expected_shortfall(0.5).expect("valid"),
            Distortion::expected_shortfall(0.9).expect("valid"),
            Distortion::expected_shortfall_order(2, 0.0).expect("valid"),
            Distortion::expected_shortfall_order(3, 0.2).expect("valid"),
            Distortion::expected_shortfall_order(5, 0.25).expect("valid"),
            Distortion::threshold(0.5).expect("valid"),
            Distortion::sqrt_example(),
        ];
        use crate::distortions::Piece;
        distortions.push(
            Distortion::from_pieces(vec![
                Piece::linear(0.0, 0.5, 0.0, 0.5),
                Piece::linear(0.5, 1.0, -0.5, 1.5),
            ])
            .expect("valid"),
        );
        distortions.push(
            Distortion::from_pieces(vec![
                Piece::linear(0.0, 0.5, 0.0, 1.5),
                Piece::linear(0.5, 1.0, 0.5, 0.5),
            ])
            .expect("valid"),
        );
        let distortions = distortions
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let label = match d.family() {
                    crate::distortions::Family::Piecewise => format!("piecewise#{i}"),
                    _ => d.label(),
                };
                (label, d)
            })
            .collect();
        Matrix {
            distributions,
            distortions,
            trials: DEFAULT_TRIALS,
            seed: 0,
        }
    }
}

struct Outcome {
    status: Status,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        status: Status::Pass,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        status: Status::Fail,
        detail: detail.into(),
    }
}

fn from_result(r: Result<Outcome>) -> Outcome {
    r.unwrap_or_else(|e| fail(format!("error: {e}")))
}

/// Risk values agree: equal flags, or finite values within `tol`.
fn agree(a: ExtendedRisk, b: ExtendedRisk, tol: f64) -> bool {
    match (a, b) {
        (ExtendedRisk::Finite(x), ExtendedRisk::Finite(y)) => (x - y).abs() <= tol,
        _ => a == b,
    }
}

/// `a <= b + tol` in the extended reals, with non-membership as `+inf`.
fn at_most(a: ExtendedRisk, b: ExtendedRisk, tol: f64) -> bool {
    let (x, y) = (a.to_f64(), b.to_f64());
    x <= y || x - y <= tol
}

/// `D1 <= D2` on a grid of `[0, 1]` refined at the knots of both.
pub fn pointwise_below(d1: &Distortion, d2: &Distortion) -> bool {
    let mut grid: Vec<f64> = (0..=4096).map(|k| k as f64 / 4096.0).collect();
    for t in d1.knots().chain(d2.knots()) {
        grid.push(t);
        grid.push(t - 1e-9);
    }
    grid.iter()
        .filter(|&&u| (0.0..=1.0).contains(&u))
        .all(|&u| d1.eval(u) <= d2.eval(u) + 1e-12)
}

fn representation(ev: &Evaluator, dist: &Distribution, d: &Distortion) -> Result<Outcome> {
    let q = ev.rho_quantile(dist, d)?;
    let c = ev.rho_choquet(dist, d)?;
    if !agree(q, c, CHOQUET_TOL) {
        return Ok(fail(format!("quantile {q} vs Choquet {c}")));
    }
    if d.is_convex() {
        let m = ev.rho_mixture(dist, d)?;
        if !agree(q, m, MIXTURE_TOL) {
            return Ok(fail(format!("quantile {q} vs mixture {m}")));
        }
        return Ok(pass(format!("quantile {q}, Choquet {c}, mixture {m}")));
    }
    Ok(pass(format!("quantile {q}, Choquet {c}")))
}

fn expected_shortfall_forms(ev: &Evaluator, dist: &Distribution) -> Result<Outcome> {
    let es0 = Distortion::expected_shortfall(0.0)?;
    if es0 != Distortion::expectation() {
        return Ok(fail("es(0) differs from the expectation distortion"));
    }
    if let Some(mean) = dist.discrete_mean() {
        let e = ev.expected_shortfall(dist, 0.0)?;
        if e != ExtendedRisk::Finite(mean) {
            return Ok(fail(format!("ES_0 = {e} differs from the mean {mean}")));
        }
    }
    let mut worst: f64 = 0.0;
    for alpha in ES_LEVELS {
        let closed = ev.expected_shortfall(dist, alpha)?;
        let quant = ev.rho_quantile(dist, &Distortion::expected_shortfall(alpha)?)?;
        if !agree(closed, quant, ES_TOL) {
            return Ok(fail(format!("alpha {alpha}: stop-loss form {closed} vs quantile integral {quant}")));
        }
        if let ExtendedRisk::Finite(v) = closed {
            let inf = ev.expected_shortfall_infimum(dist, alpha)?;
            if (inf.value - v).abs() > ES_TOL {
                return Ok(fail(format!("alpha {alpha}: stop-loss form {v} vs infimum {}", inf.value)));
            }
            worst = worst.max((inf.value - v).abs()).max((quant.to_f64() - v).abs());
        }
    }
    Ok(pass(format!("max deviation {worst:e}")))
}

fn axioms(ev: &Evaluator, dist: &Distribution, other: &Distribution, d: &Distortion) -> Result<Outcome> {
    let rho = |x: &Distribution| -> Result<f64> {
        ev.rho_quantile(x, d)?
            .finite()
            .ok_or_else(|| Error::Inconclusive("discrete law with infinite risk".into()))
    };
    let base = rho(dist)?;
    for a in SCALES {
        let v = rho(&dist.scale(a)?)?;
        if (v - a * base).abs() > AXIOM_TOL {
            return Ok(fail(format!("homogeneity a = {a}: {v} vs {}", a * base)));
        }
    }
    for c in SHIFTS {
        let v = rho(&dist.shift(c)?)?;
        if (v - (base + c)).abs() > AXIOM_TOL {
            return Ok(fail(format!("translation c = {c}: {v} vs {}", base + c)));
        }
    }
    // X <= X^+ and X <= X + X^+ pointwise
    let pos = dist.positive_part();
    for (name, bigger) in [("X^+", pos.clone()), ("X + X^+", dist.comonotone_sum(&pos))] {
        let v = rho(&bigger)?;
        if base > v + AXIOM_TOL {
            return Ok(fail(format!("monotonicity X <= {name}: {base} > {v}")));
        }
    }
    let co = comonotone_additivity_check(d, dist, other)?;
    if !co.holds {
        return Ok(fail(format!("comonotone additivity: difference {:?}", co.difference)));
    }
    Ok(pass("homogeneity, translation, monotonicity, comonotone additivity"))
}

fn ordering_pairs(ev: &Evaluator, dist: &Distribution, distortions: &[(String, Distortion)]) -> Result<Outcome> {
    let rhos: Vec<ExtendedRisk> = distortions
        .iter()
        .map(|(_, d)| ev.rho_quantile(dist, d))
        .collect::<Result<_>>()?;
    let mean = ev.mean(dist)?;
    let mut pairs = 0;
    for (i, (n1, d1)) in distortions.iter().enumerate() {
        if d1.is_convex() && !at_most(mean, rhos[i], ORDER_TOL) {
            return Ok(fail(format!("convex {n1}: E[X] = {mean} > rho = {}", rhos[i])));
        }
        for (j, (n2, d2)) in distortions.iter().enumerate() {
            if i != j && pointwise_below(d1, d2) {
                pairs += 1;
                if !at_most(rhos[j], rhos[i], ORDER_TOL) {
                    return Ok(fail(format!("{n1} <= {n2} but rho2 = {} > rho1 = {}", rhos[j], rhos[i])));
                }
            }
        }
    }
    Ok(pass(format!("{pairs} ordered pairs")))
}

fn ordering_levels(ev: &Evaluator, dist: &Distribution) -> Result<Outcome> {
    let levels = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99];
    let values: Vec<ExtendedRisk> = levels
        .iter()
        .map(|&a| ev.expected_shortfall(dist, a))
        .collect::<Result<_>>()?;
    for (w, a) in values.windows(2).zip(levels.windows(2)) {
        if !at_most(w[0], w[1], ORDER_TOL) {
            return Ok(fail(format!("ES_{} = {} > ES_{} = {}", a[0], w[0], a[1], w[1])));
        }
    }
    let mean = match ev.mean(dist)? {
        ExtendedRisk::Finite(m) => m,
        other => return Ok(pass(format!("ES increasing; mean is {other}"))),
    };
    let mut min = f64::INFINITY;
    for k in DYADIC_LEVELS {
        if let ExtendedRisk::Finite(v) = ev.expected_shortfall(dist, 0.5f64.powi(k))? {
            min = min.min(v);
        }
    }
    if (min - mean).abs() > INFIMUM_TOL || min < mean - ORDER_TOL {
        return Ok(fail(format!("dyadic minimum of ES {min} vs mean {mean}")));
    }
    Ok(pass(format!("ES increasing; dyadic minimum {min} vs mean {mean}")))
}

fn domain(ev: &Evaluator, dist: &Distribution, d: &Distortion) -> Result<Outcome> {
    let lq = membership(dist, d, DomainClass::LQ);
    let acerbi = membership(dist, d, DomainClass::Acerbi);
    let pichler = membership(dist, d, DomainClass::Pichler);
    let rho = ev.rho_quantile(dist, d)?;
    if (rho == ExtendedRisk::NotInDomain) != (lq == Verdict::NonMember) {
        return Ok(fail(format!("rho = {rho} but LQ verdict {lq:?}")));
    }
    if d.vanishes_near_zero() {
        if lq != acerbi {
            return Ok(fail(format!("D vanishes near 0 but LQ {lq:?} != Acerbi {acerbi:?}")));
        }
        if rho == ExtendedRisk::NegInfinity {
            return Ok(fail("D vanishes near 0 but rho = -inf"));
        }
    }
    if d.is_convex() && pichler == Verdict::Member && acerbi == Verdict::NonMember {
        return Ok(fail("convex D with a Pichler member outside the Acerbi class"));
    }
    Ok(pass(format!("LQ {lq:?}, Acerbi {acerbi:?}, Pichler {pichler:?}")))
}

fn subadditivity(d: &Distortion, trials: u64, seed: u64) -> Result<Outcome> {
    let search = subadditivity_search(d, trials, seed);
    if d.is_convex() {
        return Ok(match search.worst {
            None => pass(format!("no violation in {trials} trials (max gap {:e})", search.max_gap)),
            Some(v) => fail(format!("violation with gap {:e} in {:?}", v.gap, v.source)),
        });
    }
    let ce = build_counterexample(d, 1.0)?;
    Ok(Outcome {
        status: Status::ExpectedFailure,
        detail: format!(
            "not convex, hence not subadditive: gap {} at (u, eps) = ({}, {}), closed form {}; \
             random search max gap {}",
            ce.gap, ce.witness.u, ce.witness.eps, ce.closed_form_gap, search.max_gap
        ),
    })
}

fn spectral_round_trip(d: &Distortion) -> Result<Outcome> {
    match d.spectral() {
        Ok(s) => {
            let back = s.distortion()?;
            let worst = (0..=1000)
                .map(|k| k as f64 / 1000.0)
                .map(|u| (back.eval(u) - d.eval(u)).abs())
                .fold(0.0, f64::max);
            Ok(if worst <= ROUND_TRIP_TOL {
                pass(format!("max deviation {worst:e}"))
            } else {
                fail(format!("round trip deviates by {worst:e}"))
            })
        }
        Err(Error::NotSpectral(w)) if !d.is_convex() => {
            Ok(pass(format!("not spectral, witness (u, eps) = ({}, {})", w.u, w.eps)))
        }
        Err(e) => Ok(fail(format!("error: {e}"))),
    }
}

enum Task<'a> {
    Pair(Check, usize, usize),
    Dist(Check, usize),
    Distortion(Check, usize, &'a Distortion),
}

/// Runs every check on the matrix. Results come back in a fixed order.
pub fn run(matrix: &Matrix, ev: &Evaluator) -> Result<SuiteReport> {
    if matrix.distributions.is_empty() || matrix.distortions.is_empty() {
        return Err(no_cases());
    }
    let nd = matrix.distributions.len();
    let discrete: Vec<usize> = (0..nd).filter(|&i| matrix.distributions[i].1.is_discrete()).collect();
    let mut tasks = Vec::new();
    for i in 0..nd {
        for j in 0..matrix.distortions.len() {
            tasks.push(Task::Pair(Check::Representation, i, j));
        }
        tasks.push(Task::Dist(Check::ExpectedShortfall, i));
        for j in 0..matrix.distortions.len() {
            if matrix.distributions[i].1.is_discrete() {
                tasks.push(Task::Pair(Check::Axioms, i, j));
            }
        }
        tasks.push(Task::Dist(Check::Ordering, i));
        for j in 0..matrix.distortions.len() {
            tasks.push(Task::Pair(Check::Domain, i, j));
        }
    }
    for (j, (_, d)) in matrix.distortions.iter().enumerate() {
        tasks.push(Task::Distortion(Check::Subadditivity, j, d));
        tasks.push(Task::Distortion(Check::SpectralRoundTrip, j, d));
    }
    let results = tasks
        .par_iter()
        .map(|task| match *task {
            Task::Pair(check, i, j) => {
                let (dn, dist) = &matrix.distributions[i];
                let (qn, d) = &matrix.distortions[j];
                let outcome = from_result(match check {
                    Check::Representation => representation(ev, dist, d),
                    Check::Axioms => {
                        let k = discrete.iter().position(|&x| x == i).unwrap_or(0);
                        let other = &matrix.distributions[discrete[(k + 1) % discrete.len()]].1;
                        axioms(ev, dist, other, d)
                    }
                    Check::Domain => domain(ev, dist, d),
                    _ => unreachable!(),
                });
                CaseResult {
                    check,
                    distribution: Some(dn.clone()),
                    distortion: Some(qn.clone()),
                    status: outcome.status,
                    detail: outcome.detail,
                }
            }
            Task::Dist(check, i) => {
                let (dn, dist) = &matrix.distributions[i];
                let outcome = from_result(match check {
                    Check::ExpectedShortfall => expected_shortfall_forms(ev, dist),
                    Check::Ordering => ordering_pairs(ev, dist, &matrix.distortions).and_then(|o| {
                        if o.status == Status::Fail {
                            Ok(o)
                        } else {
                            ordering_levels(ev, dist).map(|l| Outcome {
                                status: l.status,
                                detail: format!("{}; {}", o.detail, l.detail),
                            })
                        }
                    }),
                    _ => unreachable!(),
                });
                CaseResult {
                    check,
                    distribution: Some(dn.clone()),
                    distortion: None,
                    status: outcome.status,
                    detail: outcome.detail,
                }
            }
            Task::Distortion(check, j, d) => {
                let outcome = from_result(match check {
                    Check::Subadditivity => subadditivity(d, matrix.trials, matrix.seed),
                    Check::SpectralRoundTrip => spectral_round_trip(d),
                    _ => unreachable!(),
                });
                CaseResult {
                    check,
                    distribution: None,
                    distortion: Some(matrix.distortions[j].0.clone()),
                    status: outcome.status,
                    detail: outcome.detail,
                }
            }
        })
        .collect();
    Ok(SuiteReport::new(results))
}
