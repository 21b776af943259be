//! Subadditivity: counterexamples for non-convex distortions, a randomized search over
//! discrete joint laws, and the comonotone additivity check.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distortions::{Distortion, MidpointWitness};
use crate::distributions::{Atoms, Distribution};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::riskmeasures::{rho_quantile, ExtendedRisk};

/// Slack allowed before a search trial counts as a subadditivity violation.
pub const SUBADDITIVITY_SLACK: f64 = 1e-9;
/// Agreement required between computed risks and the closed forms of the counterexample.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Agreement required for comonotone additivity.
pub const COMONOTONE_TOL: f64 = 1e-9;

const TABLE_TOL: f64 = 1e-12;
const MAX_SIDE: usize = 8;
const VALUE_RANGE: i32 = 10;
const MAX_WEIGHT: u32 = 9;

/// Joint law of a pair `(X, Y)` on finitely many points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// `probs[i][j] = P[X = xs[i], Y = ys[j]]`.
    probs: Vec<Vec<f64>>,
}

impl JointTable {
    /// `xs` and `ys` strictly increasing, `probs` of shape `xs.len() x ys.len()` with
    /// non-negative entries summing to one within `1e-12`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, probs: Vec<Vec<f64>>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        if xs.is_empty() || ys.is_empty() {
            return bad("joint table needs at least one row and one column".into());
        }
        for v in [&xs, &ys] {
            if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[0] >= w[1]) {
                return bad("joint table values must be finite and strictly increasing".into());
            }
        }
        if probs.len() != xs.len() || probs.iter().any(|r| r.len() != ys.len()) {
            return bad(format!("joint table must be {} x {}", xs.len(), ys.len()));
        }
        if probs.iter().flatten().any(|&p| !(p.is_finite() && p >= 0.0)) {
            return bad("joint table entries must be non-negative".into());
        }
        let total = compensated_sum(probs.iter().flatten().copied());
        if (total - 1.0).abs() > TABLE_TOL {
            return bad(format!("joint table entries sum to {total}, expected 1"));
        }
        Ok(JointTable { xs, ys, probs })
    }

    /// Table from `(x, y, p)` cells; repeated cells are added up.
    pub fn from_cells(cells: &[(f64, f64, f64)]) -> Result<Self> {
        let axis = |pick: fn(&(f64, f64, f64)) -> f64| {
            let mut v: Vec<f64> = cells.iter().map(pick).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let xs = axis(|c| c.0);
        let ys = axis(|c| c.1);
        let mut probs = vec![vec![0.0; ys.len()]; xs.len()];
        for &(x, y, p) in cells {
            let i = xs.partition_point(|&v| v < x);
            let j = ys.partition_point(|&v| v < y);
            probs[i][j] += p;
        }
        Self::new(xs, ys, probs)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn probabilities(&self) -> &[Vec<f64>] {
        &self.probs
    }

    fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.probs.iter().enumerate().flat_map(move |(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(move |(j, &p)| (self.xs[i], self.ys[j], p))
        })
    }

    /// Law of `X` (row sums).
    pub fn marginal_x(&self) -> Distribution {
        let pairs = self
            .xs
            .iter()
            .zip(&self.probs)
            .map(|(&x, row)| (x, compensated_sum(row.iter().copied())))
            .collect();
        atoms_from(pairs)
    }

    /// Law of `Y` (column sums).
    pub fn marginal_y(&self) -> Distribution {
        let pairs = self
            .ys
            .iter()
            .enumerate()
            .map(|(j, &y)| (y, compensated_sum(self.probs.iter().map(|r| r[j]))))
            .collect();
        atoms_from(pairs)
    }

    /// Law of `X + Y`: atoms at every `x_i + y_j` with aggregated mass.
    pub fn sum_distribution(&self) -> Distribution {
        let mut pairs: Vec<(f64, f64)> = self.cells().map(|(x, y, p)| (x + y, p)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, Vec<f64>)> = Vec::new();
        for (z, p) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == z => last.1.push(p),
                _ => merged.push((z, vec![p])),
            }
        }
        atoms_from(merged.into_iter().map(|(z, ps)| (z, compensated_sum(ps))).collect())
    }
}

fn atoms_from(pairs: Vec<(f64, f64)>) -> Distribution {
    Atoms::from_unsorted(pairs)
        .expect("marginals of a validated table are valid atoms")
        .into()
}

/// Risks computed on the counterexample next to their closed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub witness: MidpointWitness,
    pub a: f64,
    pub table: JointTable,
    pub rho_x: f64,
    pub rho_y: f64,
    pub rho_sum: f64,
    /// `rho[X + Y] - rho[X] - rho[Y]`.
    pub gap: f64,
    /// `-(a + eps) D(u)`.
    pub closed_form_x: f64,
    /// `-(eps/2) D(u - eps) - (a + eps/2) D(u)`.
    pub closed_form_y: f64,
    /// `-(a + eps) D(u - eps) - (eps/2) D(u) - (a + eps/2) D(u + eps)`.
    pub closed_form_sum: f64,
    /// `(a + eps/2)(2 D(u) - D(u - eps) - D(u + eps))`.
    pub closed_form_gap: f64,
}

/// The joint table of `(X, Y)` for a midpoint witness `(u, eps)` and `a > 0`.
pub fn counterexample_table(w: MidpointWitness, a: f64) -> Result<JointTable> {
    let (u, e) = (w.u, w.eps);
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(format!("parameter a = {a} must be positive")));
    }
    if !(e > 0.0 && e < u.min(1.0 - u)) {
        return Err(Error::domain(format!(
            "witness eps = {e} must lie in (0, min(u, 1 - u)) for u = {u}"
        )));
    }
    let low = -(a + e);
    let mid = -(a + e / 2.0);
    JointTable::new(
        vec![low, 0.0],
        vec![low, mid, 0.0],
        vec![vec![u - e, 0.0, e], vec![0.0, e, 1.0 - u - e]],
    )
}

/// The law of `X + Y` as tabulated for the counterexample: atoms at `-2(a + eps)`,
/// `-(a + eps)`, `-(a + eps/2)` and `0` with masses `u - eps`, `eps`, `eps`, `1 - u - eps`.
pub fn counterexample_sum_table(w: MidpointWitness, a: f64) -> Vec<(f64, f64)> {
    let (u, e) = (w.u, w.eps);
    vec![
        (-2.0 * (a + e), u - e),
        (-(a + e), e),
        (-(a + e / 2.0), e),
        (0.0, 1.0 - u - e),
    ]
}

/// Builds `X`, `Y` with `rho[X + Y] > rho[X] + rho[Y]` for a non-convex `D`.
pub fn build_counterexample(d: &Distortion, a: f64) -> Result<CounterexampleReport> {
    let report = d.convexity();
    if report.convex {
        return Err(Error::NoCounterexample);
    }
    let w = report.witness.ok_or(Error::WitnessNotFound)?;
    build_counterexample_at(d, a, w)
}

/// As [`build_counterexample`] with a given witness.
pub fn build_counterexample_at(d: &Distortion, a: f64, w: MidpointWitness) -> Result<CounterexampleReport> {
    let table = counterexample_table(w, a)?;
    let (u, e) = (w.u, w.eps);
    let (du_lo, du, du_hi) = (d.eval(u - e), d.eval(u), d.eval(u + e));
    let excess = 2.0 * du - du_lo - du_hi;
    if excess <= 0.0 {
        return Err(Error::domain(format!(
            "(u, eps) = ({u}, {e}) is not a midpoint witness: 2D(u) - D(u-eps) - D(u+eps) = {excess}"
        )));
    }
    let rho = |dist: &Distribution| -> f64 {
        rho_quantile(dist, d)
            .expect("discrete laws are evaluated exactly")
            .finite()
            .expect("discrete laws have finite risk")
    };
    let rho_x = rho(&table.marginal_x());
    let rho_y = rho(&table.marginal_y());
    let rho_sum = rho(&table.sum_distribution());
    let closed_form_x = -(a + e) * du;
    let closed_form_y = -(e / 2.0) * du_lo - (a + e / 2.0) * du;
    let closed_form_sum = -(a + e) * du_lo - (e / 2.0) * du - (a + e / 2.0) * du_hi;
    let closed_form_gap = (a + e / 2.0) * excess;
    let gap = rho_sum - rho_x - rho_y;
    let checks = [
        ("rho[X]", rho_x, closed_form_x),
        ("rho[Y]", rho_y, closed_form_y),
        ("rho[X+Y]", rho_sum, closed_form_sum),
        ("gap", gap, closed_form_gap),
    ];
    for (name, got, want) in checks {
        if (got - want).abs() > IDENTITY_TOL {
            return Err(Error::Inconclusive(format!(
                "{name} = {got} differs from the closed form {want}"
            )));
        }
    }
    Ok(CounterexampleReport {
        witness: w,
        a,
        table,
        rho_x,
        rho_y,
        rho_sum,
        gap,
        closed_form_x,
        closed_form_y,
        closed_form_sum,
        closed_form_gap,
    })
}

/// Where a searched table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSource {
    Random { trial: u64 },
    Seeded { index: usize },
}

/// One evaluated table with `gap = rho[X + Y] - rho[X] - rho[Y]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub source: TableSource,
    pub table: JointTable,
    pub rho_x: f64,
    pub rho_y: f64,
    pub rho_sum: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub trials: u64,
    pub seed: u64,
    /// Largest gap seen over all tables, violating or not.
    pub max_gap: f64,
    /// The worst table whose gap exceeds the slack.
    pub worst: Option<Violation>,
}

/// A random table with up to 8 x 8 cells, distinct integer values in `[-10, 10]` and
/// integer weights.
pub fn random_table(rng: &mut impl Rng) -> JointTable {
    let side = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        let n = rng.gen_range(1..=MAX_SIDE);
        let mut v: Vec<f64> = sample(rng, (2 * VALUE_RANGE + 1) as usize, n)
            .into_iter()
            .map(|k| k as f64 - VALUE_RANGE as f64)
            .collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let xs = side(rng);
    let ys = side(rng);
    loop {
        let weights: Vec<Vec<u32>> = (0..xs.len())
            .map(|_| (0..ys.len()).map(|_| rng.gen_range(0..=MAX_WEIGHT)).collect())
            .collect();
        let total: u32 = weights.iter().flatten().sum();
        if total == 0 {
            continue;
        }
        let probs = weights
            .iter()
            .map(|r| r.iter().map(|&w| w as f64 / total as f64).collect())
            .collect();
        return JointTable::new(xs, ys, probs).expect("normalized weights");
    }
}

fn evaluate(d: &Distortion, table: JointTable, source: TableSource) -> Violation {
    let rho = |dist: &Distribution| {
        rho_quantile(dist, d)
            .ok()
            .and_then(ExtendedRisk::finite)
            .expect("discrete laws have finite risk")
    };
    let rho_x = rho(&table.marginal_x());
    let rho_y = rho(&table.marginal_y());
    let rho_sum = rho(&table.sum_distribution());
    Violation {
        source,
        gap: rho_sum - rho_x - rho_y,
        table,
        rho_x,
        rho_y,
        rho_sum,
    }
}

fn worse(a: Violation, b: Violation) -> Violation {
    let order = |s: &TableSource| match *s {
        TableSource::Seeded { index } => (0u8, index as u64),
        TableSource::Random { trial } => (1u8, trial),
    };
    if b.gap > a.gap || (b.gap == a.gap && order(&b.source) < order(&a.source)) {
        b
    } else {
        a
    }
}

/// Evaluates `trials` random joint tables and reports the worst subadditivity violation.
///
/// Trial `k` draws from a ChaCha8 stream selected by `k`, so the result is independent of
/// scheduling and identical for identical `(trials, seed)`.
pub fn subadditivity_search(d: &Distortion, trials: u64, seed: u64) -> SearchReport {
    subadditivity_search_with(d, trials, seed, &[])
}

/// As [`subadditivity_search`], evaluating `seeded` tables in addition to the random ones.
pub fn subadditivity_search_with(d: &Distortion, trials: u64, seed: u64, seeded: &[JointTable]) -> SearchReport {
    let random = (0..trials).into_par_iter().map(|trial| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        evaluate(d, random_table(&mut rng), TableSource::Random { trial })
    });
    let fixed = seeded
        .par_iter()
        .enumerate()
        .map(|(index, t)| evaluate(d, t.clone(), TableSource::Seeded { index }));
    let worst = random.chain(fixed).reduce_with(worse);
    let max_gap = worst.as_ref().map_or(f64::NEG_INFINITY, |v| v.gap);
    SearchReport {
        trials,
        seed,
        max_gap,
        worst: worst.filter(|v| v.gap > SUBADDITIVITY_SLACK),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComonotoneReport {
    pub rho_first: ExtendedRisk,
    pub rho_second: ExtendedRisk,
    pub rho_sum: ExtendedRisk,
    /// `rho[X + Y] - rho[X] - rho[Y]` when all three are finite.
    pub difference: Option<f64>,
    pub holds: bool,
}

/// Checks `rho[X + Y] = rho[X] + rho[Y]` for the comonotone coupling of `d1` and `d2`.
pub fn comonotone_additivity_check(d: &Distortion, d1: &Distribution, d2: &Distribution) -> Result<ComonotoneReport> {
    let r1 = rho_quantile(d1, d)?;
    let r2 = rho_quantile(d2, d)?;
    let rs = rho_quantile(&d1.comonotone_sum(d2), d)?;
    let (difference, holds) = match (r1, r2, rs) {
        (ExtendedRisk::Finite(a), ExtendedRisk::Finite(b), ExtendedRisk::Finite(s)) => {
            let diff = s - a - b;
            (Some(diff), diff.abs() <= COMONOTONE_TOL)
        }
        _ => {
            let expected = if r1 == ExtendedRisk::NotInDomain || r2 == ExtendedRisk::NotInDomain {
                ExtendedRisk::NotInDomain
            } else {
                ExtendedRisk::NegInfinity
            };
            (None, rs == expected)
        }
    };
    Ok(ComonotoneReport {
        rho_first: r1,
        rho_second: r2,
        rho_sum: rs,
        difference,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emp(v: &[f64]) -> Distribution {
        Distribution::empirical(v).unwrap()
    }

    #[test]
    fn var_counterexample_values() {
        let d = Distortion::value_at_risk(0.5).unwrap();
        let r = build_counterexample(&d, 1.0).unwrap();
        assert_eq!((r.witness.u, r.witness.eps), (0.5, 0.25));
        assert_eq!(r.rho_x, -1.25);
        assert_eq!(r.rho_y, -1.125);
        assert_eq!(r.rho_sum, -1.25);
        assert_eq!(r.gap, 1.125);
        assert_eq!(r.rho_x + r.rho_y, -2.375);
    }

    #[test]
    fn sum_law_matches_tabulated_law() {
        let d = Distortion::threshold(0.5).unwrap();
        let r = build_counterexample(&d, 1.0).unwrap();
        let tabulated = Atoms::new(&counterexample_sum_table(r.witness, 1.0)).unwrap();
        assert_eq!(r.table.sum_distribution().as_atoms().unwrap().iter().collect::<Vec<_>>(),
            tabulated.iter().collect::<Vec<_>>());
        assert!(r.gap > 0.0);
    }

    #[test]
    fn convex_distortion_has_no_counterexample() {
        let d = Distortion::expected_shortfall(0.3).unwrap();
        assert_eq!(build_counterexample(&d, 1.0).unwrap_err(), Error::NoCounterexample);
    }

    #[test]
    fn gap_is_affine_in_a() {
        let d = Distortion::value_at_risk(0.5).unwrap();
        let g1 = build_counterexample(&d, 1.0).unwrap().gap;
        let g10 = build_counterexample(&d, 10.0).unwrap().gap;
        // (a + eps/2) * excess with excess = 1
        assert_eq!(g1, 1.125);
        assert_eq!(g10, 10.125);
    }

    #[test]
    fn from_cells_aggregates() {
        let t = JointTable::from_cells(&[(0.0, 1.0, 0.25), (0.0, 1.0, 0.25), (1.0, 0.0, 0.5)]).unwrap();
        assert_eq!(t.probabilities(), &[vec![0.0, 0.5], vec![0.5, 0.0]]);
        assert_eq!(t.sum_distribution().as_atoms().unwrap().values(), &[1.0]);
    }

    #[test]
    fn invalid_tables_are_rejected() {
        assert!(JointTable::new(vec![0.0], vec![0.0], vec![vec![0.5]]).is_err());
        assert!(JointTable::new(vec![1.0, 0.0], vec![0.0], vec![vec![0.5], vec![0.5]]).is_err());
        assert!(JointTable::new(vec![0.0], vec![0.0], vec![vec![-1.0, 2.0]]).is_err());
    }

    #[test]
    fn search_is_deterministic_and_finds_var_violations() {
        let d = Distortion::value_at_risk(0.5).unwrap();
        let a = subadditivity_search(&d, 500, 7);
        let b = subadditivity_search(&d, 500, 7);
        assert_eq!(a, b);
        assert!(a.worst.is_some());
    }

    #[test]
    fn search_finds_seeded_counterexample() {
        let d = Distortion::value_at_risk(0.5).unwrap();
        let r = build_counterexample(&d, 1.0).unwrap();
        let s = subadditivity_search_with(&d, 0, 1, std::slice::from_ref(&r.table));
        let w = s.worst.unwrap();
        assert_eq!(w.source, TableSource::Seeded { index: 0 });
        assert_eq!(w.gap, 1.125);
    }

    #[test]
    fn expectation_is_additive() {
        let s = subadditivity_search(&Distortion::expectation(), 2000, 3);
        assert!(s.worst.is_none());
        assert!(s.max_gap.abs() <= 1e-10, "{}", s.max_gap);
    }

    #[test]
    fn comonotone_examples() {
        let es = Distortion::expected_shortfall(0.5).unwrap();
        let r = comonotone_additivity_check(&es, &emp(&[1.0, 2.0]), &emp(&[10.0, 20.0])).unwrap();
        assert!(r.holds);
        assert_eq!(r.rho_sum, ExtendedRisk::Finite(22.0));
        let var = Distortion::value_at_risk(0.3).unwrap();
        let r = comonotone_additivity_check(&var, &emp(&[3.0, -1.0, 4.0]), &emp(&[1.0, 5.0, 9.0])).unwrap();
        assert_eq!(r.difference, Some(0.0));
        let c = Distribution::point_mass(2.0).unwrap();
        let p = Distribution::pareto_negative(1.0).unwrap();
        assert!(comonotone_additivity_check(&es, &p, &c).unwrap().holds);
    }
}
