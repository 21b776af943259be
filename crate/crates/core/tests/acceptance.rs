//! Acceptance suite: eight criteria, one pass/fail line each.
//!
//! Run with `cargo test -p quantile-risk --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use quantile_risk::distortions::MidpointWitness;
use quantile_risk::properties::{build_counterexample, build_counterexample_at, subadditivity_search};
use quantile_risk::riskmeasures::{membership, Evaluator};
use quantile_risk::suite::{self, Check, Matrix, Status, SuiteReport};
use quantile_risk::{Distortion, Distribution, DomainClass, Error, ExtendedRisk, Verdict};

const CHOQUET_TOL: f64 = 1e-8;
const MIXTURE_TOL: f64 = 1e-6;
const ES_TOL: f64 = 1e-8;
const AXIOM_TOL: f64 = 1e-9;
const INFIMUM_TOL: f64 = 1e-6;
const SUBADDITIVITY_SLACK: f64 = 1e-9;
const GAP_TOL: f64 = 1e-10;
const ROUND_TRIP_TOL: f64 = 1e-12;
const TRIALS: u64 = 10_000;
const SEED: u64 = 20_240_601;
const GRID_LEVELS: [f64; 4] = [0.0, 0.25, 0.5, 0.9];
const GRID_ORDERS: [u32; 4] = [1, 2, 3, 5];

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn convex_grid() -> Vec<Distortion> {
    let mut out = vec![Distortion::expectation()];
    for &alpha in &GRID_LEVELS {
        out.push(Distortion::expected_shortfall(alpha).unwrap());
        for &n in &GRID_ORDERS {
            out.push(Distortion::expected_shortfall_order(n, alpha).unwrap());
        }
    }
    out
}

fn non_convex_grid() -> Vec<Distortion> {
    vec![
        Distortion::value_at_risk(0.1).unwrap(),
        Distortion::value_at_risk(0.25).unwrap(),
        Distortion::value_at_risk(0.5).unwrap(),
        Distortion::value_at_risk(0.9).unwrap(),
        Distortion::threshold(0.25).unwrap(),
        Distortion::threshold(0.5).unwrap(),
        Distortion::sqrt_example(),
    ]
}

fn suite_check(report: &SuiteReport, check: Check, allow_expected: bool) -> Outcome {
    let mut n = 0;
    for r in report.results.iter().filter(|r| r.check == check) {
        n += 1;
        let ok = r.status == Status::Pass || (allow_expected && r.status == Status::ExpectedFailure);
        ensure(ok, || {
            format!(
                "{:?} on {} / {}: {}",
                r.status,
                r.distribution.as_deref().unwrap_or("-"),
                r.distortion.as_deref().unwrap_or("-"),
                r.detail
            )
        })?;
    }
    ensure(n > 0, || format!("no {check:?} cases ran"))?;
    Ok(format!("{n} cases"))
}

fn representation(matrix: &Matrix, report: &SuiteReport) -> Outcome {
    ensure(matrix.distributions.len() >= 12, || "fewer than 12 distributions".into())?;
    ensure(matrix.distortions.len() >= 10, || "fewer than 10 distortions".into())?;
    let sizes: Vec<usize> = matrix
        .distributions
        .iter()
        .filter_map(|(_, d)| d.as_atoms().map(|a| a.len()))
        .collect();
    for n in [1, 4, 100] {
        ensure(sizes.contains(&n), || format!("no empirical law with {n} atoms"))?;
    }
    let mixed = matrix.distributions.iter().any(|(_, d)| {
        d.as_atoms()
            .is_some_and(|a| a.values().iter().any(|&x| x < 0.0) && a.values().iter().any(|&x| x > 0.0))
    });
    ensure(mixed, || "no mixed-sign atoms".into())?;
    let ev = Evaluator::default();
    let mut worst_choquet: f64 = 0.0;
    let mut worst_mixture: f64 = 0.0;
    for (dn, dist) in &matrix.distributions {
        for (gn, d) in &matrix.distortions {
            let q = ev.rho_quantile(dist, d).map_err(|e| format!("{dn} / {gn}: {e}"))?;
            let c = ev.rho_choquet(dist, d).map_err(|e| format!("{dn} / {gn}: {e}"))?;
            let (ExtendedRisk::Finite(qv), ExtendedRisk::Finite(cv)) = (q, c) else {
                ensure(q == c, || format!("{dn} / {gn}: quantile {q} vs Choquet {c}"))?;
                continue;
            };
            worst_choquet = worst_choquet.max((qv - cv).abs());
            ensure((qv - cv).abs() <= CHOQUET_TOL, || format!("{dn} / {gn}: quantile {qv} vs Choquet {cv}"))?;
            if d.is_convex() {
                let m = ev.rho_mixture(dist, d).map_err(|e| format!("{dn} / {gn}: {e}"))?;
                let mv = m.finite().ok_or_else(|| format!("{dn} / {gn}: mixture {m}"))?;
                worst_mixture = worst_mixture.max((qv - mv).abs());
                ensure((qv - mv).abs() <= MIXTURE_TOL, || format!("{dn} / {gn}: quantile {qv} vs mixture {mv}"))?;
            }
        }
    }
    let detail = suite_check(report, Check::Representation, false)?;
    Ok(format!(
        "{} x {}; max Choquet deviation {worst_choquet:.1e}, max mixture deviation {worst_mixture:.1e}; suite {detail}",
        matrix.distributions.len(),
        matrix.distortions.len()
    ))
}

fn expected_shortfall(matrix: &Matrix, report: &SuiteReport) -> Outcome {
    let ev = Evaluator::default();
    for (dn, dist) in &matrix.distributions {
        if let Some(mean) = dist.discrete_mean() {
            let es0 = ev.expected_shortfall(dist, 0.0).map_err(|e| e.to_string())?;
            ensure(es0 == ExtendedRisk::Finite(mean), || format!("{dn}: ES_0 = {es0} vs mean {mean}"))?;
            let q0 = ev.rho_quantile(dist, &Distortion::expected_shortfall(0.0).unwrap()).unwrap();
            ensure(q0 == ExtendedRisk::Finite(mean), || format!("{dn}: quantile ES_0 = {q0} vs mean {mean}"))?;
        }
        for alpha in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let closed = ev.expected_shortfall(dist, alpha).map_err(|e| e.to_string())?;
            let quant = ev
                .rho_quantile(dist, &Distortion::expected_shortfall(alpha).unwrap())
                .map_err(|e| e.to_string())?;
            match (closed, quant) {
                (ExtendedRisk::Finite(a), ExtendedRisk::Finite(b)) => {
                    ensure((a - b).abs() <= ES_TOL, || format!("{dn} alpha {alpha}: {a} vs {b}"))?;
                    let inf = ev.expected_shortfall_infimum(dist, alpha).map_err(|e| e.to_string())?;
                    ensure((inf.value - a).abs() <= ES_TOL, || {
                        format!("{dn} alpha {alpha}: infimum {} vs {a}", inf.value)
                    })?;
                }
                _ => ensure(closed == quant, || format!("{dn} alpha {alpha}: {closed} vs {quant}"))?,
            }
        }
    }
    let detail = suite_check(report, Check::ExpectedShortfall, false)?;
    Ok(format!("stop-loss, infimum and quantile forms agree; ES_0 = mean exactly; suite {detail}"))
}

fn axioms(matrix: &Matrix, report: &SuiteReport) -> Outcome {
    let ev = Evaluator::default();
    let discrete: Vec<&Distribution> = matrix
        .distributions
        .iter()
        .map(|(_, d)| d)
        .filter(|d| d.is_discrete())
        .collect();
    let mut checks = 0;
    for (i, x) in discrete.iter().enumerate() {
        let y = discrete[(i + 1) % discrete.len()];
        for (gn, d) in &matrix.distortions {
            let rho = |z: &Distribution| ev.rho_quantile(z, d).unwrap().finite().unwrap();
            let base = rho(x);
            for a in [0.0, 0.5, 1.0, 3.0] {
                let v = rho(&x.scale(a).unwrap());
                ensure((v - a * base).abs() <= AXIOM_TOL, || format!("{gn}: homogeneity a = {a}"))?;
                checks += 1;
            }
            for c in [-5.0, 0.0, 7.0] {
                let v = rho(&x.shift(c).unwrap());
                ensure((v - base - c).abs() <= AXIOM_TOL, || format!("{gn}: translation c = {c}"))?;
                checks += 1;
            }
            let pos = x.positive_part();
            ensure(base <= rho(&pos) + AXIOM_TOL, || format!("{gn}: monotonicity X <= X^+"))?;
            let sum = x.comonotone_sum(y);
            let additive = rho(&sum) - rho(x) - rho(y);
            ensure(additive.abs() <= AXIOM_TOL, || format!("{gn}: comonotone additivity off by {additive:e}"))?;
            checks += 2;
        }
    }
    let detail = suite_check(report, Check::Axioms, false)?;
    Ok(format!("{checks} exact checks, zero failures; suite {detail}"))
}

fn ordering(matrix: &Matrix, report: &SuiteReport) -> Outcome {
    let ev = Evaluator::default();
    let mut gaps: f64 = 0.0;
    for (dn, dist) in &matrix.distributions {
        let Ok(ExtendedRisk::Finite(mean)) = ev.mean(dist) else {
            continue;
        };
        let min = (1..=60)
            .filter_map(|k| ev.expected_shortfall(dist, 0.5f64.powi(k)).ok()?.finite())
            .fold(f64::INFINITY, f64::min);
        gaps = gaps.max((min - mean).abs());
        ensure((min - mean).abs() <= INFIMUM_TOL, || format!("{dn}: dyadic minimum {min} vs mean {mean}"))?;
    }
    let detail = suite_check(report, Check::Ordering, false)?;
    Ok(format!("dyadic infimum within {gaps:.1e} of the mean; suite {detail}"))
}

fn subadditivity() -> Outcome {
    let mut max_gap = f64::NEG_INFINITY;
    let convex = convex_grid();
    for d in &convex {
        let report = subadditivity_search(d, TRIALS, SEED);
        ensure(report.trials == TRIALS, || format!("{}: ran {} trials", d.label(), report.trials))?;
        ensure(report.worst.is_none() && report.max_gap <= SUBADDITIVITY_SLACK, || {
            format!("{}: violation with gap {:e}", d.label(), report.max_gap)
        })?;
        max_gap = max_gap.max(report.max_gap);
    }
    for d in non_convex_grid() {
        let ce = build_counterexample(&d, 1.0).map_err(|e| format!("{}: {e}", d.label()))?;
        let (u, e, a) = (ce.witness.u, ce.witness.eps, ce.a);
        let formula = (a + e / 2.0) * (2.0 * d.eval(u) - d.eval(u - e) - d.eval(u + e));
        ensure(ce.gap > 0.0, || format!("{}: gap {} is not positive", d.label(), ce.gap))?;
        ensure((ce.gap - formula).abs() <= GAP_TOL, || {
            format!("{}: gap {} vs closed form {formula}", d.label(), ce.gap)
        })?;
    }
    let var = Distortion::value_at_risk(0.5).unwrap();
    let w = MidpointWitness { u: 0.5, eps: 0.25, excess: 1.0 };
    let ce = build_counterexample_at(&var, 1.0, w).map_err(|e| e.to_string())?;
    ensure((ce.gap - 1.125).abs() <= GAP_TOL, || format!("var(0.5) gap {}", ce.gap))?;
    ensure((ce.rho_sum + 1.25).abs() <= GAP_TOL, || format!("var(0.5) rho[X+Y] = {}", ce.rho_sum))?;
    ensure((ce.rho_x + ce.rho_y + 2.375).abs() <= GAP_TOL, || {
        format!("var(0.5) rho[X] + rho[Y] = {}", ce.rho_x + ce.rho_y)
    })?;
    Ok(format!(
        "{} convex D x {TRIALS} tables, max gap {max_gap:e}; {} non-convex D with matching gaps; var(0.5) gap {}",
        convex.len(),
        non_convex_grid().len(),
        ce.gap
    ))
}

fn spectral_round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    let convex = convex_grid();
    for d in &convex {
        let back = d.spectral().map_err(|e| format!("{}: {e}", d.label()))?.distortion().map_err(|e| e.to_string())?;
        for k in 0..1000 {
            let u = k as f64 / 999.0;
            worst = worst.max((back.eval(u) - d.eval(u)).abs());
        }
    }
    ensure(worst <= ROUND_TRIP_TOL, || format!("round trip deviates by {worst:e}"))?;
    for alpha in [0.1, 0.25, 0.5, 0.9] {
        let d = Distortion::value_at_risk(alpha).unwrap();
        ensure(matches!(d.spectral(), Err(Error::NotSpectral(_))), || {
            format!("var({alpha}) did not raise NotSpectral")
        })?;
    }
    Ok(format!("{} convex D at 1000 points, max deviation {worst:.1e}; var is not spectral", convex.len()))
}

fn domains(matrix: &Matrix) -> Outcome {
    let ev = Evaluator::default();
    let expect = |dist: &Distribution, d: &Distortion, class: DomainClass, want: Verdict, probe: bool| {
        let v = ev.classify(dist, d, class);
        ensure(v.verdict == want, || format!("{} {class:?}: {:?}, expected {want:?}", d.label(), v.verdict))?;
        if probe {
            let p = v.probe.as_ref().map(|p| p.verdict);
            let consistent = match want {
                Verdict::NonMember => p == Some(Verdict::NonMember),
                _ => p.is_some() && p != Some(Verdict::NonMember),
            };
            ensure(consistent, || format!("{} {class:?}: probe {p:?}, expected {want:?}", d.label()))?;
        }
        Ok::<(), String>(())
    };
    let heavy = Distribution::pareto_negative_with_index(1.0, 1.0)
        .unwrap()
        .comonotone_sum(&Distribution::pareto_positive(0.8, 1.0).unwrap());
    let var = Distortion::value_at_risk(0.5).unwrap();
    for class in DomainClass::ALL {
        expect(&heavy, &var, class, Verdict::Member, true)?;
    }
    let sqrt = Distortion::sqrt_example();
    let pn = Distribution::pareto_negative(1.0).unwrap();
    expect(&pn, &sqrt, DomainClass::LQ, Verdict::Member, true)?;
    expect(&pn, &sqrt, DomainClass::Pichler, Verdict::Member, true)?;
    expect(&pn, &sqrt, DomainClass::Acerbi, Verdict::NonMember, true)?;
    let threshold = Distortion::threshold(0.5).unwrap();
    let pn1 = Distribution::pareto_negative_with_index(1.0, 1.0).unwrap();
    expect(&pn1, &threshold, DomainClass::LQ, Verdict::Member, true)?;
    expect(&pn1, &threshold, DomainClass::Pichler, Verdict::Member, true)?;
    expect(&pn1, &threshold, DomainClass::Acerbi, Verdict::NonMember, true)?;
    let mut laws: Vec<&Distribution> = matrix.distributions.iter().map(|(_, d)| d).collect();
    laws.push(&heavy);
    laws.push(&pn1);
    let mut runs = 0;
    for d in convex_grid().iter().chain(matrix.distortions.iter().map(|(_, d)| d).filter(|d| d.is_convex())) {
        for dist in &laws {
            let pichler = membership(dist, d, DomainClass::Pichler);
            let acerbi = membership(dist, d, DomainClass::Acerbi);
            ensure(!(pichler == Verdict::Member && acerbi == Verdict::NonMember), || {
                format!("{} on {}: Pichler member outside Acerbi", d.label(), dist.describe())
            })?;
            runs += 1;
        }
    }
    Ok(format!("separations confirmed, divergences detected by the probe; {runs} convex runs respect the class inclusion"))
}

fn finiteness(matrix: &Matrix) -> Outcome {
    let ev = Evaluator::default();
    let mut vanishing: Vec<Distortion> = matrix
        .distortions
        .iter()
        .map(|(_, d)| d.clone())
        .filter(Distortion::vanishes_near_zero)
        .collect();
    vanishing.extend(convex_grid().into_iter().filter(Distortion::vanishes_near_zero));
    ensure(!vanishing.is_empty(), || "no vanishing distortion".into())?;
    let mut laws: Vec<Distribution> = matrix.distributions.iter().map(|(_, d)| d.clone()).collect();
    laws.push(Distribution::pareto_negative_with_index(1.0, 1.0).unwrap());
    laws.push(Distribution::pareto_negative_with_index(1.0, 0.5).unwrap());
    let mut finite = 0;
    for d in &vanishing {
        for dist in &laws {
            let rho = ev.rho_quantile(dist, d).map_err(|e| format!("{} on {}: {e}", d.label(), dist.describe()))?;
            let in_domain = membership(dist, d, DomainClass::LQ) == Verdict::Member;
            ensure(rho != ExtendedRisk::NegInfinity, || format!("{} on {}: -inf", d.label(), dist.describe()))?;
            if in_domain {
                ensure(rho.is_finite(), || format!("{} on {}: {rho}", d.label(), dist.describe()))?;
                finite += 1;
            }
        }
    }
    Ok(format!("{finite} in-domain evaluations over {} vanishing D, all finite", vanishing.len()))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let matrix = Matrix::default_matrix();
    let report = suite::run(&matrix, &Evaluator::default()).expect("default matrix runs");
    let criteria: Vec<Criterion> = vec![
        ("representation equivalence", Box::new(|| representation(&matrix, &report))),
        ("expected shortfall forms", Box::new(|| expected_shortfall(&matrix, &report))),
        ("axioms", Box::new(|| axioms(&matrix, &report))),
        ("ordering", Box::new(|| ordering(&matrix, &report))),
        ("subadditivity dichotomy", Box::new(subadditivity)),
        ("spectral round trip", Box::new(spectral_round_trip)),
        ("domain separations", Box::new(|| domains(&matrix))),
        ("finiteness guard", Box::new(|| finiteness(&matrix))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
