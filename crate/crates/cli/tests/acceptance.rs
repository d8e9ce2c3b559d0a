//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Oracle values are computed by hand in this file.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steklov_core::calculus::{check_rule, Outcome, Rule, EQUALITY_FACTOR};
use steklov_core::corpus::{corpus_lookup, corpus_names, parse_function};
use steklov_core::directions::sphere_net;
use steklov_core::mapping::ImageField;
use steklov_core::optimality::{
    build_gnva, full_report, gnva_directions, Constraint, OptimalityReport, ReportConfig, Verdict,
};
use steklov_core::smoothing::{steklov_average, steklov_gradient};
use steklov_core::subdiff::{
    big_phi, default_curves, default_probes, equivalence_check, extended_battery, psi2_subdiff, standard_battery,
    DEFAULT_EPS0, EQUIVALENCE_DIRECTIONS,
};
use steklov_core::{hausdorff, hull_of, Image, LipschitzFunction, QuadratureSpec, Shape};

/// Pinned tolerances.
const C1_DIAMETER: f64 = 1e-3;
const C1_CENTER: f64 = 1e-3;
const C1_SECONDS: f64 = 30.0;
const C1_SAMPLES: usize = 100_000;
const C2_ENDPOINT: f64 = 1e-2;
const C2_HAUSDORFF: f64 = 2e-2;
const C3_SECONDS: f64 = 300.0;
const C4_DRAWS: usize = 10_000;
const C4_SLACK: f64 = 1e-3;
const C5_FROBENIUS: f64 = 1e-2;
const C5_GROWTH: (f64, f64) = (0.8, 1.2);
const C6_MC_REL: f64 = 1e-3;
const C6_GRID_REL: f64 = 1e-10;
const C7_VERTEX: f64 = 1e-2;
const C8_MARGIN: f64 = 1e-2;
const C9_SECONDS: f64 = 600.0;
const C9_SAMPLES: usize = 4_000;

type Extract = fn(&OptimalityReport) -> Option<f64>;
type Criterion = fn() -> Outcome_;

struct Outcome_ {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome_ {
    Outcome_ {
        pass,
        detail: detail.into(),
    }
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn expr(src: &str, n: usize, l: f64) -> LipschitzFunction {
    parse_function(src, n, Some(l)).unwrap().function
}

fn c1() -> Outcome_ {
    // ∇(½x₁² + x₂²) = (x₁, 2x₂); ∇ of the quartic is (x₁³ + x₁ − x₂/2, x₂³ + 2x₂ − x₁/2).
    let quartic = |x: &[f64]| [x[0].powi(3) + x[0] - 0.5 * x[1], x[1].powi(3) + 2.0 * x[1] - 0.5 * x[0]];
    let cases = [("quad_posdef", [1.0, 1.0], [1.0, 2.0]), ("smooth_quartic", [0.3, -0.2], quartic(&[0.3, -0.2]))];
    let spec = QuadratureSpec::monte_carlo(C1_SAMPLES, 1);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, x, grad) in cases {
        let (f, _) = corpus_lookup(name).unwrap();
        let x0 = v(&x);
        let t = Instant::now();
        let phi = big_phi(&f, &x0, &standard_battery(&x0, DEFAULT_EPS0).unwrap(), &default_probes(2), &spec).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let diam = phi.set.diameter();
        let err = (phi.set.centroid() - v(&grad)).norm();
        pass &= diam <= C1_DIAMETER && err <= C1_CENTER && secs <= C1_SECONDS;
        parts.push(format!("{name} diam {diam:.1e} center err {err:.1e} ({secs:.1}s)"));
    }
    outcome(pass, parts.join("; "))
}

fn c2() -> Outcome_ {
    let spec = QuadratureSpec::default();
    let (abs, _) = corpus_lookup("abs1d").unwrap();
    let x0 = v(&[0.0]);
    let phi = big_phi(&abs, &x0, &extended_battery(&x0, DEFAULT_EPS0).unwrap(), &default_probes(1), &spec).unwrap();
    let xs: Vec<f64> = phi.set.vertices().iter().map(|p| p[0]).collect();
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ends = (lo + 1.0).abs().max((hi - 1.0).abs());

    let (maxlin, _) = corpus_lookup("maxlin2d").unwrap();
    let x0 = v(&[0.0, 0.0]);
    let phi = big_phi(&maxlin, &x0, &extended_battery(&x0, DEFAULT_EPS0).unwrap(), &default_probes(2), &spec).unwrap();
    let clarke = hull_of(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], 1e-12).unwrap();
    let h = hausdorff(&phi.set, &clarke, 256).unwrap();
    outcome(
        ends <= C2_ENDPOINT && h <= C2_HAUSDORFF,
        format!("abs1d [{lo:.4}, {hi:.4}] endpoint err {ends:.1e}; maxlin2d Hausdorff {h:.1e}"),
    )
}

fn c3() -> Outcome_ {
    let spec = QuadratureSpec::default();
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in corpus_names() {
        let (f, o) = corpus_lookup(name).unwrap();
        let x0 = o.reference_point.clone();
        let n = f.dim();
        let curves = default_curves(&sphere_net(n, EQUIVALENCE_DIRECTIONS, 0xc0));
        let battery = extended_battery(&x0, DEFAULT_EPS0).unwrap();
        let eq = equivalence_check(&f, &x0, &battery, &curves, &default_probes(n), &spec).unwrap();
        let tol = 5e-2 * f.lipschitz_const().max(1.0);
        pass &= eq.gap <= tol;
        parts.push(format!("{name} {:.1e}", eq.gap));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs <= C3_SECONDS;
    outcome(pass, format!("gaps {} ({secs:.0}s)", parts.join(", ")))
}

fn c4() -> Outcome_ {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let entries: Vec<_> = corpus_names().iter().map(|n| corpus_lookup(n).unwrap()).collect();
    let batteries: Vec<_> = entries
        .iter()
        .map(|(_, o)| extended_battery(&o.reference_point, DEFAULT_EPS0).unwrap())
        .collect();
    let spec = QuadratureSpec::monte_carlo(1_000, 9);
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..C4_DRAWS {
        let k = rng.random_range(0..entries.len());
        let (f, o) = &entries[k];
        let s = &batteries[k][rng.random_range(0..batteries[k].len())];
        let i = rng.random_range(0..s.depth());
        let n = f.dim();
        let u = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        if u.norm() < 1e-6 {
            continue;
        }
        let x = &o.reference_point + u.normalize() * s.radius_at(i, rng.random_range(0.01..0.99));
        let image = s.image_at(&x).unwrap();
        let g = steklov_gradient(f, &x, &image, &spec.with_seed(rng.random())).unwrap();
        let ratio = g.value.norm() / f.lipschitz_const();
        worst = worst.max(ratio);
        if ratio > 1.0 + C4_SLACK {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in {C4_DRAWS} draws, max |grad|/L = {worst:.6}"),
    )
}

fn c5() -> Outcome_ {
    let spec = QuadratureSpec::default();
    let (q, _) = corpus_lookup("quad_posdef").unwrap();
    let x0 = v(&[1.0, 1.0]);
    let m = psi2_subdiff(&q, &x0, &standard_battery(&x0, DEFAULT_EPS0).unwrap(), &default_probes(2), &spec).unwrap();
    let verts = m.vertex_matrices().unwrap();
    let target = DMatrix::from_diagonal(&v(&[1.0, 2.0]));
    let err = verts.iter().map(|a| (a - &target).norm()).fold(0.0, f64::max);
    let quad_ok = !m.unbounded && verts.len() == 1 && err <= C5_FROBENIUS;

    let (abs, _) = corpus_lookup("abs1d").unwrap();
    let x0 = v(&[0.0]);
    let a = psi2_subdiff(&abs, &x0, &standard_battery(&x0, DEFAULT_EPS0).unwrap(), &default_probes(1), &spec).unwrap();
    let growth_ok = a.unbounded && (C5_GROWTH.0..=C5_GROWTH.1).contains(&a.growth_exponent);
    outcome(
        quad_ok && growth_ok,
        format!(
            "quad_posdef {} cluster(s), Frobenius err {err:.1e}; abs1d unbounded={} growth {:.3}",
            verts.len(),
            a.unbounded,
            a.growth_exponent
        ),
    )
}

fn c6() -> Outcome_ {
    let square = expr("x1*x1", 1, 1.0);
    let abs = expr("abs(x1)", 1, 1.0);
    let x = v(&[0.0]);
    // ∫₋ᵣʳ y² dy / 2r = r²/3 and ∫₋ᵣʳ |y| dy / 2r = r/2.
    let cases = [(&square, 0.3, 0.3f64.powi(2) / 3.0), (&abs, 0.4, 0.4 / 2.0)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (method, spec, tol) in [
        ("monte_carlo N=1e6", QuadratureSpec::monte_carlo(1_000_000, 6), C6_MC_REL),
        ("tensor_grid m=2048", QuadratureSpec::tensor_grid(2048), C6_GRID_REL),
    ] {
        let mut worst = 0.0f64;
        for (f, r, exact) in cases {
            let a = steklov_average(f, &x, &Image::centered(Shape::Ball, 1, r), &spec).unwrap();
            worst = worst.max((a.value - exact).abs() / exact);
        }
        pass &= worst <= tol;
        parts.push(format!("{method} rel err {worst:.1e}"));
    }
    outcome(pass, parts.join("; "))
}

fn c7() -> Outcome_ {
    let (abs, _) = corpus_lookup("abs1d").unwrap();
    let x0 = v(&[0.0]);
    let dirs = gnva_directions(1);
    let g = build_gnva(&abs, &x0, &dirs, None, 7).unwrap();
    let verts: Vec<f64> = g.set.as_ref().map(|s| s.vertices().iter().map(|p| p[0]).collect()).unwrap_or_default();
    let lo = verts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = verts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let err = (lo + 2.0).abs().max((hi - 2.0).abs());
    let neg = build_gnva(&abs.negated(), &x0, &dirs, None, 7).unwrap();
    outcome(
        verts.len() == 2 && err <= C7_VERTEX && g.min_test && !neg.min_test,
        format!(
            "|x|: B=[{lo:.4}, {hi:.4}] min_test={} margin {:.4}; -|x|: min_test={}",
            g.min_test, g.margin, neg.min_test
        ),
    )
}

fn c8() -> Outcome_ {
    let unit = Constraint::Box {
        lower: v(&[0.0]),
        upper: v(&[1.0]),
    };
    let cfg = ReportConfig::default();
    struct Case {
        name: &'static str,
        f: LipschitzFunction,
        x0: DVector<f64>,
        omega: Constraint,
        verdict: Verdict,
        necessary: bool,
        /// (label, oracle value, extractor)
        margin: (&'static str, f64, Extract),
    }
    let l_neg = 2.0;
    let cases = vec![
        Case {
            name: "|x1|+x2^2",
            // gradient (±1, 2x₂) on the unit disc
            f: expr("abs(x1) + x2*x2", 2, 5f64.sqrt()),
            x0: v(&[0.0, 0.0]),
            omega: Constraint::None,
            verdict: Verdict::SecondOrderSufficient,
            necessary: true,
            margin: ("beta along e2", 2.0, |r| r.sufficient.as_ref().map(|s| s.beta_observed)),
        },
        Case {
            name: "x1",
            f: expr("x1", 2, 1.0),
            x0: v(&[0.0, 0.0]),
            omega: Constraint::None,
            verdict: Verdict::NecessaryFailed,
            necessary: false,
            margin: ("dist(0, Df)", 1.0, |r| Some(r.necessary_unconstrained.distance)),
        },
        Case {
            name: "-|x|^2",
            f: expr("-(x1*x1 + x2*x2)", 2, l_neg),
            x0: v(&[0.0, 0.0]),
            omega: Constraint::None,
            verdict: Verdict::Inconclusive,
            necessary: true,
            // (Ag, g) = −2 against the floor 10⁻³·L
            margin: ("second-order margin", -2.0 - 1e-3 * l_neg, |r| r.sufficient.as_ref().map(|s| s.margin)),
        },
        Case {
            name: "abs1d",
            f: corpus_lookup("abs1d").unwrap().0,
            x0: v(&[0.0]),
            omega: Constraint::None,
            verdict: Verdict::FirstOrderSufficient,
            necessary: true,
            margin: ("gnva margin", 1.0, |r| r.gnva.as_ref().map(|g| g.margin)),
        },
        Case {
            name: "x on [0,1] at 0",
            f: expr("x1", 1, 1.0),
            x0: v(&[0.0]),
            omega: unit.clone(),
            verdict: Verdict::FirstOrderSufficient,
            necessary: true,
            // f̃ = 2x on K = ℝ₊: support 2 against L = 1
            margin: ("gnva margin", 1.0, |r| r.gnva.as_ref().map(|g| g.margin)),
        },
        Case {
            name: "x on [0,1] at 1",
            f: expr("x1", 1, 1.0),
            x0: v(&[1.0]),
            omega: unit,
            verdict: Verdict::NecessaryFailed,
            necessary: false,
            // Df = {1}, K⁺ = ℝ₋
            margin: ("dist(Df, K+)", 1.0, |r| r.necessary_constrained.as_ref().map(|t| t.distance)),
        },
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for c in cases {
        let r = full_report(&c.f, &c.x0, &c.omega, &cfg).unwrap();
        let (label, oracle, get) = c.margin;
        let got = get(&r);
        let ok = r.verdict == c.verdict
            && r.necessary().pass() == c.necessary
            && got.is_some_and(|m| (m - oracle).abs() <= C8_MARGIN);
        pass &= ok;
        parts.push(format!(
            "{}: {} {label} {}{}",
            c.name,
            r.verdict.name(),
            got.map_or("n/a".into(), |m| format!("{m:.4}")),
            if ok { "" } else { " (mismatch)" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c9() -> Outcome_ {
    let c = |n: &str| corpus_lookup(n).unwrap().0;
    let pairs = vec![
        (c("abs1d"), expr("x1", 1, 1.0), v(&[0.0])),
        (c("abs1d"), c("abs1d").negated(), v(&[0.0])),
        (c("abs1d"), c("abs1d"), v(&[0.0])),
        (expr("x1", 1, 1.0), expr("x1", 1, 1.0), v(&[1.0])),
        (c("abs1d"), LipschitzFunction::constant(1, 2.0), v(&[0.0])),
        (c("quad_posdef"), c("quad_indef"), v(&[0.5, -0.5])),
        (c("quad_posdef"), expr("x1 + 2*x2", 2, 5f64.sqrt()), v(&[1.0, 1.0])),
        (c("maxlin2d"), c("l1norm2d"), v(&[0.0, 0.0])),
        (c("smooth_quartic"), c("quad_posdef"), v(&[0.3, -0.2])),
        (expr("x1", 2, 1.0), expr("x2", 2, 1.0), v(&[0.0, 0.0])),
    ];
    let spec = QuadratureSpec::monte_carlo(C9_SAMPLES, 3);
    let t = Instant::now();
    let (mut passed, mut na, mut failed) = (0, 0, Vec::new());
    let mut worst_ratio = 0.0f64;
    let mut abs_product2 = None;
    for (k, (f1, f2, x0)) in pairs.iter().enumerate() {
        let battery = standard_battery(x0, DEFAULT_EPS0).unwrap();
        let probes = default_probes(x0.len());
        for rule in Rule::ALL {
            let r = check_rule(rule, f1, f2, -1.5, x0, &battery, &probes, &spec).unwrap();
            if k == 2 && rule == Rule::Product2 {
                abs_product2 = Some(r.outcome);
            }
            match r.outcome {
                Outcome::NotApplicable => na += 1,
                Outcome::Pass if r.equality_gap <= EQUALITY_FACTOR * r.tolerance => {
                    passed += 1;
                    worst_ratio = worst_ratio.max(r.equality_gap / r.tolerance);
                }
                _ => failed.push(format!("pair {k} {}", rule.name())),
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let na_ok = abs_product2 == Some(Outcome::NotApplicable);
    outcome(
        failed.is_empty() && na_ok && secs <= C9_SECONDS,
        format!(
            "{passed} pass, {na} not applicable, {} fail{}; max gap/tol {worst_ratio:.2}; product2(abs1d,abs1d) {}; {secs:.0}s",
            failed.len(),
            if failed.is_empty() { String::new() } else { format!(" [{}]", failed.join(", ")) },
            abs_product2.map_or("missing", |o| o.name())
        ),
    )
}

fn c10() -> Outcome_ {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("subdiff", "[function]\ncorpus = \"maxlin2d\"\n[quadrature]\nsamples = 5000\n"),
        ("subdiff", "[function]\ncorpus = \"quad_indef\"\n[subdiff]\norder = 2\n[quadrature]\nsamples = 2000\n"),
        ("check", "[function]\ncorpus = \"abs1d\"\n[quadrature]\nsamples = 5000\n"),
        (
            "calculus",
            "[function]\ncorpus = \"quad_posdef\"\n[calculus]\nrule = \"product2\"\nsecond = { corpus = \"quad_indef\" }\n\
             [quadrature]\nsamples = 2000\n",
        ),
    ];
    let run = |cmd: &str, cfg: &Path, out: &Path, threads: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_steklov"))
            .args([cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .args(["--seed", "42", "--threads", threads])
            .env_remove("SEED")
            .status()
            .unwrap();
        assert!(status.success(), "{cmd} failed");
    };
    let mut compared = 0;
    let mut differing = Vec::new();
    for (k, (cmd, text)) in configs.iter().enumerate() {
        let cfg = dir.path().join(format!("run{k}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let outs: Vec<_> = ["8", "1", "1"]
            .iter()
            .enumerate()
            .map(|(j, threads)| {
                let out = dir.path().join(format!("out{k}_{j}"));
                run(cmd, &cfg, &out, threads);
                out
            })
            .collect();
        for file in ["report.json", "traces.csv"] {
            let a = outs[0].join(file);
            if !a.exists() {
                continue;
            }
            let a = std::fs::read(a).unwrap();
            for other in &outs[1..] {
                compared += 1;
                if std::fs::read(other.join(file)).unwrap() != a {
                    differing.push(format!("{cmd}#{k} {file}"));
                }
            }
        }
    }
    outcome(
        differing.is_empty(),
        format!("{compared} file pairs compared (--threads 8 vs 1, repeat), {} differ {differing:?}", differing.len()),
    )
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, Criterion); 10] = [
        ("differentiable recovery", c1),
        ("convex/nonsmooth recovery", c2),
        ("equivalence on corpus", c3),
        ("Lipschitz bound on smoothed gradients", c4),
        ("second-order recovery", c5),
        ("Steklov closed forms", c6),
        ("GNVA hand oracle", c7),
        ("optimality pipeline", c8),
        ("calculus suite", c9),
        ("determinism", c10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.ends_with(&format!(" {f}")) || name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{id:>12} {} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
