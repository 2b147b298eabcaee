//! Property tests over randomly generated problems.

use proptest::prelude::*;

use unipot::linalg::{norm, sub, DenseMatrix};
use unipot::objective::{check_descent_lemma, validate_sandwich, Function, LogisticRidgeObjective};
use unipot::perturb::{detect_from, DetectionOptions, NoiseModel};
use unipot::potential::{certify, CertifyOptions};
use unipot::quadratic_gen::{extreme_eigenvalues, generate, random_orthogonal, GeneratedProblem};
use unipot::rng::SplitMix64;
use unipot::solvers::{check_param_signs, run, Family, Method};
use unipot::{Layout, ObjectiveModel, QuadraticObjective, SpectrumSpec};

fn layout() -> impl Strategy<Value = Layout> {
    prop_oneof![Just(Layout::LogUniform), Just(Layout::TwoCluster)]
}

fn problem(dim: usize, kappa: f64, layout: Layout, seed: u64) -> (GeneratedProblem, ObjectiveModel) {
    let p = generate(&SpectrumSpec {
        dim,
        ell: 1.0,
        lip: kappa,
        layout,
        seed,
    })
    .unwrap();
    let model = ObjectiveModel::quadratic(p.objective.clone(), 1.0, kappa)
        .unwrap()
        .with_minimizer(p.truth.x_star.clone())
        .unwrap();
    (p, model)
}

fn finite_difference(model: &ObjectiveModel, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (model.eval(&xp).unwrap() - model.eval(&xm).unwrap()) / (2.0 * h)
        })
        .collect()
}

fn conjugated(p: &GeneratedProblem, q: &DenseMatrix) -> (QuadraticObjective, Vec<f64>, Vec<f64>) {
    let qt = q.transpose();
    let a = qt.matmul(p.objective.matrix()).matmul(q);
    let b = qt.matvec(p.objective.rhs());
    let obj = QuadraticObjective::new(a, b).unwrap();
    (obj, qt.matvec(&p.x0), qt.matvec(&p.truth.x_star))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sandwich_holds_for_random_pairs(
        dim in 2usize..24,
        log_kappa in 0.0f64..6.0,
        layout in layout(),
        seed in 0u64..1000,
    ) {
        let (_, model) = problem(dim, 10f64.powf(log_kappa), layout, seed);
        let mut rng = SplitMix64::new(seed ^ 0xabc);
        for _ in 0..100 {
            let x = rng.gaussian_vec(dim);
            let y = rng.gaussian_vec(dim);
            let rec = validate_sandwich(&model, &x, &y).unwrap();
            prop_assert!(rec.pass, "{rec:?}");
        }
    }

    #[test]
    fn generator_declares_tight_bounds_and_true_optimum(
        dim in 1usize..40,
        log_kappa in 0.0f64..8.0,
        layout in layout(),
        seed in 0u64..1000,
    ) {
        let kappa = if dim == 1 { 1.0 } else { 10f64.powf(log_kappa) };
        let (p, model) = problem(dim, kappa, layout, seed);
        let (lo, hi) = extreme_eigenvalues(&p.objective).unwrap();
        prop_assert!((lo - 1.0).abs() <= 1e-6, "{lo}");
        prop_assert!((hi - kappa).abs() <= 1e-6 * kappa, "{hi}");
        let f_star = model.eval(&p.truth.x_star).unwrap();
        let scale = model.eval(&p.x0).unwrap().abs().max(1.0);
        prop_assert!((f_star - p.truth.f_star).abs() <= 1e-10 * scale);
    }

    #[test]
    fn gradients_match_finite_differences(seed in 0u64..1000, dim in 2usize..12) {
        let (_, quad) = problem(dim, 50.0, Layout::LogUniform, seed);
        let logistic = LogisticRidgeObjective::generate(3 * dim, dim, 0.1, seed).unwrap();
        let lip = logistic.lipschitz_bound();
        let logistic = ObjectiveModel::new(Function::LogisticRidge(logistic), 0.1, lip).unwrap();
        let mut rng = SplitMix64::new(seed + 17);
        for model in [&quad, &logistic] {
            for _ in 0..20 {
                let x = rng.gaussian_vec(dim);
                let g = model.grad(&x).unwrap();
                let fd = finite_difference(model, &x);
                prop_assert!(norm(&sub(&g, &fd)) <= 1e-5 * norm(&g).max(1e-8));
                prop_assert_eq!(model.eval(&x).unwrap().to_bits(), model.eval(&x).unwrap().to_bits());
                prop_assert_eq!(model.grad(&x).unwrap(), g);
            }
        }
    }

    #[test]
    fn descent_lemma_at_every_iterate(
        dim in 2usize..30,
        log_kappa in 0.5f64..4.0,
        layout in layout(),
        seed in 0u64..1000,
    ) {
        let (p, model) = problem(dim, 10f64.powf(log_kappa), layout, seed);
        for method in Method::ALL {
            let trace = run(&model, method, &p.x0, 60, -1.0).unwrap();
            for s in &trace.states[1..] {
                let y = s.y.as_deref().unwrap();
                let rec = check_descent_lemma(&model, y).unwrap();
                prop_assert!(rec.pass, "{method} k={}: {rec:?}", s.k);
                if let (Method::CgUnified | Method::AgUnified, Some(params)) = (method, &s.step_params) {
                    prop_assert!(check_param_signs(s.k - 1, params).is_ok());
                }
            }
        }
    }

    #[test]
    fn cg_is_monotone_in_gap_and_distance(
        dim in 2usize..40,
        log_kappa in 0.5f64..4.0,
        layout in layout(),
        seed in 0u64..1000,
    ) {
        let (p, model) = problem(dim, 10f64.powf(log_kappa), layout, seed);
        let trace = run(&model, Method::CgClassic, &p.x0, dim, -1.0).unwrap();
        for pair in trace.states.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let (ga, gb) = (model.gap(&a.x).unwrap(), model.gap(&b.x).unwrap());
            prop_assert!(gb <= ga * (1.0 + 1e-12) + 1e-14 * p.truth.f_star.abs().max(1.0));
            let (da, db) = (model.dist_to_opt(&a.x).unwrap(), model.dist_to_opt(&b.x).unwrap());
            prop_assert!(db <= da * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn certificate_implies_envelope_and_bounds_gap(
        dim in 2usize..30,
        log_kappa in 0.5f64..5.0,
        layout in layout(),
        seed in 0u64..1000,
        accelerated in any::<bool>(),
    ) {
        let (p, model) = problem(dim, 10f64.powf(log_kappa), layout, seed);
        let (method, family) = if accelerated { (Method::Ag, Family::Ag) } else { (Method::CgClassic, Family::Cg) };
        let trace = run(&model, method, &p.x0, 150, 1e-10 * model.gap(&p.x0).unwrap()).unwrap();
        let report = certify(&trace.states, &model, family, CertifyOptions::default()).unwrap();
        for point in &report.points {
            prop_assert!(0.5 * model.ell() * point.psi >= point.f_gap, "{point:?}");
        }
        if report.passed() {
            prop_assert_eq!(report.theorem1_violations(), 0);
        }
        if let Some(step) = report.steps.first() {
            prop_assert!(step.psi_next <= step.psi * (1.0 + report.tol_cert));
        }
    }

    #[test]
    fn potential_is_invariant_under_rotation(
        dim in 6usize..14,
        log_kappa in 0.5f64..2.0,
        layout in layout(),
        seed in 0u64..1000,
    ) {
        let (p, model) = problem(dim, 10f64.powf(log_kappa), layout, seed);
        let q = random_orthogonal(dim, &mut SplitMix64::new(seed + 99));
        let (obj, x0, x_star) = conjugated(&p, &q);
        let rotated = ObjectiveModel::quadratic(obj, model.ell(), model.lip())
            .unwrap()
            .with_minimizer(x_star)
            .unwrap();
        for (method, family, iters) in [(Method::CgClassic, Family::Cg, 5), (Method::Ag, Family::Ag, 30)] {
            let psi = |m: &ObjectiveModel, x0: &[f64]| {
                let trace = run(m, method, x0, iters, -1.0).unwrap();
                let report = certify(&trace.states, m, family, CertifyOptions::default()).unwrap();
                report.points.iter().map(|pt| pt.psi).collect::<Vec<_>>()
            };
            let (a, b) = (psi(&model, &p.x0), psi(&rotated, &x0));
            // below this the rotated problem's own roundoff in x* dominates
            let floor = 1e-8 * a[0];
            for (u, v) in a.iter().zip(&b).take_while(|(u, _)| **u >= floor) {
                prop_assert!((u - v).abs() <= 1e-9 * u.abs(), "{method}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn exact_matvec_never_trips_the_detector(
        dim in 2usize..30,
        log_kappa in 0.5f64..4.0,
        seed in 0u64..1000,
    ) {
        let (p, _) = problem(dim, 10f64.powf(log_kappa), Layout::LogUniform, seed);
        let noise = NoiseModel::relative_sphere(0.0, seed).unwrap();
        let report = detect_from(&p.objective, &p.truth, &p.x0, &noise, 3 * dim, DetectionOptions::default()).unwrap();
        prop_assert_eq!(report.first_violation, None);
    }
}
