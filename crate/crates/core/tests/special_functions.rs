use fracgcl::special::{
    digamma, dml_dalpha, gamma, ml, ml_asymptotic, ml_contour, ml_series, MlEvalConfig,
};
use proptest::prelude::*;

/// High-precision values of e_alpha(lambda, t) (mpmath: 60+ digit series where
/// feasible, 40-digit Talbot inversion otherwise).
const ML_TABLE: &[(f64, f64, f64, f64)] = &[
    (0.1, 0.1, 0.1, 0.92286024773657177),
    (0.1, 0.1, 1.0, 0.90476574225743151),
    (0.1, 0.1, 5.0, 0.88994458122916522),
    (0.1, 0.1, 20.0, 0.87559206622431122),
    (0.1, 0.1, 50.0, 0.86524476625742991),
    (0.1, 0.5, 0.1, 0.70456758826137396),
    (0.1, 0.5, 1.0, 0.65432446028800193),
    (0.1, 0.5, 5.0, 0.61693738700906473),
    (0.1, 0.5, 20.0, 0.58356067943732951),
    (0.1, 0.5, 50.0, 0.56104812199988265),
    (0.1, 1.0, 0.1, 0.54325235665460265),
    (0.1, 1.0, 1.0, 0.4855644643110821),
    (0.1, 1.0, 5.0, 0.4453768429066718),
    (0.1, 1.0, 20.0, 0.41130612672348254),
    (0.1, 1.0, 50.0, 0.38922507190459811),
    (0.1, 1.5, 0.1, 0.44184195550982847),
    (0.1, 1.5, 1.0, 0.38582613336378369),
    (0.1, 1.5, 5.0, 0.34831017731045128),
    (0.1, 1.5, 20.0, 0.3174235868095729),
    (0.1, 1.5, 50.0, 0.29783961123197475),
    (0.1, 2.0, 0.1, 0.37225719337783374),
    (0.1, 2.0, 1.0, 0.3200153359597274),
    (0.1, 2.0, 5.0, 0.28592912877896697),
    (0.1, 2.0, 20.0, 0.25839039311562773),
    (0.1, 2.0, 50.0, 0.24116829349611015),
    (0.25, 0.1, 0.1, 0.94134326809357725),
    (0.25, 0.1, 1.0, 0.89996132989886404),
    (0.25, 0.1, 5.0, 0.85705840599031998),
    (0.25, 0.1, 20.0, 0.80854465909562164),
    (0.25, 0.1, 50.0, 0.77000003411713465),
    (0.25, 0.5, 0.1, 0.75981534255754234),
    (0.25, 0.5, 1.0, 0.63767051920039336),
    (0.25, 0.5, 5.0, 0.5382924867381973),
    (0.25, 0.5, 20.0, 0.44964340288574734),
    (0.25, 0.5, 50.0, 0.39237733113372726),
    (0.25, 1.0, 0.1, 0.6094871084164819),
    (0.25, 1.0, 1.0, 0.46385276080171329),
    (0.25, 1.0, 5.0, 0.36401572379893583),
    (0.25, 1.0, 20.0, 0.28627519245770295),
    (0.25, 1.0, 50.0, 0.24082851719782147),
    (0.25, 1.5, 0.1, 0.50744844702528608),
    (0.25, 1.5, 1.0, 0.36327790329995259),
    (0.25, 1.5, 5.0, 0.27410480960338679),
    (0.25, 1.5, 20.0, 0.20941112780286346),
    (0.25, 1.5, 50.0, 0.17332959346698667),
    (0.25, 2.0, 0.1, 0.43401781010713527),
    (0.25, 2.0, 1.0, 0.2981017936936576),
    (0.25, 2.0, 5.0, 0.2195478268304112),
    (0.25, 2.0, 20.0, 0.16493959812164694),
    (0.25, 2.0, 50.0, 0.13529113339023435),
    (0.5, 0.1, 0.1, 0.96529422000405632),
    (0.5, 0.1, 1.0, 0.89645697996912664),
    (0.5, 0.1, 5.0, 0.7903767636713649),
    (0.5, 0.1, 20.0, 0.64378827213216244),
    (0.5, 0.1, 50.0, 0.52315658373024673),
    (0.5, 0.5, 0.1, 0.84389921973253929),
    (0.5, 0.5, 1.0, 0.61569034419292587),
    (0.5, 0.5, 5.0, 0.397362624480641),
    (0.5, 0.5, 20.0, 0.23232629437646507),
    (0.5, 0.5, 50.0, 0.15383860995001259),
    (0.5, 1.0, 0.1, 0.72357843847761549),
    (0.5, 1.0, 1.0, 0.427583576155807),
    (0.5, 1.0, 5.0, 0.23232629437646507),
    (0.5, 1.0, 20.0, 0.12321394008789223),
    (0.5, 1.0, 50.0, 0.079013388202772006),
    (0.5, 1.5, 0.1, 0.62908547448286016),
    (0.5, 1.5, 1.0, 0.3215854164543175),
    (0.5, 1.5, 5.0, 0.16155822768884538),
    (0.5, 1.5, 20.0, 0.083199465693571366),
    (0.5, 1.5, 50.0, 0.052958977998459777),
    (0.5, 2.0, 0.1, 0.5536062537848785),
    (0.5, 2.0, 1.0, 0.25539567631050574),
    (0.5, 2.0, 5.0, 0.12321394008789223),
    (0.5, 2.0, 20.0, 0.0626912441580043),
    (0.5, 2.0, 50.0, 0.039795231296654063),
    (0.75, 0.1, 0.1, 0.98088685352623938),
    (0.75, 0.1, 1.0, 0.89833981373612591),
    (0.75, 0.1, 5.0, 0.70747903019119304),
    (0.75, 0.1, 20.0, 0.41043799766485752),
    (0.75, 0.1, 50.0, 0.21630158696474336),
    (0.75, 0.5, 0.1, 0.90893723162589877),
    (0.75, 0.5, 1.0, 0.60379034509524676),
    (0.75, 0.5, 5.0, 0.24519470374735621),
    (0.75, 0.5, 20.0, 0.072604758459366057),
    (0.75, 0.5, 50.0, 0.032815977312968539),
    (0.75, 1.0, 0.1, 0.82825053550963635),
    (0.75, 1.0, 1.0, 0.39310830281575406),
    (0.75, 1.0, 5.0, 0.11038414683820563),
    (0.75, 1.0, 20.0, 0.032600130223544087),
    (0.75, 1.0, 50.0, 0.015504421689669992),
    (0.75, 1.5, 0.1, 0.75661492556783484),
    (0.75, 1.5, 1.0, 0.27382227983917813),
    (0.75, 1.5, 5.0, 0.067673115502385162),
    (0.75, 1.5, 20.0, 0.020931453706580862),
    (0.75, 1.5, 50.0, 0.010145046460506669),
    (0.75, 2.0, 0.1, 0.69288793673823316),
    (0.75, 2.0, 1.0, 0.20207848341295445),
    (0.75, 2.0, 5.0, 0.048282619134334723),
    (0.75, 2.0, 20.0, 0.015407640119721736),
    (0.75, 2.0, 50.0, 0.0075385981174712883),
    (0.9, 0.1, 0.1, 0.98700433079788023),
    (0.9, 0.1, 1.0, 0.9017569424498594),
    (0.9, 0.1, 5.0, 0.64920383641191126),
    (0.9, 0.1, 20.0, 0.24671906265258594),
    (0.9, 0.1, 50.0, 0.06789597905450928),
    (0.9, 0.5, 0.1, 0.93685611758161445),
    (0.9, 0.5, 1.0, 0.60340549869586097),
    (0.9, 0.5, 5.0, 0.14869834916346131),
    (0.9, 0.5, 20.0, 0.018971993403651152),
    (0.9, 0.5, 50.0, 0.0069267207642978139),
    (0.9, 1.0, 0.1, 0.87809612302558493),
    (0.9, 1.0, 1.0, 0.37606602142464188),
    (0.9, 1.0, 5.0, 0.045223116690405373),
    (0.9, 1.0, 20.0, 0.0080368512261339389),
    (0.9, 1.0, 50.0, 0.0032724222905694661),
    (0.9, 1.5, 0.1, 0.8234007506226609),
    (0.9, 1.5, 1.0, 0.24309267847921726),
    (0.9, 1.5, 5.0, 0.023483644909882036),
    (0.9, 1.5, 20.0, 0.0051217162706050737),
    (0.9, 1.5, 50.0, 0.0021434771379023143),
    (0.9, 2.0, 0.1, 0.77247473934405782),
    (0.9, 2.0, 1.0, 0.16352830001693004),
    (0.9, 2.0, 5.0, 0.015741769775936027),
    (0.9, 2.0, 20.0, 0.0037608941563623025),
    (0.9, 2.0, 50.0, 0.001593825574682254),
];

/// d/dalpha e_alpha(lambda, t), 40-digit central differences of the same oracle.
const DML_TABLE: &[(f64, f64, f64, f64)] = &[
    (0.5, 1.0, 1.0, -0.144_070_581_342_992_48),
    (0.3, 2.0, 20.0, -0.486_918_585_084_599_95),
    (0.9, 1.5, 5.0, -0.257_608_445_869_426_66),
    (0.1, 0.5, 20.0, -0.863_657_913_591_388_92),
    (1.0, 2.0, 3.0, -0.271_053_772_170_849_29),
    (0.75, 0.2, 50.0, -0.687_233_715_799_863_34),
];

#[test]
fn ml_matches_high_precision_table() {
    let cfg = MlEvalConfig::default();
    let mut worst: f64 = 0.0;
    for &(alpha, lambda, t, want) in ML_TABLE {
        let got = ml(alpha, lambda, t, &cfg).unwrap();
        let err = (got - want).abs();
        assert!(err < 1e-9, "e_{alpha}({lambda}, {t}) = {got}, want {want}");
        worst = worst.max(err);
    }
    assert!(worst < 1e-11, "worst abs error {worst:e}");
}

#[test]
fn half_order_matches_erfc_identity() {
    // e_{1/2}(lambda, t) = exp(lambda^2 t) erfc(lambda sqrt t)
    let cfg = MlEvalConfig::default();
    for lambda in [0.1, 0.5, 1.0, 1.5, 2.0] {
        for t in [0.01f64, 0.3, 1.0, 2.0, 4.0] {
            let want = (lambda * lambda * t).exp() * libm::erfc(lambda * t.sqrt());
            let got = ml(0.5, lambda, t, &cfg).unwrap();
            assert!((got - want).abs() < 1e-12, "lambda={lambda} t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn order_one_is_exponential_on_both_paths() {
    let cfg = MlEvalConfig::default();
    for lambda in [0.1, 1.0, 2.0] {
        for k in 0..=500 {
            let t = k as f64 * 0.1;
            let want = (-lambda * t).exp();
            assert!((ml(1.0, lambda, t, &cfg).unwrap() - want).abs() < 1e-10);
            if t > 0.0 {
                assert!((ml_contour(1.0, lambda, t) - want).abs() < 1e-10, "contour {lambda} {t}");
            }
            if let Some(s) = ml_series(1.0, lambda, t, &cfg) {
                assert!((s - want).abs() < 1e-10, "series {lambda} {t}");
            }
        }
    }
}

#[test]
fn ml_strictly_decreasing_and_positive_on_grid() {
    let cfg = MlEvalConfig::default();
    for alpha in [0.05, 0.2, 0.5, 0.8, 1.0] {
        for lambda in [0.1, 0.7, 2.0] {
            let mut prev = 1.0;
            for k in 1..=200 {
                let t = k as f64 * 0.5;
                let v = ml(alpha, lambda, t, &cfg).unwrap();
                assert!(v > 0.0 && v <= 1.0);
                assert!(v < prev, "alpha={alpha} lambda={lambda} t={t}: {v} !< {prev}");
                prev = v;
            }
        }
    }
}

#[test]
fn dml_matches_high_precision_values() {
    let cfg = MlEvalConfig::default();
    for &(alpha, lambda, t, want) in DML_TABLE {
        let got = dml_dalpha(alpha, lambda, t, &cfg).unwrap();
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "({alpha},{lambda},{t}): {got} vs {want}");
    }
}

#[test]
fn dml_matches_finite_differences_on_grid() {
    let cfg = MlEvalConfig::default();
    let h = 1e-5;
    for alpha in [0.2, 0.35, 0.5, 0.65, 0.8] {
        for lambda in [0.1, 0.5, 1.0, 1.5, 2.0] {
            for t in [0.5, 1.0, 2.0, 5.0, 20.0] {
                let fd = (ml(alpha + h, lambda, t, &cfg).unwrap() - ml(alpha - h, lambda, t, &cfg).unwrap())
                    / (2.0 * h);
                let an = dml_dalpha(alpha, lambda, t, &cfg).unwrap();
                let rel = (an - fd).abs() / fd.abs().max(1e-12);
                assert!(rel < 1e-4, "({alpha},{lambda},{t}): analytic {an} fd {fd}");
            }
        }
    }
}

#[test]
fn dml_at_unit_time_reduces_to_digamma_series() {
    // ln t = 0 leaves -sum (-1)^n lambda^n n psi(alpha n + 1) / Gamma(alpha n + 1)
    let (alpha, lambda): (f64, f64) = (0.5, 1.0);
    let mut acc = 0.0;
    for n in 1..80 {
        let nf = n as f64;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        acc -= sign * lambda.powi(n) * nf * digamma(alpha * nf + 1.0).unwrap() / gamma(alpha * nf + 1.0).unwrap();
    }
    let got = dml_dalpha(alpha, lambda, 1.0, &MlEvalConfig::default()).unwrap();
    assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
}

#[test]
fn gamma_matches_libm_on_range() {
    let mut x: f64 = -9.95;
    while x <= 30.0 {
        if (x - x.round()).abs() > 1e-3 || x > 0.0 {
            let want = libm::tgamma(x);
            let got = gamma(x).unwrap();
            assert!(((got - want) / want).abs() < 1e-12, "gamma({x}) = {got}, libm {want}");
        }
        x += 0.0137;
    }
}

#[test]
fn digamma_matches_log_gamma_derivative() {
    for x in [0.05f64, 0.3, 0.5, 1.0, 2.5, 7.0, 19.0, 55.0] {
        let h = 1e-4 * x.min(1.0);
        let fd = (libm::lgamma(x + h) - libm::lgamma(x - h)) / (2.0 * h);
        let psi = digamma(x).unwrap();
        assert!((psi - fd).abs() < 1e-7 * psi.abs().max(1.0), "x = {x}: {psi} vs {fd}");
    }
}

#[test]
fn asymptotic_tail_tracks_ml() {
    let cfg = MlEvalConfig::default();
    let exact = ml(0.5, 1.0, 1e4, &cfg).unwrap();
    let approx = ml_asymptotic(0.5, 1.0, 1e4, 1).unwrap();
    assert!(((approx - exact) / exact).abs() < 1e-2);
    for tau in [1e3, 1e4, 1e5] {
        for (alpha, n) in [(0.5, 1), (0.3, 3), (0.45, 2)] {
            let exact = ml(alpha, 1.0, tau, &cfg).unwrap();
            let approx = ml_asymptotic(alpha, 1.0, tau, n).unwrap();
            let rel = ((approx - exact) / exact).abs();
            assert!(rel < 10.0 / tau, "alpha={alpha} tau={tau}: rel {rel:e}");
        }
    }
}

proptest! {
    #[test]
    fn ml_is_monotone_in_t(alpha in 0.05f64..=1.0, lambda in 0.01f64..2.0, t1 in 0.0f64..100.0, dt in 0.01f64..10.0) {
        let cfg = MlEvalConfig::default();
        let a = ml(alpha, lambda, t1, &cfg).unwrap();
        let b = ml(alpha, lambda, t1 + dt, &cfg).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0 && b > 0.0);
        prop_assert!(b <= a);
    }

    #[test]
    fn ml_is_monotone_in_lambda(alpha in 0.05f64..=1.0, l1 in 0.0f64..2.0, dl in 0.001f64..1.0, t in 0.0f64..50.0) {
        let cfg = MlEvalConfig::default();
        prop_assert!(ml(alpha, l1 + dl, t, &cfg).unwrap() <= ml(alpha, l1, t, &cfg).unwrap());
    }
}
