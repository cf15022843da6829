use softcrowd_core::evalstat::{t_cdf, two_sample_t, two_sample_t_from_samples, SampleSummary, TTestVariant};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

/// Student-t CDF on a 0.1 grid over [-10, 10] by composite Simpson quadrature
/// of the density, accumulated panel by panel from zero.
fn quadrature_cdf_grid(df: f64) -> Vec<(f64, f64)> {
    let log_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |x: f64| (log_norm - (df + 1.0) / 2.0 * (x * x / df).ln_1p()).exp();
    let sub = 200;
    let h = 0.1 / sub as f64;
    let mut areas = vec![0.0];
    let mut acc = 0.0;
    for panel in 0..100 {
        let a = panel as f64 * 0.1;
        let mut s = density(a) + density(a + 0.1);
        for i in 1..sub {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * density(a + i as f64 * h);
        }
        acc += s * h / 3.0;
        areas.push(acc);
    }
    (-100i32..=100)
        .map(|k| {
            let t = k as f64 / 10.0;
            let area = areas[k.unsigned_abs() as usize];
            (t, if k >= 0 { 0.5 + area } else { 0.5 - area })
        })
        .collect()
}

#[test]
fn t_cdf_matches_quadrature() {
    for df in [1.0, 2.0, 3.0, 7.5, 30.0, 250.0] {
        for (t, expected) in quadrature_cdf_grid(df) {
            let got = t_cdf(t, df).unwrap();
            assert!((got - expected).abs() <= 1e-8, "df {df} t {t}: {got} vs {expected}");
        }
    }
}

#[test]
fn t_cdf_agrees_with_statrs() {
    for df in [1.0, 4.0, 12.0, 99.0] {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        for k in -40..=40 {
            let t = k as f64 * 0.25;
            assert!((t_cdf(t, df).unwrap() - dist.cdf(t)).abs() < 1e-9, "df {df} t {t}");
        }
    }
}

#[test]
fn published_summary_statistics() {
    let a = SampleSummary::new(0.6078f64, 0.4143, 51);
    let b = SampleSummary::new(0.3727, 0.3000, 51);
    let r = two_sample_t(&a, &b, TTestVariant::Pooled).unwrap();
    assert!((r.t.abs() - 3.2827).abs() <= 0.002);
    assert_eq!(r.df, 100.0);
    assert!((r.p_two_tailed - 0.0014).abs() <= 0.0002);
    // statrs reference for the same statistic
    let p = 2.0 * StudentsT::new(0.0, 1.0, 100.0).unwrap().cdf(-r.t.abs());
    assert!((p - r.p_two_tailed).abs() < 1e-10);
}

#[test]
fn self_comparison_is_null() {
    let xs = [0.2f64, 0.5, 0.1, 0.9, 0.4];
    let r = two_sample_t_from_samples(&xs, &xs, TTestVariant::Pooled).unwrap();
    assert_eq!(r.t, 0.0);
    assert!((r.p_two_tailed - 1.0).abs() < 1e-15);
}
