use lrpi_core::within_sample::{
    within_sample_interval, CensoredSample, Variant, WithinSampleContext, WithinSampleQuery,
};
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    failure_times: Vec<f64>,
    n: usize,
    t_c: f64,
    t_w: f64,
    neg2_log_lr: Vec<f64>,
    argmin: usize,
    chisq_1_095: f64,
}

fn golden() -> Golden {
    serde_json::from_str(include_str!("golden/within_sample.json")).unwrap()
}

#[test]
fn statistic_matches_grid_oracle() {
    let g = golden();
    let s = CensoredSample::new(g.failure_times.clone(), g.n, g.t_c).unwrap();
    let curve = WithinSampleContext::new(&s, g.t_w, Variant::SurvivalAdjusted)
        .unwrap()
        .curve()
        .unwrap();
    assert_eq!(curve.len(), g.neg2_log_lr.len());
    for (y, (a, b)) in curve.iter().zip(&g.neg2_log_lr).enumerate() {
        assert!((a - b).abs() < 1e-4, "y = {y}: {a} vs oracle {b}");
    }
    let arg = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(arg, g.argmin);
}

#[test]
fn interval_matches_oracle_set() {
    let g = golden();
    let s = CensoredSample::new(g.failure_times.clone(), g.n, g.t_c).unwrap();
    let q = WithinSampleQuery {
        t_w: g.t_w,
        level: 0.95,
        variant: Variant::SurvivalAdjusted,
    };
    let p = within_sample_interval(&s, &q).unwrap();
    let pass: Vec<usize> = (0..g.neg2_log_lr.len())
        .filter(|&y| g.neg2_log_lr[y] <= g.chisq_1_095)
        .collect();
    assert_eq!(
        (p.lo as usize, p.hi as usize),
        (pass[0], *pass.last().unwrap())
    );
}
