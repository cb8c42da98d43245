use nalgebra::DMatrix;
use proptest::prelude::*;
use seqmult::stochastics::{sample_multinomial, RngStream, SpdMatrix};
use seqmult::vst::*;

fn counts(n: u64) -> impl Strategy<Value = (Vec<u64>, u64)> {
    prop::collection::vec(0.0f64..1.0, 2..7).prop_map(move |w| {
        let total: f64 = w.iter().sum::<f64>() + 1e-9;
        let mut x: Vec<u64> = w.iter().map(|v| (v / total * n as f64).floor() as u64).collect();
        let s: u64 = x.iter().sum();
        let last = x.len() - 1;
        x[last] += n - s;
        (x, n)
    })
}

proptest! {
    #[test]
    fn inverse_recovers_proportions((x, n) in counts(5000)) {
        let t = transform(&x, n, DEFAULT_A).unwrap();
        let p = inverse_transform(&t);
        prop_assert_eq!(p.len(), x.len());
        for (pc, xc) in p.iter().zip(&x) {
            prop_assert!((pc - *xc as f64 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_lands_on_simplex(l in prop::collection::vec(-3.0f64..3.0, 1..6), n in 1u64..100_000) {
        let p = inverse_transform_values(&l, n, DEFAULT_A);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coordinates_increase_with_counts(k in 0u64..999, n in 1000u64..2000) {
        let a = transform(&[k, n - k], n, DEFAULT_A).unwrap();
        let b = transform(&[k + 1, n - k - 1], n, DEFAULT_A).unwrap();
        prop_assert!(b.l[0] > a.l[0]);
        prop_assert!(a.l[0].abs() < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn limiting_correlations_are_valid(raw in prop::collection::vec(0.05f64..1.0, 2..7)) {
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let r = limiting_corr_iid(&p).unwrap();
        let m = r.matrix();
        for i in 0..m.nrows() {
            prop_assert_eq!(m[(i, i)], 1.0);
            for j in 0..m.ncols() {
                prop_assert!(m[(i, j)] >= -1.0 - 1e-12 && m[(i, j)] <= 1.0);
            }
        }
        let eig = m.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&e| e > -1e-10));
    }

    #[test]
    fn moments_add_over_batches(sizes in prop::collection::vec(1u64..10_000, 1..6)) {
        let p = [0.2, 0.3, 0.5];
        let eps = SpdMatrix::from_rows(&[vec![1e-4, 2e-5], vec![2e-5, 3e-4]]).unwrap();
        let whole = cumulative_moments(&p, &sizes, &eps).unwrap();
        let mut mean = nalgebra::DVector::zeros(3);
        let mut cov = DMatrix::zeros(3, 3);
        for &n in &sizes {
            let one = unconditional_moments(&p, n, &eps).unwrap();
            mean += one.mean;
            cov += one.cov;
        }
        prop_assert!((&whole.mean - mean).abs().max() < 1e-6);
        prop_assert!((&whole.cov - cov).abs().max() < 1e-6);
        // counts sum to N, so every row of the covariance sums to zero
        for i in 0..3 {
            prop_assert!(whole.cov.row(i).sum().abs() < 1e-6 * whole.cov.abs().max().max(1.0));
        }
    }
}

#[test]
fn variance_is_stabilized_across_p() {
    let n = 2000u64;
    let m = 20_000;
    let mut rng = RngStream::new(21, 0);
    for p in [0.05, 0.3, 0.5, 0.8] {
        let vals: Vec<f64> = (0..m)
            .map(|_| {
                let x = sample_multinomial(n, &[p, 1.0 - p], &mut rng).unwrap();
                (n as f64 + 0.5).sqrt() * transform(&x, n, DEFAULT_A).unwrap().l[0]
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / m as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "p={p} var={var}");
        let mu = asymptotic_mean(&[p, 1.0 - p])[0];
        assert!((mean / (n as f64 + 0.5).sqrt() - mu).abs() < 2e-3);
    }
}

#[test]
fn multivariate_correlation_matches_limit() {
    let p = [0.2, 0.3, 0.1, 0.4];
    let n = 5000u64;
    let m = 20_000;
    let mut rng = RngStream::new(22, 0);
    let obs: Vec<_> = (0..m)
        .map(|_| transform(&sample_multinomial(n, &p, &mut rng).unwrap(), n, DEFAULT_A).unwrap().l)
        .collect();
    let mean = obs.iter().fold(nalgebra::DVector::zeros(3), |a, l| a + l) / m as f64;
    let mut cov = DMatrix::zeros(3, 3);
    for l in &obs {
        let r = l - &mean;
        cov += &r * r.transpose() * (n as f64 + 0.5);
    }
    cov /= (m - 1) as f64;
    let limit = limiting_corr_iid(&p).unwrap();
    assert!((cov - limit.matrix()).abs().max() < 0.05);
}

#[test]
fn series_transform_names_bad_round() {
    let mut s = BatchSeries::new(2).unwrap();
    s.push_checked(10, vec![4, 6]).unwrap();
    assert!(s.push_checked(10, vec![4, 5]).is_err());
    let obs = transform_series(&s, DEFAULT_A).unwrap();
    assert_eq!(obs.len(), 1);
    assert_eq!(obs[0].weight(), 10.5);
}

#[test]
fn boundary_probabilities_rejected() {
    assert!(limiting_corr_iid(&[0.0, 1.0]).is_err());
    assert!(multinomial_cov_iid(&[0.5, 0.5]).is_ok());
}
