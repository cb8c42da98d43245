use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use seqmult::stochastics::*;

fn spd(rows: &[Vec<f64>]) -> SpdMatrix {
    SpdMatrix::from_rows(rows).unwrap()
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn mvn_moments() {
    let cov = spd(&[vec![2.0, 0.6, -0.3], vec![0.6, 1.0, 0.2], vec![-0.3, 0.2, 0.5]]);
    let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let mut rng = RngStream::new(11, 0);
    let m = 40_000;
    let xs: Vec<DVector<f64>> = (0..m).map(|_| sample_mvn(&mean, &cov, &mut rng).unwrap()).collect();
    let avg = xs.iter().fold(DVector::zeros(3), |a, x| a + x) / m as f64;
    let mut s = DMatrix::zeros(3, 3);
    for x in &xs {
        let r = x - &avg;
        s += &r * r.transpose();
    }
    s /= (m - 1) as f64;
    for i in 0..3 {
        let se = (cov.matrix()[(i, i)] / m as f64).sqrt();
        assert!((avg[i] - mean[i]).abs() < 4.0 * se);
        for j in 0..3 {
            let c = cov.matrix();
            let se = ((c[(i, i)] * c[(j, j)] + c[(i, j)].powi(2)) / m as f64).sqrt();
            assert!((s[(i, j)] - c[(i, j)]).abs() < 4.0 * se, "{i}{j}");
        }
    }
}

#[test]
fn mvn_point_mass_coordinate() {
    let cov = spd(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
    let mean = DVector::from_vec(vec![0.0, 3.0]);
    let mut rng = RngStream::new(1, 0);
    for _ in 0..100 {
        assert_eq!(sample_mvn(&mean, &cov, &mut rng).unwrap()[1], 3.0);
    }
}

#[test]
fn inverse_wishart_mean() {
    let psi = spd(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
    let dof = 9.0;
    let mut rng = RngStream::new(5, 0);
    let m = 40_000;
    let mut acc = DMatrix::zeros(2, 2);
    let mut sq = DMatrix::zeros(2, 2);
    for _ in 0..m {
        let s = sample_inverse_wishart(&psi, dof, &mut rng).unwrap();
        acc += s.matrix();
        sq += s.matrix().component_mul(s.matrix());
    }
    let mean = &acc / m as f64;
    let var = &sq / m as f64 - mean.component_mul(&mean);
    let expect = psi.matrix() / (dof - 2.0 - 1.0);
    for i in 0..2 {
        for j in 0..2 {
            let se = (var[(i, j)] / m as f64).sqrt();
            assert!((mean[(i, j)] - expect[(i, j)]).abs() < 4.0 * se, "{i}{j}");
        }
    }
}

#[test]
fn inverse_wishart_matches_inverted_wishart_sums() {
    // S⁻¹ = Σ z zᵀ with z ~ N(0, Ψ⁻¹), compared on log det.
    let psi = spd(&[vec![1.5, -0.4, 0.1], vec![-0.4, 1.0, 0.3], vec![0.1, 0.3, 0.8]]);
    let dof = 6usize;
    let psi_inv = SpdMatrix::symmetrized(psi.matrix().clone().try_inverse().unwrap()).unwrap();
    let zero = DVector::zeros(3);
    let mut rng = RngStream::new(8, 0);
    let m = 4000;
    let direct: Vec<f64> = (0..m)
        .map(|_| {
            let mut w = DMatrix::zeros(3, 3);
            for _ in 0..dof {
                let z = sample_mvn(&zero, &psi_inv, &mut rng).unwrap();
                w += &z * z.transpose();
            }
            -w.determinant().ln()
        })
        .collect();
    let bartlett: Vec<f64> = (0..m)
        .map(|_| sample_inverse_wishart(&psi, dof as f64, &mut rng).unwrap().matrix().determinant().ln())
        .collect();
    let d = ks_statistic(direct, bartlett);
    // 0.1% critical value
    assert!(d < 1.95 * (2.0 / m as f64).sqrt(), "KS {d}");
}

#[test]
fn inverse_wishart_rejects_low_dof() {
    let mut rng = RngStream::new(1, 0);
    assert!(sample_inverse_wishart(&SpdMatrix::identity(3), 1.5, &mut rng).is_err());
    assert!(sample_inverse_wishart(&SpdMatrix::identity(3), 2.5, &mut rng).is_ok());
}

#[test]
fn dirichlet_mean() {
    let conc = [1.0, 2.0, 5.0];
    let mut rng = RngStream::new(3, 0);
    let m = 20_000;
    let mut acc = [0.0; 3];
    for _ in 0..m {
        let d = sample_dirichlet(&conc, &mut rng).unwrap();
        for c in 0..3 {
            acc[c] += d[c];
        }
    }
    let a0: f64 = conc.iter().sum();
    for c in 0..3 {
        let p = conc[c] / a0;
        let se = (p * (1.0 - p) / (a0 + 1.0) / m as f64).sqrt();
        assert!((acc[c] / m as f64 - p).abs() < 4.0 * se);
    }
}

#[test]
fn multinomial_variance() {
    let p = [0.2, 0.5, 0.3];
    let n = 1000u64;
    let mut rng = RngStream::new(4, 0);
    let m = 20_000;
    let xs: Vec<Vec<u64>> = (0..m).map(|_| sample_multinomial(n, &p, &mut rng).unwrap()).collect();
    for c in 0..3 {
        let mean = xs.iter().map(|x| x[c] as f64).sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x[c] as f64 - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let expect = n as f64 * p[c] * (1.0 - p[c]);
        assert!((mean - n as f64 * p[c]).abs() < 4.0 * (expect / m as f64).sqrt());
        // var of sample variance ≈ 2σ⁴/m
        assert!((var - expect).abs() < 4.0 * expect * (2.0 / m as f64).sqrt());
    }
}

#[test]
fn multinomial_rejects_off_simplex() {
    let mut rng = RngStream::new(1, 0);
    assert!(sample_multinomial(10, &[0.5, 0.6], &mut rng).is_err());
    assert!(sample_multinomial(10, &[-0.1, 1.1], &mut rng).is_err());
    assert_eq!(sample_multinomial(10, &[0.0, 1.0], &mut rng).unwrap(), vec![0, 10]);
}

#[test]
fn truncated_noise_stays_in_support() {
    let p = [0.05, 0.15, 0.8];
    let cov = SpdMatrix::scaled_identity(2, 0.01);
    let noise = TruncatedSimplexNoise::new(&p, &cov).unwrap();
    let mut rng = RngStream::new(9, 0);
    for _ in 0..2000 {
        let e = noise.sample(TRUNCATION_BUDGET, &mut rng).unwrap();
        assert!(noise.in_support(&e));
        let q = [p[0] + e[0], p[1] + e[1], p[2] - e[0] - e[1]];
        assert!(q.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn truncated_noise_budget_exhaustion() {
    // support has tiny mass under a huge covariance
    let p = [1e-6, 1e-6, 1.0 - 2e-6];
    let cov = SpdMatrix::scaled_identity(2, 100.0);
    let mut rng = RngStream::new(1, 0);
    let err = sample_truncated_with_budget(&p, &cov, 1000, &mut rng).unwrap_err();
    assert!(matches!(err, seqmult::Error::SupportTooTight { attempts: 1000, .. }));
}

#[test]
fn truncated_noise_repeatable() {
    let p = [0.3, 0.3, 0.4];
    let cov = SpdMatrix::scaled_identity(2, 0.02);
    let a = sample_truncated_mvn_on_simplex_support(&p, &cov, &mut RngStream::new(5, 2)).unwrap();
    let b = sample_truncated_mvn_on_simplex_support(&p, &cov, &mut RngStream::new(5, 2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn standard_normals_are_standard() {
    let mut rng = RngStream::new(12, 3);
    let m = 50_000;
    let xs: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mean = xs.iter().sum::<f64>() / m as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
    assert!(mean.abs() < 4.0 / (m as f64).sqrt());
    assert!((var - 1.0).abs() < 4.0 * (2.0 / m as f64).sqrt());
    assert_eq!(standard_normal_vector(4, &mut rng).len(), 4);
}

proptest! {
    #[test]
    fn multinomial_conserves_n(n in 0u64..100_000, raw in prop::collection::vec(0.0f64..1.0, 2..8), seed: u64) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let x = sample_multinomial(n, &p, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert_eq!(x.iter().sum::<u64>(), n);
        for (c, &v) in x.iter().enumerate() {
            if p[c] == 0.0 { prop_assert_eq!(v, 0); }
        }
    }

    #[test]
    fn dirichlet_on_simplex(conc in prop::collection::vec(0.2f64..20.0, 2..8), seed: u64) {
        let d = sample_dirichlet(&conc, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn inverse_wishart_is_spd(seed: u64, dof in 3.0f64..30.0) {
        let s = sample_inverse_wishart(&SpdMatrix::identity(3), dof, &mut RngStream::new(seed, 1)).unwrap();
        prop_assert!(s.cholesky("s").is_ok());
    }

    #[test]
    fn streams_reproduce(seed: u64, stream: u64) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        let xa: Vec<u64> = (0..8).map(|_| a.random()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.random()).collect();
        prop_assert_eq!(xa, xb);
        let mut s1 = a.substream(3);
        let mut s2 = RngStream::new(seed, stream).substream(3);
        prop_assert_eq!(s1.random::<u64>(), s2.random::<u64>());
    }
}
