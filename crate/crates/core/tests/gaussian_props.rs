//! Property tests for the Gaussian algebra: group structure of
//! multiply/divide, parameterization round trips, and density
//! normalization against a dense-grid oracle.

use proptest::prelude::*;
use sdi_core::{GaussianMoment, GaussianNat, Matrix, Role};

/// Random lower-triangular factor with bounded positive diagonal; its
/// LLᵀ product is a well-conditioned SPD matrix.
fn arb_spd(d: usize) -> impl Strategy<Value = Matrix> {
    let entries = prop::collection::vec(-1.5f64..1.5, d * d);
    let diags = prop::collection::vec(0.4f64..1.8, d);
    (entries, diags).prop_map(move |(e, diag)| {
        let mut l = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..i {
                l.set(i, j, e[i * d + j]);
            }
            l.set(i, i, diag[i]);
        }
        let mut spd = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += l.get(i, k) * l.get(j, k);
                }
                spd.set(i, j, s);
            }
        }
        spd
    })
}

fn arb_sym(d: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, d * d).prop_map(move |e| {
        let mut m = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.set(i, j, e[i * d + j]);
            }
        }
        m.symmetrized()
    })
}

fn arb_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
}

fn max_scale(g: &GaussianNat) -> f64 {
    g.r()
        .iter()
        .fold(g.b().max_abs(), |m, v| m.max(v.abs()))
        .max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    // divide(multiply(a, b), b) returns a: the site algebra is a group
    // action on natural parameters.
    #[test]
    fn multiply_divide_group_action(
        ra in arb_vec(3), rb in arb_vec(3), ba in arb_sym(3), bb in arb_sym(3)
    ) {
        let a = GaussianNat::new(ra, ba, Role::Site).unwrap();
        let b = GaussianNat::new(rb, bb, Role::Site).unwrap();
        let back = a.multiply(&b).unwrap().divide(&b).unwrap();
        let tol = 1e-14 * (max_scale(&a) + max_scale(&b));
        prop_assert!(back.max_param_distance(&a) <= tol);
    }

    // multiplication is associative exactly up to float rounding
    #[test]
    fn multiply_associative(
        ra in arb_vec(2), rb in arb_vec(2), rc in arb_vec(2),
        ba in arb_sym(2), bb in arb_sym(2), bc in arb_sym(2)
    ) {
        let a = GaussianNat::new(ra, ba, Role::Site).unwrap();
        let b = GaussianNat::new(rb, bb, Role::Site).unwrap();
        let c = GaussianNat::new(rc, bc, Role::Site).unwrap();
        let left = a.multiply(&b).unwrap().multiply(&c).unwrap();
        let right = a.multiply(&b.multiply(&c).unwrap()).unwrap();
        let tol = 1e-14 * (max_scale(&a) + max_scale(&b) + max_scale(&c));
        prop_assert!(left.max_param_distance(&right) <= tol);
    }

    // moment → natural → moment round trip within 1e-10 relative
    #[test]
    fn moment_nat_round_trip(mu in arb_vec(3), sigma in arb_spd(3)) {
        let q = GaussianMoment::new(mu, sigma).unwrap();
        let back = q.to_nat().to_moment().unwrap();
        let scale = q.cov().max_abs().max(1.0);
        for i in 0..3 {
            prop_assert!((back.mean()[i] - q.mean()[i]).abs() <= 1e-10 * scale);
        }
        prop_assert!(back.cov().sub(q.cov()).max_abs() <= 1e-10 * scale);
    }

    // the stored square root reproduces the covariance within 1e-12
    #[test]
    fn sqrt_factor_reproduces_cov(mu in arb_vec(4), sigma in arb_spd(4)) {
        let q = GaussianMoment::new(mu, sigma).unwrap();
        let s = q.sqrt_factor();
        let rebuilt = s.matmul(&s.transpose());
        let scale = q.cov().max_abs().max(1.0);
        prop_assert!(rebuilt.sub(q.cov()).max_abs() <= 1e-12 * scale);
        // lower-triangular with positive diagonal: the gauge is unique
        for i in 0..4 {
            prop_assert!(s.get(i, i) > 0.0);
            for j in (i + 1)..4 {
                prop_assert!(s.get(i, j) == 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // exp(log_pdf) integrates to 1 on a dense trapezoid grid
    #[test]
    fn log_pdf_normalizes(mean in -3.0f64..3.0, var in 0.2f64..4.0) {
        let q = GaussianMoment::scalar(mean, var).unwrap();
        let sd = var.sqrt();
        let n = 100_001usize;
        let lo = mean - 10.0 * sd;
        let dx = 20.0 * sd / (n - 1) as f64;
        let mut total = 0.0;
        for i in 0..n {
            let x = lo + dx * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            total += w * dx * q.log_pdf(&[x]).exp();
        }
        prop_assert!((total - 1.0).abs() < 1e-8, "integral {total}");
    }
}

#[test]
fn divide_marks_indefinite_site() {
    let wide = GaussianNat::new(
        vec![0.0],
        Matrix::from_rows(&[vec![1.0]]).unwrap(),
        Role::Density,
    )
    .unwrap();
    let narrow = GaussianNat::new(
        vec![0.0],
        Matrix::from_rows(&[vec![2.0]]).unwrap(),
        Role::Density,
    )
    .unwrap();
    let site = wide.divide(&narrow).unwrap();
    assert_eq!(site.role(), Role::Site);
    assert!(!site.is_normalizable());
    // …and such a site still participates in products that end PD
    let prior = GaussianNat::new(
        vec![0.0],
        Matrix::from_rows(&[vec![3.0]]).unwrap(),
        Role::Density,
    )
    .unwrap();
    assert!(site.multiply(&prior).unwrap().is_normalizable());
}

#[test]
fn json_round_trip_17_digits() {
    let q = GaussianMoment::new(
        vec![0.1234567890123456, -2.0],
        Matrix::from_rows(&[vec![1.25, 0.5], vec![0.5, 2.5]]).unwrap(),
    )
    .unwrap();
    let js = serde_json::to_string(&q).unwrap();
    let back: GaussianMoment = serde_json::from_str(&js).unwrap();
    assert_eq!(back.mean()[0].to_bits(), q.mean()[0].to_bits());
    assert_eq!(back.cov().get(0, 1).to_bits(), q.cov().get(0, 1).to_bits());
}
