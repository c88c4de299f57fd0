//! Property tests of algebraic invariants that hold for every path and
//! parameter, not just on average.

use nalgebra::DMatrix;
use proptest::prelude::*;

use stochreg::chi_window::{chi_qv_eps, Density, SquareMeasure, WindowGrid};
use stochreg::grid_paths::{Grid, SamplePath};
use stochreg::hilbert_kolmo::{pairing_trace, phi1};
use stochreg::ito_verify::{ito_residual, C12Fn};
use stochreg::regcalc::{cov_sum, forward_sum, integration_by_parts_residual, Extrapolation};
use stochreg::replicate::Payoff;

const N: usize = 48;

fn path_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, N + 1)
}

fn path(v: Vec<f64>) -> SamplePath {
    SamplePath::new(Grid::new(1.0, N).unwrap(), v, "p").unwrap()
}

/// Direct evaluation of `(1/k) Σ_{j<cells} (x_{j+k} - x_j)(y_{j+k} - y_j)`
/// with indices past the end clamped to the terminal value.
fn cov_oracle(x: &[f64], y: &[f64], k: usize, cells: usize) -> f64 {
    let n = x.len() - 1;
    (0..cells)
        .map(|j| {
            let e = (j + k).min(n);
            (x[e] - x[j]) * (y[e] - y[j])
        })
        .sum::<f64>()
        / k as f64
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-10 * scale.max(1.0)
}

proptest! {
    #[test]
    fn covariation_matches_direct_sum(x in path_values(), y in path_values(), k in 1usize..=N, cells in 0usize..=N) {
        let got = cov_sum(&x, &y, k, cells);
        let want = cov_oracle(&x, &y, k, cells);
        prop_assert!(close(got, want, want.abs()), "{got} vs {want}");
    }

    #[test]
    fn covariation_symmetric_bilinear_positive(
        x in path_values(), y in path_values(), z in path_values(), a in -2.0f64..2.0, k in 1usize..8,
    ) {
        let comb: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + v).collect();
        let lhs = cov_sum(&comb, &z, k, N);
        let rhs = a * cov_sum(&x, &z, k, N) + cov_sum(&y, &z, k, N);
        prop_assert!(close(lhs, rhs, lhs.abs() + rhs.abs()));
        prop_assert!(close(cov_sum(&x, &y, k, N), cov_sum(&y, &x, k, N), 1.0));
        prop_assert!(cov_sum(&x, &x, k, N) >= 0.0);
    }

    #[test]
    fn by_parts_vanishes_for_constants(c in -5.0f64..5.0, y in path_values(), k in 1usize..8) {
        // X constant at zero: every term vanishes identically.
        let x = path(vec![0.0; N + 1]);
        let r = integration_by_parts_residual(&x, &path(y.clone()), k as f64 / N as f64, 1.0).unwrap();
        prop_assert!(r.abs() <= 1e-12);
        // Y constant: d⁻Y and [X, Y] vanish and ∫ c d⁻X telescopes to the
        // ε-averaged increment.
        let ones = vec![c; N + 1];
        prop_assert_eq!(cov_sum(&y, &ones, k, N), 0.0);
        prop_assert_eq!(forward_sum(&y, &ones, k, N), 0.0);
    }

    #[test]
    fn affine_ito_is_exact(v in path_values(), a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, k in 1usize..8) {
        let x = path(v);
        let f = C12Fn::Affine { a, b, c };
        let t = (N - k) as f64 / N as f64;
        let r = ito_residual(&f, &x, k as f64 / N as f64, t).unwrap();
        prop_assert!(r.residual.abs() <= 1e-11, "{}", r.residual);
    }

    #[test]
    fn quadratic_ito_is_exact(v in path_values(), k in 1usize..8) {
        let x = path(v);
        let r = ito_residual(&C12Fn::Square, &x, k as f64 / N as f64, 1.0).unwrap();
        prop_assert!(r.residual.abs() <= 1e-10, "{}", r.residual);
        prop_assert!(r.accounting_error() <= 1e-12);
    }

    #[test]
    fn chi_qv_is_linear_in_the_measure(v in path_values(), l1 in 0.0f64..3.0, l2 in 0.0f64..3.0, k in 1usize..8) {
        let x = path(v);
        let win = WindowGrid::new(x.grid(), 0.25).unwrap();
        let eps = k as f64 / N as f64;
        let dirac = SquareMeasure::dirac(win, 1.0);
        let diag = SquareMeasure::diagonal(win, Density::Const(1.0));
        let mixed = dirac.scaled(l1).add(&diag.scaled(l2)).unwrap();
        let lhs = chi_qv_eps(&mixed, &x, eps, 1.0).unwrap();
        let rhs = l1 * chi_qv_eps(&dirac, &x, eps, 1.0).unwrap() + l2 * chi_qv_eps(&diag, &x, eps, 1.0).unwrap();
        prop_assert!(close(lhs, rhs, lhs.abs()));
        // The atom at 0 pairs with the scalar ε-QV.
        let scalar = cov_sum(x.values(), x.values(), k, N);
        prop_assert!(close(chi_qv_eps(&dirac, &x, eps, 1.0).unwrap(), scalar, scalar));
    }

    #[test]
    fn extrapolation_reproduces_polynomials(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0, c2 in -5.0f64..5.0) {
        let eps = [0.064, 0.032, 0.016, 0.008, 0.004, 0.002];
        let lin: Vec<f64> = eps.iter().map(|e| c0 + c1 * e).collect();
        let quad: Vec<f64> = eps.iter().map(|e| c0 + c1 * e + c2 * e * e).collect();
        prop_assert!(close(Extrapolation::Linear3.apply(&eps, &lin), c0, c0.abs()));
        prop_assert!(close(Extrapolation::Richardson3.apply(&eps, &quad), c0, c0.abs()));
        prop_assert_eq!(Extrapolation::Finest.apply(&eps, &lin), *lin.last().unwrap());
        for m in [Extrapolation::Finest, Extrapolation::Linear3, Extrapolation::Richardson3] {
            let w: f64 = m.weights(&eps).iter().sum();
            prop_assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pairing_is_frobenius(d in 1usize..8, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
        let p = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
        let brute = (&u * p.transpose()).trace();
        prop_assert!(close(pairing_trace(&u, &p).unwrap(), brute, 1.0));
    }

    #[test]
    fn phi1_bounds(lambda in -200.0f64..0.0, t in 0.0f64..2.0) {
        let v = phi1(lambda, t);
        prop_assert!(v >= 0.0 && v <= t + 1e-15);
        prop_assert!(v >= t * (lambda * t).exp() - 1e-15);
    }

    #[test]
    fn table_payoff_interpolates(ys in prop::collection::vec(-3.0f64..3.0, 2..6), x in -5.0f64..5.0) {
        let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64 - 1.0).collect();
        let p = Payoff::table(xs.clone(), ys.clone()).unwrap();
        for (xi, yi) in xs.iter().zip(&ys) {
            prop_assert!((p.eval(*xi) - yi).abs() < 1e-12);
        }
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if x >= xs[0] && x <= *xs.last().unwrap() {
            prop_assert!(p.eval(x) >= lo - 1e-12 && p.eval(x) <= hi + 1e-12);
        }
    }
}
