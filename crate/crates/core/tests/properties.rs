use proptest::prelude::*;
use shelab::estimators::{self, MomentKind, MomentSeries};
use shelab::kernel;
use shelab::model::{make_sigma, Field, Grid, SigmaSpec};
use shelab::noise::NoiseStream;
use shelab::solver::negative_mass_fraction;

proptest! {
    #[test]
    fn heat_kernel_is_even_and_positive(t in 1e-3f64..50.0, z in -20.0f64..20.0, kappa in 0.1f64..5.0) {
        let a = kernel::heat_kernel(t, z, kappa).unwrap();
        let b = kernel::heat_kernel(t, -z, kappa).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn laplace_kernel_identity(lambda in 1e-3f64..1e3, kappa in 1e-2f64..1e2) {
        let v = kernel::laplace_kernel_l2(lambda, kappa).unwrap();
        prop_assert!((2.0 * (2.0 * kappa * lambda).sqrt() * v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_l2_scales_like_inverse_root_time(t in 1e-3f64..100.0, kappa in 0.1f64..5.0, c in 0.1f64..10.0) {
        let a = kernel::kernel_l2_norm_sq(t, kappa).unwrap();
        let b = kernel::kernel_l2_norm_sq(c * t, kappa).unwrap();
        prop_assert!((a / b - c.sqrt()).abs() < 1e-12 * c.sqrt());
    }

    #[test]
    fn heat_convolution_is_linear(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in 0u64..1000,
        t in 0.05f64..0.5,
    ) {
        let grid = Grid::new(10.0, 256).unwrap();
        let noise = NoiseStream::new(seed, 0);
        let mut f = vec![0.0; grid.nx];
        let mut g = vec![0.0; grid.nx];
        noise.standard_normals_into(&mut f);
        NoiseStream::new(seed, 1).standard_normals_into(&mut g);
        // Keep mass away from the boundary so the truncation guard passes.
        for (i, (fi, gi)) in f.iter_mut().zip(g.iter_mut()).enumerate() {
            if grid.x(i).abs() > 2.0 {
                *fi = 0.0;
                *gi = 0.0;
            }
        }
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let dx = grid.dx();
        let cf = kernel::heat_convolve(&Field::new(0.0, f, dx), t, 1.0).unwrap();
        let cg = kernel::heat_convolve(&Field::new(0.0, g, dx), t, 1.0).unwrap();
        let cc = kernel::heat_convolve(&Field::new(0.0, combo, dx), t, 1.0).unwrap();
        for i in 0..grid.nx {
            let expect = a * cf.values[i] + b * cg.values[i];
            prop_assert!((cc.values[i] - expect).abs() < 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn modulated_sigma_respects_envelope(c1 in 0.5f64..2.0, frac in 0.0f64..0.9, u in -1e6f64..1e6) {
        let c2 = frac * c1;
        let s = make_sigma(&SigmaSpec::modulated(c1, c2)).unwrap();
        let v = s.eval(u).abs();
        prop_assert!(v <= s.lip() * u.abs() * (1.0 + 1e-12));
        prop_assert!(v >= s.low() * u.abs() * (1.0 - 1e-12));
    }

    #[test]
    fn support_radius_grows_with_quantile(q1 in 0.5f64..0.99, dq in 0.0f64..0.0099, width in 0.5f64..4.0) {
        let x: Vec<f64> = (0..400).map(|i| -20.0 + 0.1 * i as f64).collect();
        let profile: Vec<f64> = x.iter().map(|x| (-(x / width).powi(2)).exp()).collect();
        let r1 = estimators::effective_support_radius(&x, &profile, q1).unwrap();
        let r2 = estimators::effective_support_radius(&x, &profile, q1 + dq).unwrap();
        prop_assert!(r1 <= r2);
    }

    #[test]
    fn pairwise_sum_ignores_order(values in prop::collection::vec(-1e3f64..1e3, 1..200), shift in 0usize..200) {
        let mut rotated = values.clone();
        let k = shift % values.len();
        rotated.rotate_left(k);
        let a = estimators::pairwise_sum(&values);
        let b = estimators::pairwise_sum(&rotated);
        let scale: f64 = values.iter().map(|v| v.abs()).sum();
        prop_assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn exact_exponential_fits_its_rate(rate in -1.0f64..1.0, c in -5.0f64..5.0) {
        let times: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
        let est = times.iter().map(|t| (c + rate * t).exp()).collect();
        let s = MomentSeries::exact(MomentKind::L2Sq, times, est);
        let fit = estimators::fit_lyapunov(&s, (5.0, 20.0)).unwrap();
        prop_assert!((fit.rate - rate).abs() < 1e-10);
        prop_assert!((fit.intercept - c).abs() < 1e-9);
    }

    #[test]
    fn negative_mass_fraction_is_a_fraction(values in prop::collection::vec(-10.0f64..10.0, 1..100)) {
        let f = negative_mass_fraction(&values);
        prop_assert!((0.0..=1.0).contains(&f));
        let flipped: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        prop_assert_eq!(negative_mass_fraction(&flipped), 0.0);
    }

    #[test]
    fn noise_is_a_function_of_seed_and_replicate(seed in any::<u64>(), rep in 0u64..1 << 40) {
        let mut a = vec![0.0; 64];
        let mut b = vec![0.0; 64];
        NoiseStream::new(seed, rep).standard_normals_into(&mut a);
        NoiseStream::new(seed, rep).standard_normals_into(&mut b);
        prop_assert_eq!(&a, &b);
        NoiseStream::new(seed, rep + 1).standard_normals_into(&mut b);
        prop_assert_ne!(a, b);
    }
}
