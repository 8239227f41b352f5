use dyadic_cascade::diagnostics::{signed_energies, sobolev_norm, sup_scaled, tail_energy, SobolevSpec};
use dyadic_cascade::model::{ModelParams, ShellState};
use dyadic_cascade::tree::{tree_sobolev_norm, TreeParams, TreeVariant};
use proptest::prelude::*;

fn state(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2..max_len)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn abs_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y).abs()).sum()
}

fn rhs(p: &ModelParams, u: &[f64]) -> Vec<f64> {
    p.rhs(&ShellState::new(0.0, u.to_vec())).unwrap()
}

proptest! {
    #[test]
    fn rhs_conserves_energy(u in state(40), lambda in 1.1f64..4.0, alpha in -1.0f64..1.0, beta in -1.0f64..1.0) {
        prop_assume!(alpha != 0.0 || beta != 0.0);
        let p = ModelParams::new(lambda, alpha, beta, u.len()).unwrap();
        let du = rhs(&p, &u);
        prop_assert!(dot(&u, &du).abs() <= 1e-12 * abs_dot(&u, &du) + 1e-300);
    }

    #[test]
    fn flux_is_tail_energy_rate(u in state(30), lambda in 1.1f64..3.0, alpha in -1.0f64..1.0, beta in -1.0f64..1.0) {
        prop_assume!(alpha != 0.0 || beta != 0.0);
        let p = ModelParams::new(lambda, alpha, beta, u.len()).unwrap();
        let du = rhs(&p, &u);
        let f = p.energy_flux(&ShellState::new(0.0, u.clone())).unwrap().f;
        prop_assert_eq!(f[0], 0.0);
        for j in 1..u.len() {
            let terms: Vec<f64> = (j..u.len()).map(|i| 2.0 * u[i] * du[i]).collect();
            let rate: f64 = terms.iter().sum();
            let scale: f64 = terms.iter().map(|x| x.abs()).sum::<f64>() + f[j].abs();
            prop_assert!((rate - f[j]).abs() <= 1e-12 * scale + 1e-300, "j={} rate={} f={}", j, rate, f[j]);
        }
    }

    #[test]
    fn rhs_is_linear_in_weights(u in state(20), alpha in -1.0f64..1.0, beta in -1.0f64..1.0) {
        prop_assume!(alpha != 0.0 && beta != 0.0);
        let n = u.len();
        let mix = rhs(&ModelParams::new(2.0, alpha, beta, n).unwrap(), &u);
        let kp = rhs(&ModelParams::kp(2.0, n).unwrap(), &u);
        let ob = rhs(&ModelParams::obukhov(2.0, n).unwrap(), &u);
        for j in 0..n {
            let want = alpha * kp[j] + beta * ob[j];
            prop_assert!((mix[j] - want).abs() <= 1e-12 * (alpha * kp[j]).abs().max((beta * ob[j]).abs()).max(1e-300));
        }
    }

    #[test]
    fn rhs_is_quadratic(u in state(20), c in -4.0f64..4.0) {
        // u(t) solves => c u(c t) solves
        let p = ModelParams::new(2.0, 0.3, 0.8, u.len()).unwrap();
        let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
        let a = rhs(&p, &cu);
        let b = rhs(&p, &u);
        for j in 0..u.len() {
            prop_assert!((a[j] - c * c * b[j]).abs() <= 1e-12 * (c * c * b[j]).abs().max(1e-12));
        }
    }

    #[test]
    fn signed_energies_partition_tail(u in state(30), j in 0usize..30) {
        prop_assume!(j < u.len());
        let (plus, minus) = signed_energies(&u, j).unwrap();
        prop_assert_eq!(plus + minus, tail_energy(&u, j).unwrap());
        prop_assert!(plus >= 0.0 && minus >= 0.0);
    }

    #[test]
    fn sobolev_norm_monotone_in_s(u in state(30), s1 in 0.0f64..3.0, ds in 0.0f64..2.0, lambda in 1.01f64..4.0) {
        let a = sobolev_norm(&u, SobolevSpec::new(s1, lambda));
        let b = sobolev_norm(&u, SobolevSpec::new(s1 + ds, lambda));
        prop_assert!(a <= b);
    }

    #[test]
    fn sup_scaled_below_h1(u in prop::collection::vec(0.0f64..1.0, 1..40), lambda in 1.01f64..4.0) {
        let (sup, argmax) = sup_scaled(&u, lambda);
        prop_assert!(argmax < u.len());
        prop_assert!(sup <= sobolev_norm(&u, SobolevSpec::new(1.0, lambda)) * (1.0 + 1e-15));
    }

    #[test]
    fn tree_rhs_conserves_energy(d in 1usize..5, depth in 1usize..6, seed in any::<u64>(), kp in any::<bool>()) {
        let variant = if kp { TreeVariant::BranchedKp } else { TreeVariant::BranchedObukhov };
        let p = TreeParams::new(2.0, d, depth, variant).unwrap();
        let mut x = seed | 1;
        let u: Vec<f64> = (0..p.node_count()).map(|_| {
            // xorshift keeps the strategy cheap for large trees
            x ^= x << 13; x ^= x >> 7; x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        }).collect();
        let mut du = vec![0.0; u.len()];
        p.rhs_into(&u, &mut du);
        prop_assert!(dot(&u, &du).abs() <= 1e-12 * abs_dot(&u, &du) + 1e-300);
        prop_assert!(tree_sobolev_norm(&p, &u, 0.5) <= tree_sobolev_norm(&p, &u, 1.0));
    }

    #[test]
    fn unary_tree_matches_chain(u in state(25)) {
        let n = u.len();
        for (variant, chain) in [
            (TreeVariant::BranchedObukhov, ModelParams::obukhov(2.0, n).unwrap()),
            (TreeVariant::BranchedKp, ModelParams::kp(2.0, n).unwrap()),
        ] {
            let p = TreeParams::new(2.0, 1, n - 1, variant).unwrap();
            let mut du = vec![0.0; n];
            p.rhs_into(&u, &mut du);
            prop_assert_eq!(du, rhs(&chain, &u));
        }
    }
}
