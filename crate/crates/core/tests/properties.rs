//! Randomized properties over seeds, dims and patterns.
use coherence_lab::measures::{self, SmoothParams};
use coherence_lab::qmat::{DensityMatrix, DephasingPattern, KrausChannel};
use coherence_lab::sampler::{haar_unitary, suite_state, SeededRng};
use proptest::prelude::*;

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![Just(vec![2, 2]), Just(vec![2, 3]), Just(vec![3, 2]), Just(vec![2, 2, 2])]
}

fn sample(seed: u64, dims: &[usize]) -> DensityMatrix {
    suite_state(dims, &mut SeededRng::new(seed, 0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partial_trace_keeps_a_state(seed in any::<u64>(), dims in dims_strategy()) {
        let rho = sample(seed, &dims);
        let r = rho.reduced(&[0]).unwrap();
        prop_assert!((r.matrix().trace().re - 1.0).abs() < 1e-12);
        prop_assert!(r.op().min_eigenvalue() > -1e-12);
    }

    #[test]
    fn dephasing_is_idempotent(seed in any::<u64>(), dims in dims_strategy()) {
        let rho = sample(seed, &dims);
        let p = DephasingPattern::single(0);
        let once = rho.dephased(&p).unwrap();
        let twice = once.dephased(&p).unwrap();
        prop_assert!((once.matrix() - twice.matrix()).norm() < 1e-14);
    }

    #[test]
    fn ordering_holds(seed in any::<u64>(), dims in dims_strategy()) {
        let rho = sample(seed, &dims);
        let p = DephasingPattern::single(0);
        let cmin = measures::c_min(&rho, &p, SmoothParams::zero()).unwrap().value;
        let cr = measures::c_r(&rho, &p).unwrap().value;
        let cmax = measures::c_max(&rho, &p, SmoothParams::zero()).unwrap().value;
        prop_assert!(cmin >= -1e-9);
        prop_assert!(cr >= cmin - 1e-7);
        prop_assert!(cmax >= cr - 1e-7);
    }

    #[test]
    fn local_unitary_on_b_leaves_coherence(seed in any::<u64>()) {
        let rho = sample(seed, &[2, 3]);
        let mut rng = SeededRng::new(seed, 1);
        let u = KrausChannel::new(vec![haar_unitary(3, &mut rng)]).unwrap();
        let moved = DensityMatrix::new(rho.op().apply_kraus(&u, &[1]).unwrap()).unwrap();
        let p = DephasingPattern::single(0);
        let before = measures::c_max(&rho, &p, SmoothParams::zero()).unwrap().value;
        let after = measures::c_max(&moved, &p, SmoothParams::zero()).unwrap().value;
        prop_assert!((before - after).abs() < 1e-6);
    }

    #[test]
    fn cmi_is_nonnegative(seed in any::<u64>()) {
        let rho = sample(seed, &[2, 2, 2]);
        let i = measures::conditional_mutual_information(&rho, &[0], &[1], &[2]).unwrap();
        prop_assert!(i >= -1e-9);
    }
}
