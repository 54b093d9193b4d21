use approx::assert_relative_eq;
use hypctrl::pressure::{max_separated_points, partition_indices, spanning_count_oracle, subadditive_select};
use hypctrl::ratelimited::{design_controller, replay_controls, simulate_run, Channel};
use hypctrl::setops::{fiber_tube_volume, regularity_rank, FiberEvolution, GridSet};
use hypctrl::system::{
    bowen_distance, transition, ControlRange, ControlSequence, Extension, Henon, LinearSystem, State,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn henon_controls(vals: &[(f64, f64)]) -> ControlSequence {
    let v = vals.iter().map(|&(a, b)| DVector::from_vec(vec![a, b])).collect();
    ControlSequence::new(0, v, Extension::None).unwrap()
}

fn small_control() -> impl Strategy<Value = (f64, f64)> {
    (-0.05..0.05f64, -0.05..0.05f64)
}

fn doubling() -> LinearSystem {
    LinearSystem::new(
        "doubling",
        DMatrix::from_element(1, 1, 2.0),
        DMatrix::from_element(1, 1, 1.0),
        ControlRange::symmetric_box(1, 0.5),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_is_a_cocycle(
        x in (-1.0..1.0f64, -1.0..1.0f64),
        us in prop::collection::vec(small_control(), 6),
        s in 0i64..4,
    ) {
        let h = Henon::planar(0.1);
        let u = henon_controls(&us);
        let x = State::from_vec(vec![x.0, x.1]);
        let t = 6 - s;
        let whole = transition(&h, s + t, &x, &u).unwrap();
        let mid = transition(&h, s, &x, &u).unwrap();
        let split = transition(&h, t, &mid, &u.shifted(s)).unwrap();
        prop_assert!((whole - split).norm() <= 1e-9);
    }

    #[test]
    fn backward_transition_inverts_forward(
        x in (-1.0..1.0f64, -1.0..1.0f64),
        us in prop::collection::vec(small_control(), 3),
    ) {
        let h = Henon::planar(0.1);
        let u = henon_controls(&us);
        let x = State::from_vec(vec![x.0, x.1]);
        let y = transition(&h, 3, &x, &u).unwrap();
        let back = transition(&h, -3, &y, &u.shifted(3)).unwrap();
        assert_relative_eq!(back, x, epsilon = 1e-8);
    }

    #[test]
    fn partitions_enumerate_each_index_once(n in 2usize..200, m in 1usize..200) {
        prop_assume!(m < n);
        let p = partition_indices(n, m).unwrap();
        let mut seen: Vec<usize> = p.iter().map(|&(i, j)| i + j * m).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..=n - m).collect::<Vec<_>>());
        prop_assert!(p.iter().all(|&(i, _)| i < m));
    }

    #[test]
    fn subadditive_selection_meets_its_guarantee(
        weights in prop::collection::vec(-1.0..1.0f64, 40),
        c in 0.0..1.0f64,
        cap in 1usize..10,
        eps in 0.05..0.5f64,
    ) {
        // v(s, k) = Σ w[s..s+k] + c·min(k, cap) is subadditive in k
        let n = weights.len();
        let v = |s: usize, k: usize| weights[s..s + k].iter().sum::<f64>() + c * k.min(cap) as f64;
        let omega = 1.0 + c;
        let n1 = subadditive_select(&v, n, eps, omega).unwrap();
        prop_assert!(n1 < n);
        let sigma = v(0, n) / n as f64;
        for k in 1..=n - n1 {
            prop_assert!(v(n1, k) / k as f64 > sigma - eps - 1e-12);
        }
        prop_assert!((n - n1) as f64 >= eps * n as f64 / (2.0 * omega) - 1e-12);
    }

    #[test]
    fn regularity_rank_grows_with_the_window(
        which in 0usize..64,
        us in prop::collection::vec(small_control(), 4),
    ) {
        // start on the invariant set so the short window stays bounded
        let h = Henon::scalar(0.1);
        let points = h.periodic_points(6).unwrap();
        let x = points[which % points.len()].clone();
        let window: Vec<DVector<f64>> = us.iter().map(|&(a, _)| DVector::from_vec(vec![a])).collect();
        let ranks: Vec<usize> = (1..=window.len()).map(|k| regularity_rank(&h, &x, &window[..k]).unwrap()).collect();
        prop_assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{:?}", ranks);
        prop_assert!(ranks.iter().all(|&r| r <= 2));
    }

    #[test]
    fn refinement_preserves_the_set(bits in prop::collection::vec(any::<bool>(), 64), levels in 1u32..3) {
        let g = GridSet::empty(vec![0.0, 0.0], vec![1.0, 1.0], 8).unwrap().from_bitmap(&bits);
        let fine = g.refined(levels);
        prop_assert_eq!(fine.len(), g.len() << (2 * levels));
        prop_assert!(fine.is_subset_of(&g).unwrap());
        prop_assert!(g.is_subset_of(&fine).unwrap());
        assert_relative_eq!(fine.volume(), g.volume(), max_relative = 1e-12);
    }

    #[test]
    fn subsets_are_detected(bits in prop::collection::vec(any::<bool>(), 64), drop in 0usize..64) {
        let g = GridSet::empty(vec![0.0, 0.0], vec![1.0, 1.0], 8).unwrap().from_bitmap(&bits);
        let mut less = bits.clone();
        less[drop] = false;
        let h = g.from_bitmap(&less);
        prop_assert!(h.is_subset_of(&g).unwrap());
        prop_assert_eq!(g.is_subset_of(&h).unwrap(), bits == less);
    }

    #[test]
    fn separated_points_are_separated(
        pts in prop::collection::vec((-0.8..0.8f64, -0.8..0.8f64), 2..40),
        tau in 1usize..5,
        eps in 0.05..0.5f64,
    ) {
        let h = Henon::planar(0.1);
        let u = ControlSequence::constant(DVector::zeros(2));
        let cands: Vec<State> = pts.iter().map(|&(a, b)| State::from_vec(vec![a, b])).collect();
        let set = max_separated_points(&h, &u, tau, eps, &cands).unwrap();
        prop_assert!(!set.points.is_empty());
        for i in 0..set.points.len() {
            for j in 0..i {
                let d = bowen_distance(&h, &u, tau, &set.points[i], &set.points[j]).unwrap();
                prop_assert!(d >= eps * (1.0 - 1e-12), "{} < {}", d, eps);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tube_volume_shrinks_with_tau_and_grows_with_eps(eps in 0.02..0.2f64, seed in any::<u64>()) {
        let sys = LinearSystem::linear_toy(0.1);
        let fiber = GridSet::from_points(vec![-1.0, -1.0], vec![1.0, 1.0], 64, [&[0.0, 0.0][..]]).unwrap();
        let u = ControlSequence::constant(DVector::zeros(2));
        let vol = |tau, e| fiber_tube_volume(&sys, &u, tau, e, &fiber, FiberEvolution::Fixed, 20_000, seed).unwrap();
        // same ε, same samples: the tubes are nested
        let by_tau: Vec<usize> = (1..=5).map(|t| vol(t, eps).hits).collect();
        prop_assert!(by_tau.windows(2).all(|w| w[0] >= w[1]), "{:?}", by_tau);
        // different ε draws from different boxes, so compare up to noise
        let (small, big) = (vol(3, eps), vol(3, 1.5 * eps));
        prop_assert!(small.volume <= big.volume + 4.0 * (small.stderr + big.stderr));
    }

    #[test]
    fn spanning_count_dominates_its_lower_bound(tau in 1usize..5, res in 3u32..6) {
        let sys = doubling();
        let q = GridSet::full(vec![-0.5], vec![0.5], 1 << res).unwrap();
        let letters = [-0.5, 0.0, 0.5];
        let mut codebook = vec![vec![]];
        for _ in 0..tau {
            codebook = codebook
                .into_iter()
                .flat_map(|w: Vec<f64>| letters.iter().map(move |&l| [w.clone(), vec![l]].concat()))
                .collect();
        }
        let codebook: Vec<ControlSequence> = codebook
            .into_iter()
            .map(|w| ControlSequence::periodic(w.into_iter().map(|v| DVector::from_vec(vec![v])).collect()).unwrap())
            .collect();
        let r = spanning_count_oracle(&sys, &q, &q, tau, &codebook).unwrap();
        prop_assert!(r.lower_bound <= r.count);
        prop_assert_eq!(r.chosen.len(), r.count);
    }

    #[test]
    fn channel_schedules_carry_the_rate(num in 1u32..32, den in 1u32..16, tau in 1usize..6) {
        let rate = num as f64 / den as f64;
        let ch = Channel::from_rate(rate, tau).unwrap();
        prop_assert_eq!(ch.period() % tau, 0);
        let total: u32 = (0..ch.period()).map(|t| ch.bits_at(t)).sum();
        assert_relative_eq!(total as f64 / ch.period() as f64, rate, epsilon = 1e-12);
        let max = (0..ch.period()).map(|t| ch.bits_at(t)).max().unwrap();
        let min = (0..ch.period()).map(|t| ch.bits_at(t)).min().unwrap();
        prop_assert!(max - min <= 1);
    }

    #[test]
    fn controller_is_causal_in_the_symbols(
        dx in (-1.0..1.0f64, -1.0..1.0f64),
        rate in prop::sample::select(vec![1.0, 2.5, 3.0, 4.0]),
    ) {
        let h = Henon::planar(0.1);
        let orbit = h.coded_orbit(&[true, false]).unwrap();
        let delta = 1e-3;
        let cc = design_controller(&h, &orbit, rate, 0.1).unwrap();
        let off = DVector::from_vec(vec![dx.0, dx.1]);
        let x0 = &orbit.states[0] + off * (delta / std::f64::consts::SQRT_2);
        let run = simulate_run(&h, &cc, cc.channel(), &x0, delta, 400, 0.1).unwrap();
        let replay = replay_controls(&h, &cc, &run.channel.log, delta);
        prop_assert_eq!(replay.as_slice(), run.trajectory.controls.values());
        if run.failed_at.is_none() {
            let achieved = run.channel.achieved_rate().unwrap();
            prop_assert!((achieved - cc.channel().scheduled_rate()).abs() <= 1e-12);
        }
    }
}
