use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trialwise::backup::{policy_backup, walk_back, BackupOp, BootstrapFn, DynamicsBackup, Extras, Location, PolicyBackup};
use trialwise::control::{NextRoot, RootKind, RootStrategy};
use trialwise::mdp::{emit_mdp, load_mdp, make_chain, AccessHandle, AccessMode, MdpBuilder, QueryResult, TabularMdp};
use trialwise::model::LearnedTabularModel;
use trialwise::select::{action_distribution, argmax, boltzmann_probs, greedy_probs, select_action, ActionView, SelectKind};
use trialwise::solution::{init_global, init_local, LocalConfig, Prior, SolutionConfig, SolutionType, InitScheme, Step, TraceRecord};
use trialwise::update::{eligibility_weight, local_update, policy_gradient_step, Baseline, LocalUpdateRule};

fn view<'a>(q: &'a [f64], n_sa: &'a [u64]) -> ActionView<'a> {
    ActionView {
        q,
        n_sa,
        n_s: n_sa.iter().sum(),
        novelty_counts: n_sa,
        force_untried: false,
        ordered_index: 0,
        policy: None,
        step: 0,
    }
}

/// Random MDP: the last state is terminal, every other pair has 1 to 3 successors.
fn arb_mdp() -> impl Strategy<Value = TabularMdp> {
    (2usize..6, 1usize..4, 0.0f64..0.99).prop_flat_map(|(n, m, gamma)| {
        let pairs = (n - 1) * m;
        proptest::collection::vec(
            proptest::collection::vec((0..n, 0.05f64..1.0, -5.0f64..5.0), 1..4),
            pairs,
        )
        .prop_map(move |rows| {
            let mut b = MdpBuilder::new(n, m, gamma);
            for (idx, row) in rows.iter().enumerate() {
                let mut seen = BTreeSet::new();
                let row: Vec<_> = row.iter().filter(|t| seen.insert(t.0)).collect();
                let z: f64 = row.iter().map(|t| t.1).sum();
                for t in row {
                    b.transition(idx / m, idx % m, t.0, t.1 / z, t.2);
                }
            }
            b.terminal(n - 1).initial(0, 1.0);
            b.build().unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn argmax_ignores_a_common_shift(q in proptest::collection::vec(-1e3f64..1e3, 1..8), c in -1e3f64..1e3) {
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        let a = argmax(q.iter().copied());
        let b = argmax(shifted.iter().copied());
        // a shift can merge near-ties through rounding; the chosen value stays maximal
        prop_assert!(a == b || (q[a] + c - shifted[b]).abs() <= 1e-9 * (1.0 + c.abs()));
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(q[a], max);
        prop_assert!(q[..a].iter().all(|&x| x < max));
    }

    #[test]
    fn boltzmann_is_a_distribution(q in proptest::collection::vec(-1e4f64..1e4, 1..8), t in 0.01f64..100.0) {
        let p = boltzmann_probs(&q, t);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
        for i in 0..q.len() {
            for j in 0..q.len() {
                if q[i] > q[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn ucb_tries_unvisited_actions_first(
        q in proptest::collection::vec(-1e3f64..1e3, 2..8),
        counts in proptest::collection::vec(0u64..5, 2..8),
        c in 0.0f64..5.0,
    ) {
        let m = q.len().min(counts.len());
        let (q, counts) = (&q[..m], &counts[..m]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = select_action(SelectKind::Ucb { c }, &view(q, counts), None, &mut rng);
        if counts.contains(&0) {
            prop_assert_eq!(counts[a], 0);
        }
    }

    #[test]
    fn average_rule_is_the_arithmetic_mean(targets in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
        let mut v = 123.0;
        for (i, &t) in targets.iter().enumerate() {
            v = local_update(LocalUpdateRule::Average, v, t, i as u64 + 1, 1);
        }
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        prop_assert!((v - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
    }

    #[test]
    fn eligibility_weights_and_tail_sum_to_one(lambda in 0.0f64..1.0, depth in 1usize..40) {
        let head: f64 = (1..=depth).map(|d| eligibility_weight(lambda, d)).sum();
        prop_assert!((head + lambda.powi(depth as i32) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_max_is_expected_under_a_point_mass(q in proptest::collection::vec(-1e3f64..1e3, 1..8)) {
        let children: Vec<Option<f64>> = q.iter().copied().map(Some).collect();
        let mut point = vec![0.0; q.len()];
        point[argmax(q.iter().copied())] = 1.0;
        let g = policy_backup(PolicyBackup::GreedyMax, &children, None, None).unwrap();
        let e = policy_backup(PolicyBackup::Expected, &children, None, Some(&point)).unwrap();
        prop_assert_eq!(g, e);
        let split = policy_backup(PolicyBackup::Expected, &children, None, Some(&greedy_probs(&q))).unwrap();
        prop_assert!((split - g).abs() <= 1e-12 * (1.0 + g.abs()));
    }

    #[test]
    fn mdp_text_round_trip(mdp in arb_mdp()) {
        let text = emit_mdp(&mdp);
        let back = load_mdp(&text).unwrap();
        prop_assert_eq!(&back, &mdp);
        prop_assert_eq!(emit_mdp(&back), text);
    }

    #[test]
    fn model_estimates_are_distributions(
        obs in proptest::collection::vec((0usize..4, 0usize..2, 0usize..4, -3.0f64..3.0), 1..60),
    ) {
        let mut model = LearnedTabularModel::new(4, 2, 0.9);
        for &(s, a, next, r) in &obs {
            model.observe(s, a, next, r, false);
        }
        prop_assert!(model.check_invariants());
        for s in 0..4 {
            for a in 0..2 {
                match model.estimate(s, a) {
                    Ok(QueryResult::Distribution(d)) => {
                        prop_assert!(model.is_visited(s, a));
                        prop_assert!((d.iter().map(|t| t.prob).sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                    Ok(other) => prop_assert!(false, "{:?}", other),
                    Err(_) => prop_assert!(!model.is_visited(s, a)),
                }
            }
        }
        for next in 0..4 {
            let got: BTreeSet<(usize, usize)> = model.predecessors(next).iter().map(|&(s, a, _)| (s, a)).collect();
            let want: BTreeSet<(usize, usize)> =
                obs.iter().filter(|o| o.2 == next).map(|o| (o.0, o.1)).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn handles_replay_under_the_same_seed(mdp in arb_mdp(), seed in any::<u64>()) {
        let draw = |seed| {
            let mut h = AccessHandle::new(&mdp, AccessMode::SettableGenerative, seed);
            let mut out = Vec::new();
            for i in 0..50 {
                let s = i % (mdp.n_states() - 1);
                out.push(h.query_generative(s, i % mdp.n_actions()).unwrap());
            }
            out
        };
        prop_assert_eq!(draw(seed), draw(seed));
    }

    #[test]
    fn ordered_roots_visit_every_state_once_per_sweep(n in 1usize..30) {
        let mut roots = RootStrategy::new(RootKind::Ordered);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = vec![roots.cursor()];
        for _ in 1..n {
            match roots.next_root(n, &mut rng) {
                NextRoot::State(s) => seen.push(s),
                NextRoot::Done => prop_assert!(false),
            }
        }
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn backward_queue_pops_in_priority_order(
        pushes in proptest::collection::vec((0usize..20, 0.0f64..10.0), 0..60),
        threshold in 0.0f64..1.0,
    ) {
        let mut roots = RootStrategy::new(RootKind::BackwardSampling { threshold });
        for &(s, d) in &pushes {
            roots.push_state(s, d);
        }
        let mut popped = Vec::new();
        let mut last = f64::INFINITY;
        while roots.queue_len() > 0 {
            let top = (0..20).filter_map(|s| roots.priority_of(s)).fold(f64::NEG_INFINITY, f64::max);
            let s = roots.pop_priority().unwrap();
            prop_assert!(top <= last);
            prop_assert!(top > threshold);
            last = top;
            popped.push(s);
        }
        let unique: BTreeSet<usize> = popped.iter().copied().collect();
        prop_assert_eq!(unique.len(), popped.len());
        let expected: BTreeSet<usize> = pushes.iter().filter(|p| p.1 > threshold).map(|p| p.0).collect();
        prop_assert_eq!(unique, expected);
    }

    #[test]
    fn walk_back_reproduces_the_trace_returns(
        raw in proptest::collection::vec((0usize..9, 0usize..2, -2.0f64..2.0), 1..12),
    ) {
        let mdp = make_chain(10, 0.9);
        let steps: Vec<Step> = raw.iter().map(|&(s, a, r)| Step { s, a, r, next: s + 1 }).collect();
        let trace = TraceRecord::new(steps, 0.0, mdp.gamma());
        let op = BackupOp { policy: PolicyBackup::OnPolicySample, dynamics: DynamicsBackup::Sample, extras: Extras::default() };
        let global = init_global(
            &SolutionConfig::global(SolutionType::V, InitScheme::Uniform { value: 0.0 }),
            10,
            2,
            &Prior { optimistic: 10.0, heuristic: None },
        )
        .unwrap();
        let local = init_local(raw[0].0, None, LocalConfig::default(), 2, 0.0, vec![0.0; 2]);
        // a non-terminal leaf bootstraps from zero, matching the trace's leaf value
        let last = trace.steps.last().unwrap().next;
        prop_assume!(!mdp.is_terminal(last));
        let out = walk_back(&trace, &op, &BootstrapFn::zero(Location::State), &local, &global, &mdp).unwrap();
        prop_assert_eq!(out.len(), 2 * trace.depth);
        prop_assert_eq!(out.last().unwrap().value, trace.return_estimates[0]);
        for (i, pair) in out.chunks(2).enumerate() {
            prop_assert_eq!(pair[0].source_depth, i + 1);
            prop_assert_eq!(pair[0].value, pair[1].value);
        }
    }

    #[test]
    fn policy_gradient_stays_finite(
        steps in proptest::collection::vec((0usize..3, -1e3f64..1e3), 1..200),
        eta in 0.0f64..1.0,
    ) {
        let mut global = init_global(
            &SolutionConfig::global(SolutionType::Policy, InitScheme::Uniform { value: 0.0 }),
            1,
            3,
            &Prior { optimistic: 1.0, heuristic: None },
        )
        .unwrap();
        for &(a, g) in &steps {
            policy_gradient_step(&mut global, 0, a, g, eta, Baseline::None);
        }
        let p = global.policy_probs(0);
        prop_assert!(p.iter().all(|x| x.is_finite()));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(!global.has_non_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn epsilon_greedy_frequencies_match_its_distribution(
        q in proptest::collection::vec(-10.0f64..10.0, 2..6),
        eps in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let counts = vec![1u64; q.len()];
        let v = view(&q, &counts);
        let kind = SelectKind::EpsilonGreedy { eps };
        let probs = action_distribution(kind, &v, None);
        let n = 20_000;
        let mut hits = vec![0usize; q.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            hits[select_action(kind, &v, None, &mut rng)] += 1;
        }
        for (a, &p) in probs.iter().enumerate() {
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            prop_assert!((hits[a] as f64 / n as f64 - p).abs() <= 4.5 * sd + 1e-12, "action {}", a);
        }
    }

    #[test]
    fn generative_samples_follow_the_distribution(mdp in arb_mdp(), seed in any::<u64>()) {
        let mut h = AccessHandle::new(&mdp, AccessMode::SettableGenerative, seed);
        let n = 4000;
        let dist = mdp.transitions(0, 0).to_vec();
        let mut hits = vec![0usize; mdp.n_states()];
        for _ in 0..n {
            match h.query_generative(0, 0).unwrap() {
                QueryResult::Sample { next, reward } => {
                    let t = dist.iter().find(|t| t.next == next).unwrap();
                    prop_assert_eq!(t.reward, reward);
                    hits[next] += 1;
                }
                other => prop_assert!(false, "{:?}", other),
            }
        }
        for t in &dist {
            let sd = (t.prob * (1.0 - t.prob) / n as f64).sqrt();
            prop_assert!((hits[t.next] as f64 / n as f64 - t.prob).abs() <= 4.5 * sd + 1e-12);
        }
    }
}
