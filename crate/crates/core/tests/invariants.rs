use kinfer::abc::distance;
use kinfer::diagnostics::{compute_ess, quantile};
use kinfer::filter::{multinomial_resample, systematic_resample};
use kinfer::model::{NoiseSd, ObservationModel, ObservedDataset};
use kinfer::pmcmc::{thin_chain, ChainTrace, ProposalSpec};
use kinfer::rng::seeded;
use kinfer::{BudgetLedger, Phase};
use proptest::prelude::*;

fn trace_of(values: &[f64]) -> ChainTrace {
    let mut csv = String::from("iteration,cumulative_budget,log_theta_1,log_estimate,accepted\n");
    for (i, v) in values.iter().enumerate() {
        csv.push_str(&format!("{i},{},{v},-1,{}\n", 10 * i, u8::from(i > 0)));
    }
    ChainTrace::read_csv(csv.as_bytes()).unwrap()
}

fn dataset(values: Vec<Vec<Option<f64>>>, observed: Vec<bool>) -> ObservedDataset {
    let times = (0..values.len()).map(|t| t as f64).collect();
    ObservedDataset::new(
        times,
        values,
        ObservationModel::new(NoiseSd::Known(1.0), observed).unwrap(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn ledger_never_exceeds_capacity(capacity in 0u64..500, charges in prop::collection::vec(0u64..80, 0..40)) {
        let ledger = BudgetLedger::new(capacity);
        let mut accepted = 0;
        for (i, &c) in charges.iter().enumerate() {
            ledger.set_phase(if i % 2 == 0 { Phase::Main } else { Phase::Pilot });
            let before = ledger.consumed();
            match ledger.charge(c) {
                Ok(()) => accepted += c,
                Err(_) => prop_assert_eq!(ledger.consumed(), before),
            }
            prop_assert!(ledger.consumed() <= capacity);
        }
        prop_assert_eq!(ledger.consumed(), accepted);
        prop_assert_eq!(ledger.consumed_in(Phase::Main) + ledger.consumed_in(Phase::Pilot), accepted);
        prop_assert_eq!(ledger.remaining(), capacity - accepted);
    }

    #[test]
    fn resampling_picks_only_weighted_particles(
        weights in prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..10.0], 1..30),
        n in 1usize..200,
        seed in any::<u64>(),
    ) {
        prop_assume!(weights.iter().any(|w| *w > 0.0));
        for idx in [
            multinomial_resample(&weights, n, &mut seeded(seed)).unwrap(),
            systematic_resample(&weights, n, &mut seeded(seed)).unwrap(),
        ] {
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.iter().all(|&i| i < weights.len() && weights[i] > 0.0));
        }
    }

    #[test]
    fn systematic_counts_stay_within_one_of_expectation(
        weights in prop::collection::vec(0.01f64..10.0, 1..20),
        n in 1usize..300,
        seed in any::<u64>(),
    ) {
        let total: f64 = weights.iter().sum();
        let idx = systematic_resample(&weights, n, &mut seeded(seed)).unwrap();
        for (i, w) in weights.iter().enumerate() {
            let count = idx.iter().filter(|&&j| j == i).count() as f64;
            prop_assert!((count - n as f64 * w / total).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn distance_is_masked_sum_of_squares(
        rows in prop::collection::vec((-50f64..50.0, -50f64..50.0, -50f64..50.0, -50f64..50.0), 1..12),
        observe_second in any::<bool>(),
    ) {
        let observed = vec![true, observe_second];
        let cell = |v: f64, s: usize| if observed[s] { Some(v) } else { None };
        let d = dataset(rows.iter().map(|r| vec![cell(r.0, 0), cell(r.1, 1)]).collect(), observed.clone());
        let c = dataset(rows.iter().map(|r| vec![cell(r.2, 0), cell(r.3, 1)]).collect(), observed.clone());
        let expected: f64 = rows
            .iter()
            .map(|r| (r.0 - r.2).powi(2) + if observe_second { (r.1 - r.3).powi(2) } else { 0.0 })
            .sum();
        let got = distance(&d, &c).unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.max(1.0));
        prop_assert_eq!(distance(&d, &d).unwrap(), 0.0);
        prop_assert_eq!(got, distance(&c, &d).unwrap());
    }

    #[test]
    fn thinning_keeps_endpoints_in_order(len in 2usize..400, frac in 0.0f64..1.0) {
        let values: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let k = 2 + ((len - 2) as f64 * frac) as usize;
        let thinned = thin_chain(&trace_of(&values), k).unwrap();
        let kept = thinned.coordinate(0);
        prop_assert_eq!(kept.len(), k);
        prop_assert_eq!(kept[0], 0.0);
        prop_assert_eq!(kept[k - 1], (len - 1) as f64);
        prop_assert!(kept.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(thinned.budget_marks.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn quantile_is_monotone_and_bounded(
        values in prop::collection::vec(-1e3f64..1e3, 1..60),
        a in 0.0f64..=1.0,
        b in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (ql, qh) = (quantile(&values, lo), quantile(&values, hi));
        prop_assert!(ql <= qh);
        prop_assert!(min <= ql && qh <= max);
        prop_assert_eq!(quantile(&values, 0.0), min);
        prop_assert_eq!(quantile(&values, 1.0), max);
    }

    #[test]
    fn ess_lies_between_one_and_length(values in prop::collection::vec(-5f64..5.0, 10..300)) {
        let ess = compute_ess(&values).unwrap();
        prop_assert!((1.0..=values.len() as f64).contains(&ess));
    }

    #[test]
    fn random_walk_density_is_symmetric(
        var in prop::collection::vec(0.01f64..4.0, 1..4),
        seed in any::<u64>(),
    ) {
        let d = var.len();
        let rows: Vec<Vec<f64>> =
            (0..d).map(|i| (0..d).map(|j| if i == j { var[i] } else { 0.1 * (var[i] * var[j]).sqrt() }).collect()).collect();
        let spec = ProposalSpec::from_rows(&rows).unwrap();
        let mut rng = seeded(seed);
        let from = vec![0.3; d];
        let to = spec.propose(&from, &mut rng);
        let (fwd, back) = (spec.log_density(&to, &from), spec.log_density(&from, &to));
        prop_assert!((fwd - back).abs() < 1e-10);
    }
}
