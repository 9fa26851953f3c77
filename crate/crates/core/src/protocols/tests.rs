use super::*;
use crate::distproc::centralized_pipeline;

fn small(pairs: usize, seed: u64) -> Scenario {
    Scenario {
        pairs,
        pulses: 1200,
        qber: 0.02,
        params: PipelineParams { eps_cor: 1e-6, eps_pa: 1e-6, ..Default::default() },
        seed,
        ..Default::default()
    }
}

fn oracle(sc: &Scenario, pair: usize, params: &PipelineParams, report: &PairReport) -> PipelineOutcome {
    let mut seeds = [report.hv_seed.clone(), report.hp_seed.clone()].into_iter().flatten();
    centralized_pipeline(&sc.session(pair).unwrap(), params, sc.ec_seed(pair), |len| {
        seeds.next().filter(|s| s.len() == len).unwrap_or_else(|| BitString::zeros(len))
    })
    .unwrap()
}

#[test]
fn protocol1_lengths() {
    let sc = Scenario { t: 1, ..small(3, 1) };
    let o = protocol1(&sc).unwrap();
    assert!(o.success());
    assert_eq!(o.m, 3);
    assert_eq!(o.final_len, 2 * o.n_len);
    assert!(o.keys_agree());
    assert_eq!(o.key_a.as_ref().unwrap().len(), o.final_len);

    let sc = Scenario { t: 1, modules: vec![ModuleBehavior::Honest, ModuleBehavior::AbortForcing], ..small(2, 2) };
    let o = protocol1(&sc).unwrap();
    assert_eq!((o.m, o.final_len), (1, 0));
    assert!(!o.success());

    let sc = Scenario { t: 2, ..small(2, 2) };
    assert_eq!(protocol1(&sc).unwrap().final_len, 0);
    assert!(protocol1(&Scenario { t: 3, ..small(2, 2) }).is_err());
}

#[test]
fn protocol1_extract_checks_lengths() {
    let keys = vec![BitString::from_u64(1, 2), BitString::from_u64(2, 2)];
    let out = protocol1_extract(&keys, 1, &BitString::zeros(extractor_seed_len(2, 2, 1))).unwrap();
    assert_eq!(out.len(), 2);
    assert!(protocol1_extract(&[BitString::zeros(2), BitString::zeros(3)], 1, &BitString::zeros(4)).is_err());
}

#[test]
fn protocol2_matches_trusted_pipeline() {
    let sc = small(1, 7);
    let o = protocol2(&sc).unwrap();
    assert!(o.success(), "{:?}", o.abort);
    assert!(o.keys_agree());
    assert!(o.honest_consistent);
    let c = oracle(&sc, 0, &sc.params, &o.pairs[0]);
    assert_eq!(c.abort, None);
    assert_eq!(o.key_a.as_ref(), Some(&c.key_a));
    assert_eq!(o.final_len, c.out_len);
    assert_eq!(o.leak_ec, c.leak);
}

#[test]
fn protocol2_absorbs_one_lying_bob_unit() {
    let honest = protocol2(&small(1, 8)).unwrap();
    for strat in [StrategyKind::FlipAll, StrategyKind::ConstOne, StrategyKind::Silent] {
        let sc = Scenario {
            corruption: vec![(PartyId::cp_b(2), CorruptionSpec::Active(strat.clone()))],
            ..small(1, 8)
        };
        let o = protocol2(&sc).unwrap();
        assert!(o.honest_consistent, "{strat:?}");
        assert_eq!(o.abort, honest.abort, "{strat:?}");
        assert_eq!(o.key_a, honest.key_a, "{strat:?}");
        assert_eq!(o.key_b, honest.key_b, "{strat:?}");
        assert_eq!(o.leak_ec, honest.leak_ec);
    }
}

#[test]
fn protocol2_rejects_infeasible_labs() {
    let sc = Scenario { t_b: 2, ..small(1, 0) };
    assert!(matches!(protocol2(&sc), Err(Error::Infeasible(_))));
    let sc = Scenario {
        corruption: vec![
            (PartyId::cp_b(1), CorruptionSpec::Active(StrategyKind::FlipAll)),
            (PartyId::cp_b(2), CorruptionSpec::Active(StrategyKind::FlipAll)),
        ],
        ..small(1, 0)
    };
    assert!(matches!(protocol2(&sc), Err(Error::IllegalCorruption(_))));
}

#[test]
fn protocol3_lengths_and_agreement() {
    let sc = Scenario { t: 1, ..small(3, 3) };
    let o = protocol3(&sc).unwrap();
    assert!(o.success(), "{:?}", o.abort);
    assert_eq!(o.m, 3);
    assert_eq!(o.final_len, 2 * o.n_len);
    assert!(o.keys_agree());
    assert_eq!(o.key_a.as_ref().unwrap().len(), o.final_len);
}

#[test]
fn naive_breaks_where_protocol3_holds() {
    let honest = Scenario { t: 1, ..small(4, 5) };
    let o = naive_demo(&honest).unwrap();
    assert!(o.keys_agree());
    let corrupt = Scenario {
        corruption: vec![
            (PartyId::qkd_a(1), CorruptionSpec::Passive),
            (PartyId::qkd_b(1), CorruptionSpec::Passive),
            (PartyId::cp_a(1), CorruptionSpec::Passive),
            (PartyId::cp_b(1), CorruptionSpec::Active(StrategyKind::FlipAll)),
        ],
        ..honest
    };
    let o = naive_demo(&corrupt).unwrap();
    assert!(o.key_a.is_some() && !o.keys_agree());
    let o = protocol3(&corrupt).unwrap();
    assert!(o.success() && o.keys_agree(), "{:?}", o.abort);
}

#[test]
fn alt_protocol_length_and_ratio() {
    let sc = Scenario { units_a: 4, units_b: 4, t_a: 1, t_b: 1, ..small(4, 6) };
    let o = alt_protocol(&sc).unwrap();
    assert!(o.success(), "{:?}", o.abort);
    assert!(o.keys_agree());
    let h = sc.params.hash_len();
    assert_eq!(o.final_len, (o.m - 2) * o.n_len - h);
    assert_eq!(o.repeat_ratio.unwrap() * o.final_len as f64, (4 * o.n_len) as f64);
    let (lhs, rhs) = (4 * o.n_len, o.final_len + h);
    assert_eq!(lhs, 2 * rhs);
    for i in 0..4 {
        let p2 = protocol2_session(&sc, i).unwrap();
        assert_eq!(p2.final_len, o.pairs[i].out_len);
    }
}

#[test]
fn general_structures_reduce_to_thresholds() {
    let sc = Scenario { t: 1, ..small(3, 9) };
    let general = Scenario {
        general: Some(GeneralAdversary {
            pairs: Some(crate::adversary::threshold_structure(3, 1).unwrap()),
            lab_a: Some(MixedAdversary::threshold(4, 1).unwrap()),
            lab_b: Some(MixedAdversary::threshold(4, 1).unwrap()),
            prune_aborted: false,
        }),
        ..sc.clone()
    };
    for kind in [ProtocolKind::Protocol1, ProtocolKind::Protocol3] {
        let a = run(&sc, kind).unwrap();
        let b = run(&general, kind).unwrap();
        assert_eq!((a.key_a, a.key_b, a.final_len), (b.key_a, b.key_b, b.final_len), "{kind:?}");
    }
    let a = protocol2(&small(1, 9)).unwrap();
    let labs = GeneralAdversary { pairs: None, ..general.general.clone().unwrap() };
    let b = protocol2(&Scenario { general: Some(labs), ..small(1, 9) }).unwrap();
    assert_eq!((a.key_a, a.final_len), (b.key_a, b.final_len));
}

#[test]
fn general_pair_penalty() {
    let sigma = Structure::from_lists(4, &[vec![1, 2]]).unwrap();
    let sc = Scenario {
        general: Some(GeneralAdversary { pairs: Some(sigma.clone()), ..Default::default() }),
        ..small(4, 4)
    };
    let o = protocol1(&sc).unwrap();
    assert_eq!(o.t_used, 2);
    assert_eq!(o.final_len, (o.m - 2) * o.n_len);

    let pruned = Scenario {
        modules: vec![ModuleBehavior::Honest, ModuleBehavior::AbortForcing],
        general: Some(GeneralAdversary { pairs: Some(sigma), prune_aborted: true, ..Default::default() }),
        ..small(4, 4)
    };
    let o = protocol1(&pruned).unwrap();
    assert_eq!((o.m, o.t_used), (3, 1));
    assert_eq!(o.final_len, (o.m - 1) * o.n_len);
}

#[test]
fn extractor_census_small() {
    let c = extractor_uniformity(2, 2, 1, &[1]).unwrap();
    assert_eq!(c.seeds, 32);
    assert_eq!(c.failures, 0);
    assert!(c.rank_deficient < 32);
}

#[test]
fn memory_attack_baseline_recovers_bits() {
    let sc = Scenario { pulses: 3000, ..small(1, 12) };
    let d = memory_attack_demo(&sc, 4, &[]).unwrap();
    assert_eq!(d.bits_recovered, 4);
    assert_eq!(d.recovered, d.planted);
}
