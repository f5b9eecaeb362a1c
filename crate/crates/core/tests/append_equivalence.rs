//! Building and evaluating a stream in pieces gives the same graph and the
//! same times as doing it in one go.

mod common;

use aidg_perf::aidg::{build_aidg, AidgBuilder};
use aidg_perf::eval::evaluate;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chunked_build_and_eval_match(seed: u64, len in 1usize..120, cuts in prop::collection::vec(0usize..120, 0..4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_array(&mut rng, 3);
        let s = common::random_stream(&mut rng, &a.cfg, len);
        let b = a.model.issue_buffer_size();

        let whole = build_aidg(&a.model, &s).unwrap();
        let expected = evaluate(&whole, b, None).unwrap();

        let mut cuts: Vec<usize> = cuts.into_iter().map(|c| c % len).collect();
        cuts.push(len);
        cuts.sort_unstable();
        cuts.dedup();
        let mut builder = AidgBuilder::new(&a.model).unwrap();
        let mut prior = None;
        let mut from = 0;
        for to in cuts {
            builder.extend(&s[from..to]).unwrap();
            // A partial fetch block may still grow, so only evaluate on block boundaries.
            if to == len || to % a.cfg.instruction_port_width as usize == 0 {
                prior = Some(evaluate(builder.graph(), b, prior).unwrap());
            }
            let (g, state) = builder.into_parts();
            builder = AidgBuilder::resume(&a.model, g, state).unwrap();
            from = to;
        }
        prop_assert_eq!(builder.graph(), &whole);
        let got = prior.unwrap();
        prop_assert_eq!(&got.t_enter, &expected.t_enter);
        prop_assert_eq!(&got.t_leave, &expected.t_leave);
        prop_assert_eq!(got.visit_count, expected.visit_count);
    }
}

#[test]
fn evaluating_an_open_block_then_growing_it_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut a = common::random_array(&mut rng, 2);
    a.cfg.instruction_port_width = 2;
    let m = aidg_perf::model::systolic::generate_systolic_array(&a.cfg);
    let s = common::random_stream(&mut rng, &a.cfg, 3);
    let mut builder = AidgBuilder::new(&m).unwrap();
    builder.extend(&s[..1]).unwrap();
    let r = evaluate(builder.graph(), 1, None).unwrap();
    builder.extend(&s[1..]).unwrap();
    assert!(evaluate(builder.graph(), 1, Some(r)).is_err());
}
