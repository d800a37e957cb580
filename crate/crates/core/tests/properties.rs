mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stitch::corpus::{mutate, perturb_literal, scale_project, seeded_pairs};
use stitch::diff::diff_projects;
use stitch::llm::{enforce_word_limit, word_count};
use stitch::normalize::normalize;
use stitch::sb3::{load_project, serialize_project, write_sb3};
use stitch::session::run_fix_loop;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loading_arbitrary_bytes_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..2048)) {
        let _ = load_project(&bytes);
    }

    #[test]
    fn loading_corrupted_documents_never_panics(k in 0usize..10, flips in proptest::collection::vec((any::<usize>(), any::<u8>()), 1..20)) {
        let mut doc = serialize_project(&seeded_pairs()[k].teacher).into_bytes();
        for (at, byte) in flips {
            let n = doc.len();
            doc[at % n] = byte;
        }
        let _ = load_project(&doc);
    }

    #[test]
    fn loading_corrupted_containers_never_panics(k in 0usize..10, flips in proptest::collection::vec((any::<usize>(), any::<u8>()), 1..8)) {
        let mut sb3 = write_sb3(&seeded_pairs()[k].teacher, &[]).unwrap();
        for (at, byte) in flips {
            let n = sb3.len();
            sb3[at % n] = byte;
        }
        let _ = load_project(&sb3);
    }

    #[test]
    fn word_limit_holds(seed in any::<u64>(), max in 1usize..120) {
        let text = common::fuzz_output(&mut ChaCha8Rng::seed_from_u64(seed));
        let out = enforce_word_limit(&text, max);
        prop_assert!(word_count(&out) <= max);
        prop_assert_eq!(enforce_word_limit(&out, max), out.clone());
        if word_count(&text) <= max {
            prop_assert_eq!(word_count(&out), word_count(&text));
        }
    }

    #[test]
    fn normalize_is_idempotent(seed in any::<u64>()) {
        let p = mutate::equivalent_variant(&scale_project(seed % 50, 4, 60), seed);
        let once = normalize(&p).unwrap().project;
        let twice = normalize(&once).unwrap().project;
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn self_diff_is_clean(seed in 0u64..1000) {
        let p = scale_project(seed, 4, 60);
        let r = diff_projects(&p, &p).unwrap();
        prop_assert!(r.functionally_equivalent);
        prop_assert!(r.items.is_empty());
    }

    #[test]
    fn equivalent_variants_diff_clean(seed in any::<u64>(), k in 0usize..10) {
        let f = &seeded_pairs()[k];
        let v = mutate::equivalent_variant(&f.teacher, seed);
        let r = diff_projects(&v, &f.teacher).unwrap();
        prop_assert!(r.items.is_empty(), "{:?}", r.items.iter().map(|i| &i.message).collect::<Vec<_>>());
    }

    #[test]
    fn fix_loop_converges_on_perturbed_projects(seed in 0u64..500) {
        let teacher = scale_project(seed, 4, 60);
        let student = perturb_literal(&perturb_literal(&teacher, seed), seed + 1);
        let items = diff_projects(&student, &teacher).unwrap().items.len();
        let result = run_fix_loop(&student, &teacher, items + 2);
        prop_assert!(result.converged, "{:?}", result.error);
        prop_assert!(result.iterations <= items + 2);
    }

    #[test]
    fn container_round_trip_preserves_the_project(seed in 0u64..1000) {
        let p = scale_project(seed, 3, 40);
        let back = load_project(&write_sb3(&p, &[]).unwrap()).unwrap();
        prop_assert_eq!(serialize_project(&back), serialize_project(&p));
        prop_assert!(diff_projects(&back, &p).unwrap().items.is_empty());
    }

    #[test]
    fn reports_are_deterministic(k in 0usize..10, seed in 0u64..100) {
        let f = &seeded_pairs()[k];
        let s = mutate::equivalent_variant(&f.student, seed);
        let a = diff_projects(&s, &f.teacher).unwrap().to_json();
        let b = diff_projects(&s, &f.teacher).unwrap().to_json();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn seeded_bug_survives_structural_noise() {
    for seed in 0..20 {
        for f in seeded_pairs() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = mutate::noise(&f.student, &mut rng);
            let s = mutate::commute(&s, &mut rng);
            let s = mutate::double_negation(&mutate::de_morgan(&s, &mut rng), &mut rng);
            let r = diff_projects(&s, &f.teacher).unwrap();
            assert!(f.bug.matches(&r.items[0]), "{} seed {seed}: {:?}", f.name, r.items[0].id);
        }
    }
}
