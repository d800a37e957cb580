mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stitch::diff::align_blocks_lcs;

use common::{brute_force_cost, random_seq, seq};

fn check(seed: u64, n: usize, m: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_seq(&mut rng, n, 0);
    let t = random_seq(&mut rng, m, 0);
    let script = align_blocks_lcs(&seq(s.clone()), &seq(t.clone()));
    assert_eq!(script.cost(), brute_force_cost(&s, &t), "seed {seed}");
    assert_eq!(script.apply(&s), t, "seed {seed}: script does not produce the target");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn edit_cost_is_minimal(seed in any::<u64>(), n in 0usize..=8, m in 0usize..=8) {
        check(seed, n, m);
    }
}

#[test]
fn identical_sequences_cost_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = random_seq(&mut rng, 8, 0);
    assert!(align_blocks_lcs(&seq(s.clone()), &seq(s)).is_empty());
}

#[test]
fn disjoint_sequences_cost_both_lengths() {
    use stitch::corpus::b;
    let s = vec![b("looks_show"), b("looks_show")];
    let t = vec![b("looks_hide")];
    assert_eq!(align_blocks_lcs(&seq(s.clone()), &seq(t.clone())).cost(), 3);
    assert_eq!(brute_force_cost(&s, &t), 3);
}
