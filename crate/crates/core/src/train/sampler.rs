use rand::Rng;

use crate::kg::{Side, Triple};

/// Replace the entity on `side` with a different entity drawn uniformly.
pub fn corrupt(t: Triple, side: Side, num_entities: usize, rng: &mut impl Rng) -> Triple {
    debug_assert!(num_entities >= 2);
    let draw = |orig: usize, rng: &mut dyn rand::RngCore| {
        let r = rng.random_range(0..num_entities - 1);
        if r >= orig {
            r + 1
        } else {
            r
        }
    };
    match side {
        Side::Subject => Triple::new(draw(t.subject, rng), t.predicate, t.object),
        Side::Object => Triple::new(t.subject, t.predicate, draw(t.object, rng)),
    }
}

/// `k` corruptions of `t`, each picking the corrupted side by a fair coin.
/// Corruptions are not filtered against known triples.
pub fn sample_negatives(t: Triple, k: usize, num_entities: usize, rng: &mut impl Rng, out: &mut Vec<Triple>) {
    for _ in 0..k {
        let side = if rng.random_bool(0.5) {
            Side::Subject
        } else {
            Side::Object
        };
        out.push(corrupt(t, side, num_entities, rng));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_entities_have_one_alternative() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(corrupt(Triple::new(0, 3, 1), Side::Subject, 2, &mut rng), Triple::new(1, 3, 1));
            assert_eq!(corrupt(Triple::new(0, 3, 1), Side::Object, 2, &mut rng), Triple::new(0, 3, 0));
        }
    }

    #[test]
    fn produces_k_valid_corruptions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Triple::new(4, 2, 9);
        let mut out = Vec::new();
        sample_negatives(t, 10, 135, &mut rng, &mut out);
        assert_eq!(out.len(), 10);
        for n in &out {
            assert_eq!(n.predicate, 2);
            let subj_changed = n.subject != t.subject;
            let obj_changed = n.object != t.object;
            assert!(subj_changed ^ obj_changed);
            assert!(n.subject < 135 && n.object < 135);
        }
    }

    #[test]
    fn side_choice_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Triple::new(0, 0, 1);
        let mut out = Vec::with_capacity(100_000);
        sample_negatives(t, 100_000, 50, &mut rng, &mut out);
        let subject_side = out.iter().filter(|n| n.subject != t.subject).count();
        let frac = subject_side as f64 / 100_000.0;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn replacement_is_uniform_over_other_entities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 5];
        for _ in 0..40_000 {
            counts[corrupt(Triple::new(2, 0, 0), Side::Subject, 5, &mut rng).subject] += 1;
        }
        assert_eq!(counts[2], 0);
        for (e, &c) in counts.iter().enumerate().filter(|(e, _)| *e != 2) {
            assert!((c as f64 / 10_000.0 - 1.0).abs() < 0.05, "entity {e}: {c}");
        }
    }
}
