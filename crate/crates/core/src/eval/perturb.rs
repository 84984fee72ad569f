//! Robustness of the entity normalizer to small misspellings: each
//! reference name is perturbed by random character edits and must map back
//! to itself.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::postprocess::EntityNormalizer;

const ALPHABET: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'k', 'l', 'm', 'n', 'o', 'p', 'r', 's', 't', 'u', 'v', 'y', ' ',
];

/// `edits` random substitutions, deletions or insertions.
pub fn perturb(rng: &mut impl Rng, name: &str, edits: usize) -> String {
    let mut chars: Vec<char> = name.chars().collect();
    for _ in 0..edits {
        let c = *ALPHABET.choose(rng).expect("non-empty");
        match rng.gen_range(0..3) {
            0 if !chars.is_empty() => {
                let i = rng.gen_range(0..chars.len());
                chars[i] = c;
            }
            1 if chars.len() > 1 => {
                chars.remove(rng.gen_range(0..chars.len()));
            }
            _ => chars.insert(rng.gen_range(0..=chars.len()), c),
        }
    }
    chars.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub trials: usize,
    pub rematched: usize,
    pub rate: f64,
}

/// For every name, `trials_per_name` perturbations of 1..=`max_edits`
/// edits; a trial succeeds when the normalizer returns the original name.
pub fn perturbation_harness(
    normalizer: &dyn EntityNormalizer,
    names: &[String],
    trials_per_name: usize,
    max_edits: usize,
    seed: u64,
) -> PerturbationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut trials, mut rematched) = (0, 0);
    for name in names {
        for _ in 0..trials_per_name {
            let edits = rng.gen_range(1..=max_edits.max(1));
            let noisy = perturb(&mut rng, name, edits);
            let r = normalizer.normalize_entity(&noisy);
            trials += 1;
            rematched += usize::from(r.matched && r.output == *name);
        }
    }
    PerturbationReport {
        trials,
        rematched,
        rate: if trials == 0 { 0.0 } else { rematched as f64 / trials as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::levenshtein_str;

    #[test]
    fn perturbation_stays_within_edit_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let edits = rng.gen_range(0..=3);
            let out = perturb(&mut rng, "Bach Mai Hospital", edits);
            assert!(levenshtein_str(&out, "Bach Mai Hospital") <= edits);
        }
    }
}
