//! Option lists with exactly one correct entry.

use rand::seq::SliceRandom;
use rand::Rng;

use super::QaError;

/// Multiplicative offsets tried, in order, for numeric distractors.
pub const NUMERIC_FACTORS: [f64; 4] = [0.5, 0.75, 1.5, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistractorPolicy {
    /// Scaled copies of the answer, distinct after rounding to 0.1.
    Numeric,
    /// Sampled from a pool of alternative labels.
    Categorical,
}

pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Builds `k + 1` shuffled options and the index of the correct one.
///
/// Numeric policy parses `correct` as a number and ignores `pool`; it takes
/// the first `k` factor multiples that are distinct after rounding.
/// Categorical policy samples `k` distinct pool entries other than
/// `correct`.
pub fn make_distractors<R: Rng>(
    correct: &str,
    pool: &[String],
    k: usize,
    policy: DistractorPolicy,
    rng: &mut R,
) -> Result<(Vec<String>, usize), QaError> {
    let mut options = vec![correct.to_owned()];
    match policy {
        DistractorPolicy::Numeric => {
            let value: f64 =
                correct.parse().map_err(|_| QaError::InsufficientDistractors { needed: k, available: 0 })?;
            let mut values = vec![round1(value)];
            for f in NUMERIC_FACTORS {
                if values.len() > k {
                    break;
                }
                let v = round1(value * f);
                if v > 0.0 && !values.iter().any(|x| (x - v).abs() < 1e-9) {
                    values.push(v);
                }
            }
            if values.len() <= k {
                return Err(QaError::InsufficientDistractors { needed: k, available: values.len() - 1 });
            }
            options = values.iter().map(|v| format!("{v:.1}")).collect();
        }
        DistractorPolicy::Categorical => {
            let mut alternatives: Vec<&String> = Vec::new();
            for p in pool {
                if p != correct && !alternatives.contains(&p) {
                    alternatives.push(p);
                }
            }
            if alternatives.len() < k {
                return Err(QaError::InsufficientDistractors { needed: k, available: alternatives.len() });
            }
            options.extend(alternatives.choose_multiple(rng, k).map(|s| (*s).clone()));
        }
    }
    let correct_text = options[0].clone();
    options.shuffle(rng);
    let idx = options.iter().position(|o| *o == correct_text).unwrap();
    Ok((options, idx))
}

/// Shuffles fixed options; returns the new index of `correct`.
pub fn shuffle_options<R: Rng>(mut options: Vec<String>, correct: usize, rng: &mut R) -> (Vec<String>, usize) {
    let text = options[correct].clone();
    options.shuffle(rng);
    let idx = options.iter().position(|o| *o == text).unwrap();
    (options, idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    #[test]
    fn numeric_policy_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (opts, idx) = make_distractors("2.0", &[], 3, DistractorPolicy::Numeric, &mut rng).unwrap();
        let set: BTreeSet<&str> = opts.iter().map(String::as_str).collect();
        assert_eq!(set, BTreeSet::from(["1.0", "1.5", "2.0", "3.0"]));
        assert_eq!(opts[idx], "2.0");
    }

    #[test]
    fn numeric_policy_too_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            make_distractors("0.1", &[], 3, DistractorPolicy::Numeric, &mut rng),
            Err(QaError::InsufficientDistractors { .. })
        ));
    }

    #[test]
    fn categorical_quadrants() {
        let pool: Vec<String> =
            ["front-left", "front-right", "back-left", "back-right"].into_iter().map(String::from).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (opts, idx) = make_distractors("back-left", &pool, 3, DistractorPolicy::Categorical, &mut rng).unwrap();
        assert_eq!(opts.iter().collect::<BTreeSet<_>>(), pool.iter().collect::<BTreeSet<_>>());
        assert_eq!(opts[idx], "back-left");
    }

    #[test]
    fn binary_pool_is_insufficient() {
        let pool = vec!["above".to_owned(), "below".to_owned()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            make_distractors("above", &pool, 3, DistractorPolicy::Categorical, &mut rng),
            Err(QaError::InsufficientDistractors { needed: 3, available: 1 })
        );
    }

    #[test]
    fn seeded_order_is_reproducible() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            make_distractors("2.0", &[], 3, DistractorPolicy::Numeric, &mut rng).unwrap()
        };
        assert_eq!(run(5), run(5));
    }
}
