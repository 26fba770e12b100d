use std::collections::HashMap;

use crate::data::tokenize::is_punct_char;

/// Lowercases and strips punctuation; tokens that become empty are dropped.
pub fn normalize_answer<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            t.as_ref()
                .chars()
                .filter(|c| !is_punct_char(*c))
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Multiset token F1 after normalization. Both empty gives 1, one empty 0.
pub fn f1_score<A: AsRef<str>, B: AsRef<str>>(pred: &[A], gold: &[B]) -> f64 {
    let pred = normalize_answer(pred);
    let gold = normalize_answer(gold);
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for g in &gold {
        *counts.entry(g).or_default() += 1;
    }
    let mut overlap = 0usize;
    for p in &pred {
        if let Some(c) = counts.get_mut(p.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    // 2PR/(P+R) with P = o/|pred|, R = o/|gold|, as one correctly rounded division.
    (2 * overlap) as f64 / (pred.len() + gold.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        assert_eq!(f1_score(&["the", "red", "house"], &["red", "house"]), 0.8);
    }

    #[test]
    fn empties() {
        let e: [&str; 0] = [];
        assert_eq!(f1_score(&e, &e), 1.0);
        assert_eq!(f1_score(&e, &["a"]), 0.0);
        assert_eq!(f1_score(&["a"], &e), 0.0);
        assert_eq!(f1_score(&["."], &["!"]), 1.0);
    }

    #[test]
    fn multiset_semantics() {
        // overlap min(2,1)=1: P=1/2, R=1
        assert_eq!(f1_score(&["a", "a"], &["a"]), 2.0 / 3.0);
        assert_eq!(f1_score(&["Barn", "."], &["barn"]), 1.0);
    }
}
