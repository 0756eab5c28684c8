//! Paraphrase diversity scoring.

/// Bonus threshold; a paraphrase must be strictly further than this.
pub const BONUS_THRESHOLD: f64 = 0.7;

fn normalize(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Character Levenshtein distance between the lowercased,
/// whitespace-collapsed strings.
pub fn edit_distance(a: &str, b: &str) -> usize {
    strsim::levenshtein(&normalize(a), &normalize(b))
}

/// [`edit_distance`] over the longer normalized length; 0 for two empty
/// strings.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize(a), normalize(b));
    let n = a.chars().count().max(b.chars().count());
    if n == 0 {
        0.0
    } else {
        strsim::levenshtein(&a, &b) as f64 / n as f64
    }
}

pub fn diversity_bonus(ned: f64) -> bool {
    ned > BONUS_THRESHOLD
}
