use std::collections::HashMap;
use std::hash::Hash;

/// Adjusted Rand index between two labelings of the same items.
///
/// 1 for identical partitions (up to renaming), about 0 for independent ones.
/// Two single-cluster labelings count as identical.
pub fn adjusted_rand_index<A: Eq + Hash, B: Eq + Hash>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let pairs = |n: u64| n * n.saturating_sub(1) / 2;
    let mut table: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index = table.values().map(|&n| pairs(n)).sum::<u64>() as f64;
    let sum_a = rows.values().map(|&n| pairs(n)).sum::<u64>() as f64;
    let sum_b = cols.values().map(|&n| pairs(n)).sum::<u64>() as f64;
    let total = pairs(a.len() as u64) as f64;
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
