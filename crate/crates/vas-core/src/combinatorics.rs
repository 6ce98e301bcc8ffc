//! Subset enumeration helpers for the exhaustive oracles.

use alloc::vec::Vec;

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn count_combinations(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Visit every size-`k` subset of `0..n` in lexicographic order.
pub fn for_each_combination<F: FnMut(&[usize])>(n: usize, k: usize, mut f: F) {
    if k > n {
        return;
    }
    if k == 0 {
        f(&[]);
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(count_combinations(12, 6), 924);
        assert_eq!(count_combinations(10, 0), 1);
        assert_eq!(count_combinations(4, 5), 0);
        assert_eq!(count_combinations(52, 5), 2_598_960);
    }

    #[test]
    fn enumeration_matches_count() {
        let mut seen = Vec::new();
        for_each_combination(5, 3, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 10);
        // lexicographic, distinct, strictly ascending members
        for w in seen.windows(2) {
            assert!(w[0] < w[1]);
        }
        for s in &seen {
            for w in s.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
        assert_eq!(seen[0], alloc::vec![0, 1, 2]);
        assert_eq!(seen[9], alloc::vec![2, 3, 4]);
    }
}
