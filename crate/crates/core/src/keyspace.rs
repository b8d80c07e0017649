//! Indexing of the groupwise keys.
//!
//! One key exists per `S`-subset of the `N` servers. Subsets are numbered in
//! lexicographic order starting at 1, so key `i` is the `i`-th smallest subset.
//! Server labels and all indices exposed here are 1-based.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyspaceError {
    #[error("invalid key group parameters N={servers}, S={group_size}")]
    InvalidParams { servers: usize, group_size: usize },
}

/// Binomial coefficient with `C(x, y) = 0` whenever `y > x`.
///
/// Panics on overflow of `u64`, which does not happen for the server counts
/// this crate targets.
pub fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).expect("binomial coefficient overflows u64")
}

/// All `S`-subsets of `[N]` in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyGroupIndex {
    servers: usize,
    group_size: usize,
    groups: Vec<Vec<usize>>,
    index_of: HashMap<Vec<usize>, usize>,
}

pub fn enumerate_groups(servers: usize, group_size: usize) -> Result<KeyGroupIndex, KeyspaceError> {
    KeyGroupIndex::new(servers, group_size)
}

impl KeyGroupIndex {
    pub fn new(servers: usize, group_size: usize) -> Result<Self, KeyspaceError> {
        if group_size == 0 || group_size > servers {
            return Err(KeyspaceError::InvalidParams {
                servers,
                group_size,
            });
        }
        let mut groups = Vec::with_capacity(binom(servers, group_size) as usize);
        let mut current: Vec<usize> = (1..=group_size).collect();
        loop {
            groups.push(current.clone());
            // advance the rightmost position that still has room
            let Some(pos) = (0..group_size)
                .rev()
                .find(|&i| current[i] < servers - (group_size - 1 - i))
            else {
                break;
            };
            current[pos] += 1;
            for i in pos + 1..group_size {
                current[i] = current[i - 1] + 1;
            }
        }
        let index_of = groups
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i + 1))
            .collect();
        Ok(KeyGroupIndex {
            servers,
            group_size,
            groups,
            index_of,
        })
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// The subset with 1-based index `i`.
    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i - 1]
    }

    /// 1-based index of a sorted subset.
    pub fn index_of(&self, subset: &[usize]) -> Option<usize> {
        self.index_of.get(subset).copied()
    }

    pub fn contains(&self, group: usize, server: usize) -> bool {
        self.groups[group - 1].binary_search(&server).is_ok()
    }

    pub fn availability(&self) -> Availability {
        let mut per_server = vec![BTreeSet::new(); self.servers];
        for (i, g) in self.groups.iter().enumerate() {
            for &s in g {
                per_server[s - 1].insert(i + 1);
            }
        }
        Availability { per_server }
    }
}

/// For each server, the 1-based indices of the keys it holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Availability {
    per_server: Vec<BTreeSet<usize>>,
}

impl Availability {
    pub fn keys_of(&self, server: usize) -> &BTreeSet<usize> {
        &self.per_server[server - 1]
    }

    pub fn servers(&self) -> usize {
        self.per_server.len()
    }
}

/// Number of key groups meeting a server set of the given size:
/// `C(N, S) - C(N - size, S)`.
pub fn omega_closed(servers: usize, group_size: usize, subset_size: usize) -> u64 {
    binom(servers, group_size) - binom(servers - subset_size, group_size)
}

/// The same count, split by how many members of the group fall inside the
/// server set.
pub fn omega_split(servers: usize, group_size: usize, subset_size: usize) -> u64 {
    (1..=group_size)
        .map(|k| binom(subset_size, k) * binom(servers - subset_size, group_size - k))
        .sum()
}

/// Counts groups intersecting `servers` by direct enumeration.
pub fn omega_bruteforce(groups: &KeyGroupIndex, servers: &BTreeSet<usize>) -> u64 {
    groups
        .groups()
        .iter()
        .filter(|g| g.iter().any(|s| servers.contains(s)))
        .count() as u64
}

/// 1-based columns of the demand matrix that hold pieces of keys the server
/// does not have. The key piece `(i, j)` of group `i` sits at column
/// `n*K + i + (j-1)*C(N,S)`.
pub fn unavailable_key_columns(
    gradient_columns: usize,
    key_pieces: usize,
    groups: &KeyGroupIndex,
    server: usize,
) -> BTreeSet<usize> {
    let total = groups.len();
    let mut cols = BTreeSet::new();
    for i in 1..=total {
        if groups.contains(i, server) {
            continue;
        }
        for j in 1..=key_pieces {
            cols.insert(gradient_columns + i + (j - 1) * total);
        }
    }
    cols
}

/// Every subset of `[n]` with `size` elements, lexicographic, 1-based.
/// Empty subsets are allowed here (unlike [`KeyGroupIndex`]).
pub fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![Vec::new()];
    }
    match KeyGroupIndex::new(n, size) {
        Ok(idx) => idx.groups,
        Err(_) => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pascal's rule, independent of the multiplicative formula.
    fn pascal(n: usize, k: usize) -> u64 {
        let mut row = vec![1u64];
        for _ in 0..n {
            let mut next = vec![1u64; row.len() + 1];
            for i in 1..row.len() {
                next[i] = row[i - 1] + row[i];
            }
            row = next;
        }
        row.get(k).copied().unwrap_or(0)
    }

    #[test]
    fn binomials() {
        for n in 0..30 {
            for k in 0..32 {
                assert_eq!(binom(n, k), pascal(n, k), "C({n},{k})");
            }
        }
        assert_eq!(binom(14, 6), 3003);
    }

    #[test]
    fn enumeration_examples() {
        let g = enumerate_groups(3, 2).unwrap();
        assert_eq!(g.groups(), &[vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(g.index_of(&[1, 3]), Some(2));
        assert_eq!(enumerate_groups(3, 3).unwrap().groups(), &[vec![1, 2, 3]]);
        assert_eq!(enumerate_groups(14, 6).unwrap().len() as u64, pascal(14, 6));
        assert!(enumerate_groups(3, 0).is_err());
        assert!(enumerate_groups(3, 4).is_err());
    }

    #[test]
    fn enumeration_is_sorted_and_complete() {
        for n in 1..=9 {
            for s in 1..=n {
                let g = enumerate_groups(n, s).unwrap();
                assert_eq!(g.len() as u64, binom(n, s));
                assert!(g.groups().windows(2).all(|w| w[0] < w[1]));
                assert!(g
                    .groups()
                    .iter()
                    .all(|x| x.len() == s && x.windows(2).all(|p| p[0] < p[1])));
            }
        }
    }

    #[test]
    fn availability_sizes() {
        for n in 1..=8 {
            for s in 1..=n {
                let g = enumerate_groups(n, s).unwrap();
                let a = g.availability();
                for server in 1..=n {
                    assert_eq!(a.keys_of(server).len() as u64, binom(n - 1, s - 1));
                    for i in 1..=g.len() {
                        assert_eq!(a.keys_of(server).contains(&i), g.group(i).contains(&server));
                    }
                }
            }
        }
    }

    #[test]
    fn omega_examples() {
        assert_eq!(omega_closed(3, 2, 1), 2);
        assert_eq!(omega_closed(3, 2, 0), 0);
        assert_eq!(omega_closed(7, 3, 7), binom(7, 3));
        let g = enumerate_groups(3, 2).unwrap();
        assert_eq!(omega_bruteforce(&g, &BTreeSet::from([1])), 2);
        assert_eq!(omega_bruteforce(&g, &BTreeSet::new()), 0);
        let g = enumerate_groups(5, 3).unwrap();
        assert_eq!(omega_bruteforce(&g, &BTreeSet::from([2, 4])), 9);
        assert_eq!(omega_split(3, 2, 1), 2);
        assert_eq!(omega_split(3, 2, 0), 0);
        let g = enumerate_groups(6, 3).unwrap();
        assert_eq!(omega_bruteforce(&g, &BTreeSet::from([1, 2])), 16);
        assert_eq!(omega_split(6, 3, 2), 16);
    }

    #[test]
    fn responders_see_every_key() {
        // With S >= N - Nr + 2 no key group fits inside the stragglers.
        for n in 2..=10 {
            for nr in 1..=n {
                for s in (n - nr + 2).max(1)..=n {
                    let g = enumerate_groups(n, s).unwrap();
                    for u in subsets(n, nr) {
                        let u: BTreeSet<usize> = u.into_iter().collect();
                        assert_eq!(omega_bruteforce(&g, &u), binom(n, s));
                    }
                }
            }
        }
    }

    #[test]
    fn unavailable_columns() {
        // (K,N,Nr,M,S) = (3,3,3,2,2): nK = 9, alpha = 1
        let g = enumerate_groups(3, 2).unwrap();
        assert_eq!(unavailable_key_columns(9, 1, &g, 1), BTreeSet::from([12]));
        assert_eq!(unavailable_key_columns(9, 1, &g, 2), BTreeSet::from([11]));
        assert_eq!(unavailable_key_columns(9, 1, &g, 3), BTreeSet::from([10]));

        let g = enumerate_groups(4, 4).unwrap();
        for s in 1..=4 {
            assert!(unavailable_key_columns(10, 3, &g, s).is_empty());
        }

        // (4,4,4,2,2): groups {12,13,14,23,24,34}; server 2 misses 13,14,34
        // (indices 2,3,6); alpha = 2, C = 6, n*K = nk
        let g = enumerate_groups(4, 2).unwrap();
        let nk = 32; // r = 5, n = 8, K = 4
        let cols = unavailable_key_columns(nk, 2, &g, 2);
        let expected: BTreeSet<usize> = [2, 3, 6]
            .iter()
            .flat_map(|&i| [nk + i, nk + i + 6])
            .collect();
        assert_eq!(cols, expected);
        assert_eq!(cols.len() as u64, (binom(4, 2) - binom(3, 1)) * 2);
    }

    #[test]
    fn subsets_helper() {
        assert_eq!(subsets(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(subsets(2, 3), Vec::<Vec<usize>>::new());
        assert_eq!(subsets(4, 2).len(), 6);
    }
}
