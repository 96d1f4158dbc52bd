//! The built-in graph corpus shared by `verify`, `bench` and the acceptance
//! suite.

use crate::graph::Family;

pub const CORPUS_SIZES: [usize; 16] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 16, 32, 64, 128, 256, 512, 1024];

/// Instances of every family at (roughly) `n` nodes.
///
/// Windmills only exist at odd sizes; an even `n` gets `n/2` blades and
/// therefore `n + 1` nodes. The bipartite split puts a third of the nodes
/// on side A.
pub fn families_at(n: usize) -> Vec<Family> {
    let mut out = vec![Family::Star { n }, Family::Complete { n }];
    if n >= 2 {
        let a = (n / 3).max(1);
        out.push(Family::CompleteBipartite { a, b: n - a });
    }
    if n >= 3 {
        out.push(Family::Windmill { k: n / 2 });
    }
    if n == 5 {
        out.push(Family::Cycle5);
    }
    out.push(Family::Gnp { n, p: None });
    out
}

/// Every family at every size up to `max_n`.
pub fn builtin_corpus(max_n: usize) -> Vec<Family> {
    // Small sizes can produce the same graph twice (windmill(2) at 4 and 5).
    let mut seen = std::collections::BTreeSet::new();
    CORPUS_SIZES
        .iter()
        .filter(|&&n| n <= max_n)
        .flat_map(|&n| families_at(n))
        .filter(|f| seen.insert(f.to_string()))
        .collect()
}

/// Family named on the command line, sized to about `n` nodes.
pub fn family_by_name(name: &str, n: usize) -> Option<Family> {
    match name {
        "star" => Some(Family::Star { n }),
        "complete" => Some(Family::Complete { n }),
        "cycle5" => Some(Family::Cycle5),
        "complete_bipartite" | "complete-bipartite" => {
            let a = (n / 3).max(1);
            (n >= 2).then_some(Family::CompleteBipartite { a, b: n - a })
        }
        "windmill" => (n >= 3).then_some(Family::Windmill { k: n / 2 }),
        "gnp" => Some(Family::Gnp { n, p: None }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_covers_all_families() {
        let c = builtin_corpus(1024);
        for name in ["star", "cycle5", "complete", "complete_bipartite", "windmill", "gnp"] {
            assert!(c.iter().any(|f| f.name() == name), "{name}");
        }
        assert!(c.iter().all(|f| f.node_count() <= 1025));
    }

    #[test]
    fn odd_windmill_matches_size() {
        assert_eq!(family_by_name("windmill", 9).unwrap().node_count(), 9);
        assert_eq!(family_by_name("windmill", 16).unwrap().node_count(), 17);
        assert!(family_by_name("nope", 3).is_none());
    }
}
