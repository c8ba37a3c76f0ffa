use super::graph::MolGraph;
use super::writer::write_component;

/// Atom-level invariant used to seed the ranking. Everything the writer
/// emits for an atom is part of it, so equal ranks imply equal atom text.
fn atom_invariant(g: &MolGraph, atom: usize) -> (usize, u32, bool, i32, u32, u32, String) {
    let a = &g.atoms[atom];
    (
        g.degree(atom),
        a.atomic_number(),
        a.aromatic,
        a.charge,
        g.hydrogen_count(atom),
        a.isotope.unwrap_or(0),
        a.smiles_text(),
    )
}

fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).unwrap())
        .collect()
}

/// Iteratively refines atom ranks by neighbour (bond, rank) multisets until
/// the partition stops splitting.
fn refine(g: &MolGraph, mut ranks: Vec<usize>) -> Vec<usize> {
    loop {
        let classes = count_classes(&ranks);
        let keys: Vec<(usize, Vec<(u64, usize)>)> = (0..g.atom_count())
            .map(|a| {
                let mut env: Vec<(u64, usize)> = g
                    .incident(a)
                    .iter()
                    .map(|&bi| {
                        let b = &g.bonds[bi];
                        let code = b.order.code() * 4 + b.stereo.map_or(0, |s| s as u64 + 1);
                        (code, ranks[b.other(a)])
                    })
                    .collect();
                env.sort_unstable();
                (ranks[a], env)
            })
            .collect();
        let next = dense_ranks(&keys);
        if count_classes(&next) == classes {
            return next;
        }
        ranks = next;
    }
}

fn count_classes(ranks: &[usize]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

/// Fully discriminating atom ranking: refined invariants with remaining ties
/// broken in favour of the smallest original index, one tie at a time.
pub fn canonical_ranks(g: &MolGraph) -> Vec<usize> {
    let n = g.atom_count();
    let inv: Vec<_> = (0..n).map(|a| atom_invariant(g, a)).collect();
    let mut ranks = refine(g, dense_ranks(&inv));
    while count_classes(&ranks) < n {
        // lowest rank value shared by more than one atom
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r] += 1;
        }
        let tied = (0..n).find(|&r| counts[r] > 1).unwrap();
        let pick = (0..n).find(|&a| ranks[a] == tied).unwrap();
        let keys: Vec<(usize, usize)> = (0..n)
            .map(|a| (ranks[a] * 2 + usize::from(ranks[a] == tied && a != pick), 0))
            .collect();
        ranks = refine(g, dense_ranks(&keys));
    }
    ranks
}

/// Canonical SMILES: each fragment written from its lowest-ranked atom with
/// rank-ordered neighbours; fragments sorted and joined with `.`.
pub fn canonical_form(g: &MolGraph) -> String {
    if g.atom_count() == 0 {
        return String::new();
    }
    let ranks = canonical_ranks(g);
    let orders: Vec<Vec<usize>> = (0..g.atom_count())
        .map(|a| {
            let mut bonds = g.incident(a).to_vec();
            bonds.sort_by_key(|&bi| ranks[g.bonds[bi].other(a)]);
            bonds
        })
        .collect();
    let mut parts: Vec<String> = g
        .components()
        .into_iter()
        .map(|comp| {
            let start = *comp.iter().min_by_key(|&&a| ranks[a]).unwrap();
            write_component(g, start, &orders)
        })
        .collect();
    parts.sort();
    parts.join(".")
}
