use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::canon::canonical_form;
use super::graph::{BondOrder, MolGraph};
use super::ChemError;

/// Default augmentation factor: variants per compound.
pub const DEFAULT_AUGMENTATION: usize = 32;

/// Serializes `g` depth-first from `start_atom`, visiting neighbours in an
/// order permuted by `neighbor_order_seed`.
///
/// Fragments other than the one containing `start_atom` are appended after a
/// `.`; their start atoms are drawn from the same seeded stream.
pub fn write_smiles(g: &MolGraph, start_atom: usize, neighbor_order_seed: u64) -> Result<String, ChemError> {
    if start_atom >= g.atom_count() {
        return Err(ChemError::InvalidStartAtom { index: start_atom, atoms: g.atom_count() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(neighbor_order_seed);
    let orders: Vec<Vec<usize>> = (0..g.atom_count())
        .map(|a| {
            let mut bonds = g.incident(a).to_vec();
            bonds.shuffle(&mut rng);
            bonds
        })
        .collect();
    let mut components = g.components();
    let first = components.iter().position(|c| c.contains(&start_atom)).unwrap();
    let head = components.remove(first);
    components.shuffle(&mut rng);
    let mut starts = vec![(head, start_atom)];
    for comp in components {
        let s = *comp.choose(&mut rng).unwrap();
        starts.push((comp, s));
    }
    let parts: Vec<String> = starts
        .iter()
        .map(|(_, s)| write_component(g, *s, &orders))
        .collect();
    Ok(parts.join("."))
}

/// Writes the component containing `start`, visiting incident bonds of each
/// atom in the order given by `bond_order[atom]`.
pub(crate) fn write_component(g: &MolGraph, start: usize, bond_order: &[Vec<usize>]) -> String {
    let n = g.atom_count();
    // pass 1: spanning tree and ring-closure bonds
    let mut visited = vec![false; n];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut ring_bonds_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut classified: HashSet<usize> = HashSet::new();
    let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
    visited[start] = true;
    while let Some(&mut (u, ref mut pos)) = stack.last_mut() {
        if *pos >= bond_order[u].len() {
            stack.pop();
            continue;
        }
        let bi = bond_order[u][*pos];
        *pos += 1;
        if !classified.insert(bi) {
            continue;
        }
        let v = g.bonds[bi].other(u);
        if visited[v] {
            // v is an ancestor; the ring bond opens at v and closes at u
            ring_bonds_at[v].push(bi);
            ring_bonds_at[u].push(bi);
        } else {
            visited[v] = true;
            children[u].push((v, bi));
            stack.push((v, 0));
        }
    }

    // pass 2: emit in the same preorder
    let mut out = String::new();
    let mut free_digits: BTreeSet<u32> = (1..=99).collect();
    let mut open: Vec<(usize, u32)> = Vec::new();
    let mut written = vec![false; n];
    emit(g, start, None, &children, &ring_bonds_at, &mut free_digits, &mut open, &mut written, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn emit(
    g: &MolGraph,
    atom: usize,
    via: Option<usize>,
    children: &[Vec<(usize, usize)>],
    rings: &[Vec<usize>],
    free: &mut BTreeSet<u32>,
    open: &mut Vec<(usize, u32)>,
    written: &mut [bool],
    out: &mut String,
) {
    if let Some(bi) = via {
        out.push_str(&bond_text(g, bi));
    }
    out.push_str(&g.atoms[atom].smiles_text());
    written[atom] = true;
    for &bi in &rings[atom] {
        if let Some(pos) = open.iter().position(|&(b, _)| b == bi) {
            let (_, digit) = open.remove(pos);
            out.push_str(&ring_label(digit));
            free.insert(digit);
        } else {
            let digit = free.pop_first().expect("more than 99 simultaneous ring bonds");
            out.push_str(&bond_text(g, bi));
            out.push_str(&ring_label(digit));
            open.push((bi, digit));
        }
    }
    let kids = &children[atom];
    for (i, &(child, bi)) in kids.iter().enumerate() {
        let last = i + 1 == kids.len();
        if !last {
            out.push('(');
        }
        emit(g, child, Some(bi), children, rings, free, open, written, out);
        if !last {
            out.push(')');
        }
    }
}

fn ring_label(digit: u32) -> String {
    if digit < 10 {
        digit.to_string()
    } else {
        format!("%{digit:02}")
    }
}

/// Bond symbol needed to reproduce the bond; empty when implied by the atoms.
fn bond_text(g: &MolGraph, bi: usize) -> String {
    let bond = &g.bonds[bi];
    if let Some(st) = bond.stereo {
        return st.symbol().to_string();
    }
    let both_aromatic = g.atoms[bond.a].aromatic && g.atoms[bond.b].aromatic;
    match (bond.order, both_aromatic) {
        (BondOrder::Single, false) | (BondOrder::Aromatic, true) => String::new(),
        (order, _) => order.symbol().to_string(),
    }
}

/// Up to `n` distinct randomized serializations of `g`.
///
/// Draws (start atom, neighbour seed) pairs from a stream seeded with `seed`
/// until `n` distinct strings are found or `50 * n` attempts are spent.
pub fn enumerate_smiles(g: &MolGraph, n: usize, seed: u64) -> Vec<String> {
    use rand::Rng;
    let mut out = Vec::new();
    if g.atom_count() == 0 || n == 0 {
        return out;
    }
    let mut seen = HashSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = n.saturating_mul(50);
    for _ in 0..cap {
        if out.len() >= n {
            break;
        }
        let start = rng.gen_range(0..g.atom_count());
        let order_seed: u64 = rng.gen();
        let s = write_smiles(g, start, order_seed).expect("start atom in range");
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Canonical string plus up to `n - 1` further distinct random variants.
pub fn augment(g: &MolGraph, n: usize, seed: u64) -> Vec<String> {
    let canonical = canonical_form(g);
    let mut out = vec![canonical.clone()];
    if n > 1 {
        for s in enumerate_smiles(g, n, seed) {
            if out.len() >= n {
                break;
            }
            if s != canonical {
                out.push(s);
            }
        }
    }
    out
}
