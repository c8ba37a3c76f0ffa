use std::fmt;

/// Bond multiplicity as written in SMILES.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }

    /// Small integer code used by the hashing and ranking routines.
    pub fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    fn valence_contribution(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

/// Directional bond marks (`/`, `\`). Recorded verbatim, never interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stereo {
    Up,
    Down,
}

impl Stereo {
    pub fn symbol(self) -> char {
        match self {
            Stereo::Up => '/',
            Stereo::Down => '\\',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    /// Element symbol with conventional capitalisation (`C`, `Cl`, `Se`).
    pub element: String,
    pub aromatic: bool,
    pub charge: i32,
    /// Hydrogen count written inside brackets; `None` for organic-subset atoms.
    pub explicit_h: Option<u32>,
    pub isotope: Option<u32>,
    pub bracketed: bool,
    /// Chirality mark as written (`@`, `@@`), kept verbatim.
    pub chirality: Option<String>,
    pub atom_class: Option<u32>,
}

impl Atom {
    pub fn organic(element: &str, aromatic: bool) -> Self {
        Atom {
            element: element.to_string(),
            aromatic,
            charge: 0,
            explicit_h: None,
            isotope: None,
            bracketed: false,
            chirality: None,
            atom_class: None,
        }
    }

    pub fn atomic_number(&self) -> u32 {
        atomic_number(&self.element).unwrap_or(0)
    }

    /// Text of the atom as it appears in a SMILES string.
    pub fn smiles_text(&self) -> String {
        let sym = if self.aromatic {
            self.element.to_ascii_lowercase()
        } else {
            self.element.clone()
        };
        if !self.bracketed {
            return sym;
        }
        let mut s = String::from("[");
        if let Some(iso) = self.isotope {
            s.push_str(&iso.to_string());
        }
        s.push_str(&sym);
        if let Some(ch) = &self.chirality {
            s.push_str(ch);
        }
        match self.explicit_h {
            Some(0) | None => {}
            Some(1) => s.push('H'),
            Some(n) => {
                s.push('H');
                s.push_str(&n.to_string());
            }
        }
        match self.charge {
            0 => {}
            1 => s.push('+'),
            -1 => s.push('-'),
            c if c > 0 => {
                s.push('+');
                s.push_str(&c.to_string());
            }
            c => {
                s.push('-');
                s.push_str(&(-c).to_string());
            }
        }
        if let Some(class) = self.atom_class {
            s.push(':');
            s.push_str(&class.to_string());
        }
        s.push(']');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub stereo: Option<Stereo>,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Parsed molecular graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub source: String,
    /// Per-atom incident bond indices, in insertion order.
    adjacency: Vec<Vec<usize>>,
}

impl MolGraph {
    pub fn new(source: impl Into<String>) -> Self {
        MolGraph {
            atoms: Vec::new(),
            bonds: Vec::new(),
            source: source.into(),
            adjacency: Vec::new(),
        }
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    /// Adds a bond; returns `false` when the pair is already bonded or is a self-bond.
    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder, stereo: Option<Stereo>) -> bool {
        if a == b || self.bond_between(a, b).is_some() {
            return false;
        }
        self.bonds.push(Bond { a, b, order, stereo });
        let idx = self.bonds.len() - 1;
        self.adjacency[a].push(idx);
        self.adjacency[b].push(idx);
        true
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .copied()
            .find(|&bi| self.bonds[bi].other(a) == b)
    }

    /// Incident bond indices of `atom`.
    pub fn incident(&self, atom: usize) -> &[usize] {
        &self.adjacency[atom]
    }

    pub fn neighbors(&self, atom: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[atom].iter().map(move |&bi| self.bonds[bi].other(atom))
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    /// Implicit hydrogens for organic-subset atoms, the bracket count otherwise.
    pub fn hydrogen_count(&self, atom: usize) -> u32 {
        let a = &self.atoms[atom];
        if let Some(h) = a.explicit_h {
            return h;
        }
        if a.bracketed {
            return 0;
        }
        let mut used: u32 = self.adjacency[atom]
            .iter()
            .map(|&bi| self.bonds[bi].order.valence_contribution())
            .sum();
        if a.aromatic {
            used += 1;
        }
        let valences: &[u32] = match a.element.as_str() {
            "B" => &[3],
            "C" => &[4],
            "N" | "P" => &[3, 5],
            "O" => &[2],
            "S" => &[2, 4, 6],
            "F" | "Cl" | "Br" | "I" => &[1],
            _ => &[],
        };
        valences
            .iter()
            .find(|&&v| v >= used)
            .map(|&v| v - used)
            .unwrap_or(0)
    }

    /// Connected components as sorted atom index lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                let u = comp[i];
                for v in self.neighbors(u).collect::<Vec<_>>() {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// True when the input contained more than one fragment.
    pub fn is_multi_fragment(&self) -> bool {
        self.components().len() > 1
    }

    /// Ring membership per bond: a bond is in a ring iff it is not a bridge.
    pub fn ring_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // iterative lowlink DFS: (atom, parent bond, next incident position)
            let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (u, parent, ref mut pos)) = stack.last_mut() {
                if *pos < self.adjacency[u].len() {
                    let bi = self.adjacency[u][*pos];
                    *pos += 1;
                    if Some(bi) == parent {
                        continue;
                    }
                    let v = self.bonds[bi].other(u);
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, Some(bi), 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let (Some(pb), Some(&(p, _, _))) = (parent, stack.last()) {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            is_bridge[pb] = true;
                        }
                    }
                }
            }
        }
        is_bridge.into_iter().map(|b| !b).collect()
    }

    pub fn ring_atoms(&self) -> Vec<bool> {
        let ring = self.ring_bonds();
        let mut out = vec![false; self.atoms.len()];
        for (bi, bond) in self.bonds.iter().enumerate() {
            if ring[bi] {
                out[bond.a] = true;
                out[bond.b] = true;
            }
        }
        out
    }
}

impl fmt::Display for MolGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", super::canonical_form(self))
    }
}

const ELEMENTS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

pub fn atomic_number(symbol: &str) -> Option<u32> {
    ELEMENTS
        .iter()
        .position(|&e| e == symbol)
        .map(|p| p as u32 + 1)
}
