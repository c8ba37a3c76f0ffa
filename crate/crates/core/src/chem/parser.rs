use super::graph::{atomic_number, Atom, BondOrder, MolGraph, Stereo};
use super::ChemError;

const ORGANIC: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];
const AROMATIC_ORGANIC: [&str; 6] = ["b", "c", "n", "o", "p", "s"];
const AROMATIC_BRACKET: [&str; 8] = ["b", "c", "n", "o", "p", "s", "se", "as"];

#[derive(Debug, Clone, Copy)]
struct PendingBond {
    order: Option<BondOrder>,
    stereo: Option<Stereo>,
    offset: usize,
}

struct RingOpen {
    atom: usize,
    bond: PendingBond,
    offset: usize,
}

/// Parses a SMILES string into a [`MolGraph`].
pub fn parse_smiles(s: &str) -> Result<MolGraph, ChemError> {
    if s.is_empty() {
        return Err(ChemError::EmptyInput { offset: 0 });
    }
    Parser {
        src: s.as_bytes(),
        pos: 0,
        graph: MolGraph::new(s),
        prev: None,
        branches: Vec::new(),
        rings: std::collections::BTreeMap::new(),
        pending: None,
    }
    .run()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    graph: MolGraph,
    prev: Option<usize>,
    branches: Vec<(usize, usize)>,
    rings: std::collections::BTreeMap<u32, RingOpen>,
    pending: Option<PendingBond>,
}

impl Parser<'_> {
    fn run(mut self) -> Result<MolGraph, ChemError> {
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            match c {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(ChemError::UnexpectedCharacter { offset: self.pos, ch: '(' });
                    };
                    if self.pending.is_some() {
                        return Err(ChemError::UnexpectedCharacter { offset: self.pos, ch: '(' });
                    }
                    self.branches.push((prev, self.pos));
                    self.pos += 1;
                }
                b')' => {
                    let Some((atom, _)) = self.branches.pop() else {
                        return Err(ChemError::UnbalancedParenthesis { offset: self.pos });
                    };
                    if self.pending.is_some() {
                        return Err(ChemError::DanglingBond { offset: self.pos });
                    }
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(ChemError::DanglingBond { offset: self.pos });
                    }
                    let (order, stereo) = match c {
                        b'-' => (BondOrder::Single, None),
                        b'=' => (BondOrder::Double, None),
                        b'#' => (BondOrder::Triple, None),
                        b':' => (BondOrder::Aromatic, None),
                        b'/' => (BondOrder::Single, Some(Stereo::Up)),
                        _ => (BondOrder::Single, Some(Stereo::Down)),
                    };
                    self.pending = Some(PendingBond { order: Some(order), stereo, offset: self.pos });
                    self.pos += 1;
                }
                b'.' => {
                    if self.pending.is_some() || self.prev.is_none() {
                        return Err(ChemError::DanglingBond { offset: self.pos });
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.place_atom(atom)?;
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.place_atom(atom)?;
                }
            }
        }
        if let Some(p) = self.pending {
            return Err(ChemError::DanglingBond { offset: p.offset });
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(ChemError::UnbalancedParenthesis { offset });
        }
        if let Some(open) = self.rings.values().next() {
            return Err(ChemError::UnclosedRingBond { offset: open.offset });
        }
        Ok(self.graph)
    }

    fn implicit_order(&self, a: usize, b: usize) -> BondOrder {
        if self.graph.atoms[a].aromatic && self.graph.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn place_atom(&mut self, atom: Atom) -> Result<(), ChemError> {
        let idx = self.graph.add_atom(atom);
        if let Some(prev) = self.prev {
            let pending = self.pending.take();
            let order = pending
                .and_then(|p| p.order)
                .unwrap_or_else(|| self.implicit_order(prev, idx));
            let stereo = pending.and_then(|p| p.stereo);
            self.graph.add_bond(prev, idx, order, stereo);
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self) -> Result<(), ChemError> {
        let start = self.pos;
        let number = if self.src[self.pos] == b'%' {
            let digits = self.src.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    ((d[0] - b'0') as u32) * 10 + (d[1] - b'0') as u32
                }
                _ => return Err(ChemError::UnexpectedCharacter { offset: start, ch: '%' }),
            }
        } else {
            self.pos += 1;
            (self.src[start] - b'0') as u32
        };
        let Some(atom) = self.prev else {
            return Err(ChemError::DanglingBond { offset: start });
        };
        let bond = self.pending.take().unwrap_or(PendingBond { order: None, stereo: None, offset: start });
        match self.rings.remove(&number) {
            None => {
                self.rings.insert(number, RingOpen { atom, bond, offset: start });
            }
            Some(open) => {
                let order = match (open.bond.order, bond.order) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(ChemError::ConflictingRingBond { offset: start })
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.implicit_order(open.atom, atom),
                };
                let stereo = open.bond.stereo.or(bond.stereo);
                if open.atom == atom || !self.graph.add_bond(open.atom, atom, order, stereo) {
                    return Err(ChemError::InvalidRingBond { offset: start });
                }
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, ChemError> {
        let start = self.pos;
        let rest = &self.src[self.pos..];
        for two in ["Cl", "Br"] {
            if rest.starts_with(two.as_bytes()) {
                self.pos += 2;
                return Ok(Atom::organic(two, false));
            }
        }
        let ch = rest[0] as char;
        let one = ch.to_string();
        if ORGANIC.contains(&one.as_str()) {
            self.pos += 1;
            return Ok(Atom::organic(&one, false));
        }
        if AROMATIC_ORGANIC.contains(&one.as_str()) {
            self.pos += 1;
            return Ok(Atom::organic(&one.to_ascii_uppercase(), true));
        }
        if ch.is_ascii_alphabetic() || ch == '*' {
            Err(ChemError::UnknownAtomSymbol { offset: start, symbol: one })
        } else {
            Err(ChemError::UnexpectedCharacter { offset: start, ch: next_char(self.src, start) })
        }
    }

    fn bracket_atom(&mut self) -> Result<Atom, ChemError> {
        let open = self.pos;
        let close = match self.src[open..].iter().position(|&b| b == b']') {
            Some(p) => open + p,
            None => return Err(ChemError::UnclosedBracket { offset: open }),
        };
        let body = &self.src[open + 1..close];
        let mut i = 0;
        let err_at = |i: usize| open + 1 + i;

        let digits_end = body.iter().position(|b| !b.is_ascii_digit()).unwrap_or(body.len());
        let isotope = if digits_end > 0 {
            Some(parse_u32(&body[..digits_end]).ok_or(ChemError::UnexpectedCharacter {
                offset: err_at(0),
                ch: body[0] as char,
            })?)
        } else {
            None
        };
        i = i.max(digits_end);

        // element symbol
        let sym_start = i;
        let (element, aromatic) = {
            let rem = &body[i..];
            let first = *rem.first().ok_or(ChemError::UnknownAtomSymbol {
                offset: err_at(i),
                symbol: String::new(),
            })?;
            if first.is_ascii_uppercase() {
                let two = rem.get(..2).map(|t| String::from_utf8_lossy(t).to_string());
                match two {
                    Some(t) if t.as_bytes()[1].is_ascii_lowercase() && atomic_number(&t).is_some() => {
                        i += 2;
                        (t, false)
                    }
                    _ => {
                        let one = (first as char).to_string();
                        if atomic_number(&one).is_none() {
                            return Err(ChemError::UnknownAtomSymbol { offset: err_at(i), symbol: one });
                        }
                        i += 1;
                        (one, false)
                    }
                }
            } else if first.is_ascii_lowercase() {
                let two = rem.get(..2).map(|t| String::from_utf8_lossy(t).to_string());
                match two {
                    Some(t) if AROMATIC_BRACKET.contains(&t.as_str()) => {
                        i += 2;
                        (capitalize(&t), true)
                    }
                    _ => {
                        let one = (first as char).to_string();
                        if !AROMATIC_BRACKET.contains(&one.as_str()) {
                            return Err(ChemError::UnknownAtomSymbol { offset: err_at(i), symbol: one });
                        }
                        i += 1;
                        (capitalize(&one), true)
                    }
                }
            } else if first == b'*' {
                return Err(ChemError::UnknownAtomSymbol { offset: err_at(i), symbol: "*".into() });
            } else {
                return Err(ChemError::UnknownAtomSymbol {
                    offset: err_at(i),
                    symbol: (first as char).to_string(),
                });
            }
        };
        debug_assert!(i > sym_start);

        let mut chirality = None;
        if body.get(i) == Some(&b'@') {
            let s = i;
            i += 1;
            if body.get(i) == Some(&b'@') {
                i += 1;
            }
            // extended forms such as @TH1 or @SP2 are kept verbatim as well
            while i < body.len() && (body[i].is_ascii_uppercase() && body[i] != b'H' || body[i].is_ascii_digit()) {
                i += 1;
            }
            chirality = Some(String::from_utf8_lossy(&body[s..i]).to_string());
        }

        let mut explicit_h = Some(0);
        if body.get(i) == Some(&b'H') {
            i += 1;
            let e = i + body[i..].iter().take_while(|b| b.is_ascii_digit()).count();
            explicit_h = Some(if e > i { parse_u32(&body[i..e]).unwrap_or(1) } else { 1 });
            i = e;
        }

        let mut charge = 0i32;
        if let Some(&sign @ (b'+' | b'-')) = body.get(i) {
            let unit = if sign == b'+' { 1 } else { -1 };
            i += 1;
            let e = i + body[i..].iter().take_while(|b| b.is_ascii_digit()).count();
            if e > i {
                charge = unit * parse_u32(&body[i..e]).unwrap_or(1) as i32;
                i = e;
            } else {
                charge = unit;
                while body.get(i) == Some(&sign) {
                    charge += unit;
                    i += 1;
                }
            }
        }

        let mut atom_class = None;
        if body.get(i) == Some(&b':') {
            i += 1;
            let e = i + body[i..].iter().take_while(|b| b.is_ascii_digit()).count();
            if e == i {
                return Err(ChemError::UnexpectedCharacter { offset: err_at(i - 1), ch: ':' });
            }
            atom_class = parse_u32(&body[i..e]);
            i = e;
        }

        if i != body.len() {
            return Err(ChemError::UnexpectedCharacter { offset: err_at(i), ch: next_char(body, i) });
        }
        self.pos = close + 1;
        Ok(Atom {
            element,
            aromatic,
            charge,
            explicit_h,
            isotope,
            bracketed: true,
            chirality,
            atom_class,
        })
    }
}

fn next_char(bytes: &[u8], at: usize) -> char {
    std::str::from_utf8(&bytes[at..])
        .ok()
        .and_then(|s| s.chars().next())
        .unwrap_or(bytes[at] as char)
}

fn parse_u32(bytes: &[u8]) -> Option<u32> {
    std::str::from_utf8(bytes).ok()?.parse().ok()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}
