//! SMILES reader for the OpenSMILES subset used by flavor corpora.
//!
//! Aromatic input is kekulized, hydrogens become implicit, and stereo,
//! isotope and atom-class annotations are dropped with a [`ParseNote`].

use std::collections::BTreeMap;

use super::element::Element;
use super::graph::{Atom, BondOrder, MolecularGraph};
use super::ChemError;

/// Information discarded while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseNote {
    StereoDiscarded,
    IsotopeDiscarded,
    AtomClassDiscarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSpec {
    Order(BondOrder),
    Aromatic,
}

#[derive(Debug, Clone, Copy)]
struct RawAtom {
    element: Element,
    charge: i8,
    aromatic: bool,
    /// Hydrogen count written inside brackets; `None` for organic-subset atoms.
    explicit_h: Option<u8>,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<RawAtom>,
    bonds: BTreeMap<(usize, usize), BondSpec>,
    notes: Vec<ParseNote>,
}

/// Parses `text` into a kekulized, hydrogen-implicit graph.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, ChemError> {
    parse_smiles_with_notes(text).map(|(g, _)| g)
}

/// As [`parse_smiles`], also returning what was discarded.
pub fn parse_smiles_with_notes(text: &str) -> Result<(MolecularGraph, Vec<ParseNote>), ChemError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ChemError::Empty);
    }
    if !text.is_ascii() {
        return Err(ChemError::MalformedToken {
            position: 0,
            token: text.chars().find(|c| !c.is_ascii()).unwrap_or('?').to_string(),
        });
    }
    let mut p = Parser {
        text: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: BTreeMap::new(),
        notes: Vec::new(),
    };
    p.run()?;
    let mut graph = MolecularGraph::new();
    for a in &p.atoms {
        graph.add_atom(Atom::new(a.element, a.charge));
    }
    kekulize(&p.atoms, &p.bonds, &mut graph)?;
    for (i, a) in p.atoms.iter().enumerate() {
        let max = a
            .element
            .max_valence(a.charge)
            .ok_or(ChemError::ValenceViolation { atom: i })?;
        let used = graph.bond_order_sum(i) + a.explicit_h.unwrap_or(0);
        if used > max {
            return Err(ChemError::ValenceViolation { atom: i });
        }
    }
    p.notes.dedup();
    graph.finished = true;
    Ok((graph, p.notes))
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn malformed(&self) -> ChemError {
        ChemError::MalformedToken {
            position: self.pos,
            token: self
                .peek()
                .map(|c| (c as char).to_string())
                .unwrap_or_else(|| "end of input".to_string()),
        }
    }

    fn run(&mut self) -> Result<(), ChemError> {
        let mut prev: Option<usize> = None;
        let mut branch_stack: Vec<Option<usize>> = Vec::new();
        let mut pending_bond: Option<BondSpec> = None;
        // ring digit -> (atom, bond written at the opening side)
        let mut open_rings: BTreeMap<u32, (usize, Option<BondSpec>)> = BTreeMap::new();

        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if prev.is_none() || pending_bond.is_some() {
                        return Err(self.malformed());
                    }
                    branch_stack.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    if pending_bond.is_some() {
                        return Err(self.malformed());
                    }
                    prev = branch_stack.pop().ok_or_else(|| self.malformed())?;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending_bond.is_some() || prev.is_none() {
                        return Err(self.malformed());
                    }
                    pending_bond = Some(match c {
                        b'-' => BondSpec::Order(BondOrder::Single),
                        b'=' => BondSpec::Order(BondOrder::Double),
                        b'#' => BondSpec::Order(BondOrder::Triple),
                        b':' => BondSpec::Aromatic,
                        _ => {
                            self.notes.push(ParseNote::StereoDiscarded);
                            BondSpec::Order(BondOrder::Single)
                        }
                    });
                    self.pos += 1;
                }
                b'.' => return Err(ChemError::Disconnected),
                b'0'..=b'9' | b'%' => {
                    let digit = self.ring_number()?;
                    let here = prev.ok_or_else(|| self.malformed())?;
                    let bond = pending_bond.take();
                    if let Some((other, open_bond)) = open_rings.remove(&digit) {
                        let spec = match (open_bond, bond) {
                            (Some(a), Some(b)) if a != b => return Err(self.malformed()),
                            (Some(a), _) => Some(a),
                            (None, b) => b,
                        };
                        self.connect(other, here, spec)?;
                    } else {
                        open_rings.insert(digit, (here, bond));
                    }
                }
                _ => {
                    let atom = self.atom()?;
                    let idx = self.atoms.len();
                    self.atoms.push(atom);
                    if let Some(p) = prev {
                        let bond = pending_bond.take();
                        self.connect(p, idx, bond)?;
                    } else if pending_bond.is_some() {
                        return Err(self.malformed());
                    }
                    prev = Some(idx);
                }
            }
        }
        if pending_bond.is_some() || !branch_stack.is_empty() {
            return Err(self.malformed());
        }
        if let Some((&digit, _)) = open_rings.iter().next() {
            return Err(ChemError::UnclosedRing(digit));
        }
        if self.atoms.is_empty() {
            return Err(ChemError::Empty);
        }
        Ok(())
    }

    fn ring_number(&mut self) -> Result<u32, ChemError> {
        if self.peek() == Some(b'%') {
            self.pos += 1;
            let digits = self
                .text
                .get(self.pos..self.pos + 2)
                .filter(|d| d.iter().all(u8::is_ascii_digit))
                .ok_or_else(|| self.malformed())?;
            let n = u32::from(digits[0] - b'0') * 10 + u32::from(digits[1] - b'0');
            self.pos += 2;
            Ok(n)
        } else {
            let d = u32::from(self.peek().unwrap() - b'0');
            self.pos += 1;
            Ok(d)
        }
    }

    fn connect(&mut self, a: usize, b: usize, spec: Option<BondSpec>) -> Result<(), ChemError> {
        if a == b {
            return Err(self.malformed());
        }
        let spec = spec.unwrap_or(if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondSpec::Aromatic
        } else {
            BondSpec::Order(BondOrder::Single)
        });
        let key = (a.min(b), a.max(b));
        if self.bonds.insert(key, spec).is_some() {
            return Err(self.malformed());
        }
        Ok(())
    }

    fn atom(&mut self) -> Result<RawAtom, ChemError> {
        let c = self.peek().ok_or_else(|| self.malformed())?;
        if c == b'[' {
            return self.bracket_atom();
        }
        let two = self.text.get(self.pos..self.pos + 2);
        let (symbol, aromatic, len) = match (c, two) {
            (b'C', Some(b"Cl")) => ("Cl", false, 2),
            (b'B', Some(b"Br")) => ("Br", false, 2),
            (b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I', _) => {
                (std::str::from_utf8(&self.text[self.pos..self.pos + 1]).unwrap(), false, 1)
            }
            (b'b', _) => ("B", true, 1),
            (b'c', _) => ("C", true, 1),
            (b'n', _) => ("N", true, 1),
            (b'o', _) => ("O", true, 1),
            (b'p', _) => ("P", true, 1),
            (b's', _) => ("S", true, 1),
            (ch, _) if ch.is_ascii_alphabetic() || ch == b'*' => {
                return Err(ChemError::UnknownElement((ch as char).to_string()))
            }
            _ => return Err(self.malformed()),
        };
        self.pos += len;
        let element: Element = symbol.parse().expect("organic subset symbol");
        Ok(RawAtom {
            element,
            charge: 0,
            aromatic,
            explicit_h: None,
        })
    }

    fn bracket_atom(&mut self) -> Result<RawAtom, ChemError> {
        let close = self.text[self.pos..]
            .iter()
            .position(|&c| c == b']')
            .map(|off| self.pos + off)
            .ok_or_else(|| self.malformed())?;
        let body = &self.text[self.pos + 1..close];
        let start = self.pos;
        let mut i = 0;
        let err = |at: usize| ChemError::MalformedToken {
            position: start + 1 + at,
            token: String::from_utf8_lossy(body).into_owned(),
        };

        if body.first().is_some_and(u8::is_ascii_digit) {
            while body.get(i).is_some_and(u8::is_ascii_digit) {
                i += 1;
            }
            self.notes.push(ParseNote::IsotopeDiscarded);
        }

        let rest = &body[i..];
        let (symbol, aromatic, len) = if rest.starts_with(b"se") {
            ("Se".to_string(), true, 2)
        } else if rest.starts_with(b"as") {
            return Err(ChemError::UnknownElement("as".into()));
        } else {
            match rest.first() {
                Some(&c) if c.is_ascii_uppercase() => {
                    if rest.get(1).is_some_and(u8::is_ascii_lowercase) {
                        let two = String::from_utf8_lossy(&rest[..2]).into_owned();
                        if two.parse::<Element>().is_ok() {
                            (two, false, 2)
                        } else {
                            // e.g. "Na", "Zn": recognisable but unsupported
                            return Err(ChemError::UnknownElement(two));
                        }
                    } else {
                        ((c as char).to_string(), false, 1)
                    }
                }
                Some(&c) if b"bcnops".contains(&c) => ((c as char).to_ascii_uppercase().to_string(), true, 1),
                _ => return Err(err(i)),
            }
        };
        i += len;
        let element: Element = symbol
            .parse()
            .map_err(|_| ChemError::UnknownElement(symbol.clone()))?;

        if body.get(i) == Some(&b'@') {
            while body.get(i).is_some_and(|c| *c == b'@' || c.is_ascii_uppercase() && *c != b'H' || c.is_ascii_digit()) {
                i += 1;
            }
            self.notes.push(ParseNote::StereoDiscarded);
        }

        let mut explicit_h = 0u8;
        if body.get(i) == Some(&b'H') {
            i += 1;
            explicit_h = 1;
            if let Some(d) = body.get(i).filter(|d| d.is_ascii_digit()) {
                explicit_h = d - b'0';
                i += 1;
            }
        }

        let mut charge: i8 = 0;
        if let Some(&sign) = body.get(i).filter(|c| **c == b'+' || **c == b'-') {
            let s: i8 = if sign == b'+' { 1 } else { -1 };
            i += 1;
            if let Some(d) = body.get(i).filter(|d| d.is_ascii_digit()) {
                charge = s * (d - b'0') as i8;
                i += 1;
            } else {
                charge = s;
                while body.get(i) == Some(&sign) {
                    charge += s;
                    i += 1;
                }
            }
        }

        if body.get(i) == Some(&b':') {
            i += 1;
            let from = i;
            while body.get(i).is_some_and(u8::is_ascii_digit) {
                i += 1;
            }
            if i == from {
                return Err(err(i));
            }
            self.notes.push(ParseNote::AtomClassDiscarded);
        }

        if i != body.len() {
            return Err(err(i));
        }
        if aromatic && !element.can_be_aromatic() {
            return Err(err(0));
        }
        self.pos = close + 1;
        Ok(RawAtom {
            element,
            charge,
            aromatic,
            explicit_h: Some(explicit_h),
        })
    }
}

/// Assigns integer orders to aromatic bonds by a perfect-matching search over
/// the atoms that still need a double bond.
fn kekulize(
    atoms: &[RawAtom],
    bonds: &BTreeMap<(usize, usize), BondSpec>,
    graph: &mut MolecularGraph,
) -> Result<(), ChemError> {
    let n = atoms.len();
    let mut sum = vec![0u8; n];
    let mut aromatic_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (&(a, b), &spec) in bonds {
        let order = match spec {
            BondSpec::Order(o) => o.as_u8(),
            BondSpec::Aromatic => {
                aromatic_adj[a].push(b);
                aromatic_adj[b].push(a);
                1
            }
        };
        sum[a] += order;
        sum[b] += order;
    }

    // 0 = not a candidate, 1 = optional, 2 = must receive a double bond
    let mut need = vec![0u8; n];
    for (i, atom) in atoms.iter().enumerate() {
        // an explicit ':' between non-aromatic atoms stays single
        if !atom.aromatic {
            continue;
        }
        let used = sum[i] + atom.explicit_h.unwrap_or(0);
        let free = atom
            .element
            .default_valence(atom.charge, used)
            .map(|v| v - used)
            .unwrap_or(0);
        if free >= 1 {
            need[i] = if atom.explicit_h.is_some() || atom.element == Element::C {
                2
            } else {
                1
            };
        }
    }
    for i in 0..n {
        aromatic_adj[i].retain(|&j| need[j] > 0);
        aromatic_adj[i].sort_unstable();
    }

    let mut mate: Vec<Option<usize>> = vec![None; n];
    let mut budget = 200_000usize;
    if !match_required(&need, &aromatic_adj, &mut mate, &mut budget) {
        return Err(ChemError::Kekulization);
    }

    for (&(a, b), &spec) in bonds {
        let order = match spec {
            BondSpec::Order(o) => o,
            BondSpec::Aromatic if mate[a] == Some(b) => BondOrder::Double,
            BondSpec::Aromatic => BondOrder::Single,
        };
        graph
            .add_bond(a, b, order)
            .map_err(|_| ChemError::InvalidGraph(format!("bond ({a}, {b})")))?;
    }
    Ok(())
}

fn match_required(
    need: &[u8],
    adj: &[Vec<usize>],
    mate: &mut Vec<Option<usize>>,
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    // most constrained unmatched required atom first
    let mut pick: Option<(usize, usize)> = None;
    for i in 0..need.len() {
        if need[i] == 2 && mate[i].is_none() {
            let options = adj[i].iter().filter(|&&j| mate[j].is_none()).count();
            if pick.is_none_or(|(_, best)| options < best) {
                pick = Some((i, options));
            }
        }
    }
    let Some((atom, _)) = pick else {
        return true;
    };
    for k in 0..adj[atom].len() {
        let other = adj[atom][k];
        if mate[other].is_some() {
            continue;
        }
        mate[atom] = Some(other);
        mate[other] = Some(atom);
        if match_required(need, adj, mate, budget) {
            return true;
        }
        mate[atom] = None;
        mate[other] = None;
    }
    false
}
