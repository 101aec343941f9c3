use std::fmt;
use std::str::FromStr;

/// Elements the toolkit knows valences for.
///
/// Anything else is rejected by the parser with `UnknownElement`.
#[derive(Debug, Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    Si,
    P,
    S,
    Cl,
    Se,
    Br,
    I,
}

pub const ALL_ELEMENTS: [Element; 13] = [
    Element::H,
    Element::B,
    Element::C,
    Element::N,
    Element::O,
    Element::F,
    Element::Si,
    Element::P,
    Element::S,
    Element::Cl,
    Element::Se,
    Element::Br,
    Element::I,
];

impl Element {
    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Si => "Si",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Se => "Se",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::H => 1,
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::Si => 14,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Se => 34,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    /// Members of the SMILES organic subset may be written without brackets.
    pub fn is_organic_subset(self) -> bool {
        matches!(
            self,
            Element::B
                | Element::C
                | Element::N
                | Element::O
                | Element::P
                | Element::S
                | Element::F
                | Element::Cl
                | Element::Br
                | Element::I
        )
    }

    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S | Element::Se
        )
    }

    fn neutral_valences(self) -> &'static [u8] {
        match self {
            Element::H => &[1],
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            Element::Si => &[4],
            Element::P => &[3, 5],
            Element::S | Element::Se => &[2, 4, 6],
        }
    }

    /// Allowed total bond-order sums (bonds plus implicit hydrogens) for the
    /// given formal charge, ascending.
    ///
    /// Electron-rich elements (groups 15-17) gain one valence per positive
    /// charge and lose one per negative charge; H, B, C and Si lose one per
    /// unit of charge in either direction.
    pub fn valences(self, charge: i8) -> Vec<u8> {
        let q = i32::from(charge);
        let electron_rich = matches!(
            self,
            Element::N
                | Element::O
                | Element::F
                | Element::P
                | Element::S
                | Element::Cl
                | Element::Se
                | Element::Br
                | Element::I
        );
        let mut out: Vec<u8> = self
            .neutral_valences()
            .iter()
            .filter_map(|&v| {
                let v = i32::from(v);
                let shifted = if electron_rich { v + q } else { v - q.abs() };
                u8::try_from(shifted).ok()
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Largest bond-order sum the atom may carry.
    pub fn max_valence(self, charge: i8) -> Option<u8> {
        self.valences(charge).last().copied()
    }

    /// Smallest allowed valence that accommodates `bond_sum`.
    pub fn default_valence(self, charge: i8, bond_sum: u8) -> Option<u8> {
        self.valences(charge).into_iter().find(|&v| v >= bond_sum)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownElementSymbol(pub String);

impl FromStr for Element {
    type Err = UnknownElementSymbol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_ELEMENTS
            .iter()
            .copied()
            .find(|e| e.symbol() == s)
            .ok_or_else(|| UnknownElementSymbol(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valence_table() {
        assert_eq!(Element::C.valences(0), vec![4]);
        assert_eq!(Element::N.valences(1), vec![4]);
        assert_eq!(Element::O.valences(-1), vec![1]);
        assert_eq!(Element::S.valences(0), vec![2, 4, 6]);
        assert_eq!(Element::P.valences(0), vec![3, 5]);
        assert_eq!(Element::C.valences(-1), vec![3]);
        assert_eq!(Element::H.valences(1), vec![0]);
        assert_eq!(Element::S.default_valence(0, 3), Some(4));
        assert_eq!(Element::O.default_valence(0, 3), None);
    }

    #[test]
    fn symbols_round_trip() {
        for e in ALL_ELEMENTS {
            assert_eq!(e.symbol().parse::<Element>().unwrap(), e);
        }
        assert!("Xx".parse::<Element>().is_err());
    }
}
