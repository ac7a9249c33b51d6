//! Fundamental-group elements carried along graph edges.
//!
//! Two groups cover every supported surface: `Z^2` for the closed torus and
//! a free group for anything with boundary. Words in the free group are kept
//! freely reduced at all times, so equality is plain structural equality and
//! the identity test is emptiness.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which deck group the words of a surface live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    /// `Z^2`, the torus.
    TorusZ2,
    /// Free group of the given rank.
    Free { rank: u32 },
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKind::TorusZ2 => write!(f, "Z2"),
            GroupKind::Free { rank } => write!(f, "F{rank}"),
        }
    }
}

/// A signed generator: `+k` is the k-th generator, `-k` its inverse (1-based).
pub type Letter = i16;

/// An element of the deck group, in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HomotopyWord {
    Torus(i64, i64),
    Free(Vec<Letter>),
}

impl HomotopyWord {
    pub fn identity(kind: GroupKind) -> Self {
        match kind {
            GroupKind::TorusZ2 => HomotopyWord::Torus(0, 0),
            GroupKind::Free { .. } => HomotopyWord::Free(Vec::new()),
        }
    }

    pub fn torus(a: i64, b: i64) -> Self {
        HomotopyWord::Torus(a, b)
    }

    /// A single free generator, `index` 1-based, negative for the inverse.
    pub fn letter(letter: Letter) -> Self {
        assert!(letter != 0, "letter 0 is not a generator");
        HomotopyWord::Free(vec![letter])
    }

    pub fn from_letters(letters: &[Letter]) -> Self {
        let mut w = HomotopyWord::Free(Vec::new());
        for &l in letters {
            w = w.compose(&HomotopyWord::letter(l)).expect("free x free");
        }
        w
    }

    pub fn is_identity(&self) -> bool {
        match self {
            HomotopyWord::Torus(a, b) => *a == 0 && *b == 0,
            HomotopyWord::Free(w) => w.is_empty(),
        }
    }

    pub fn kind_name(&self) -> String {
        match self {
            HomotopyWord::Torus(..) => "Z2".into(),
            HomotopyWord::Free(..) => "free".into(),
        }
    }

    /// Group product `self * other`, reduced.
    pub fn compose(&self, other: &HomotopyWord) -> Result<HomotopyWord> {
        match (self, other) {
            (HomotopyWord::Torus(a1, b1), HomotopyWord::Torus(a2, b2)) => {
                Ok(HomotopyWord::Torus(a1 + a2, b1 + b2))
            }
            (HomotopyWord::Free(w1), HomotopyWord::Free(w2)) => {
                let mut out = w1.clone();
                for &l in w2 {
                    if out.last() == Some(&(-l)) {
                        out.pop();
                    } else {
                        out.push(l);
                    }
                }
                Ok(HomotopyWord::Free(out))
            }
            _ => Err(Error::GroupMismatch(self.kind_name(), other.kind_name())),
        }
    }

    pub fn inverse(&self) -> HomotopyWord {
        match self {
            HomotopyWord::Torus(a, b) => HomotopyWord::Torus(-a, -b),
            HomotopyWord::Free(w) => HomotopyWord::Free(w.iter().rev().map(|l| -l).collect()),
        }
    }

    /// `g self g^-1`.
    pub fn conjugate(&self, g: &HomotopyWord) -> Result<HomotopyWord> {
        g.compose(self)?.compose(&g.inverse())
    }

    /// Torus classes are primitive when the gcd of their coordinates is 1.
    pub fn is_primitive_torus(&self) -> Option<bool> {
        match self {
            HomotopyWord::Torus(a, b) => {
                if *a == 0 && *b == 0 {
                    Some(false)
                } else {
                    Some(gcd(a.unsigned_abs(), b.unsigned_abs()) == 1)
                }
            }
            _ => None,
        }
    }

    /// Compact text form used by the graph file format: `.` is the identity,
    /// torus words are `a,b`, free words are letters like `a b' c`.
    pub fn to_compact(&self) -> String {
        match self {
            HomotopyWord::Torus(a, b) => {
                if self.is_identity() {
                    ".".into()
                } else {
                    format!("{a},{b}")
                }
            }
            HomotopyWord::Free(w) => {
                if w.is_empty() {
                    ".".into()
                } else {
                    w.iter()
                        .map(|&l| {
                            let c = (b'a' + (l.unsigned_abs() as u8 - 1)) as char;
                            if l > 0 {
                                c.to_string()
                            } else {
                                format!("{c}'")
                            }
                        })
                        .collect::<Vec<_>>()
                        .join("")
                }
            }
        }
    }

    pub fn parse_compact(s: &str, kind: GroupKind) -> Result<HomotopyWord> {
        let err = |msg: &str| Error::Parse { line: 0, msg: format!("bad word '{s}': {msg}") };
        if s == "." {
            return Ok(HomotopyWord::identity(kind));
        }
        match kind {
            GroupKind::TorusZ2 => {
                let (a, b) = s.split_once(',').ok_or_else(|| err("expected a,b"))?;
                Ok(HomotopyWord::Torus(
                    a.trim().parse().map_err(|_| err("bad integer"))?,
                    b.trim().parse().map_err(|_| err("bad integer"))?,
                ))
            }
            GroupKind::Free { rank } => {
                let mut letters = Vec::new();
                let chars: Vec<char> = s.chars().collect();
                let mut i = 0;
                while i < chars.len() {
                    let c = chars[i];
                    if !c.is_ascii_lowercase() {
                        return Err(err("expected generator letter"));
                    }
                    let idx = (c as u8 - b'a') as i16 + 1;
                    if idx as u32 > rank {
                        return Err(err("generator outside alphabet"));
                    }
                    if i + 1 < chars.len() && chars[i + 1] == '\'' {
                        letters.push(-idx);
                        i += 2;
                    } else {
                        letters.push(idx);
                        i += 1;
                    }
                }
                Ok(HomotopyWord::from_letters(&letters))
            }
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl fmt::Display for HomotopyWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_compact())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn torus_compose_is_vector_addition() {
        let w = HomotopyWord::torus(1, 0).compose(&HomotopyWord::torus(0, 1)).unwrap();
        assert_eq!(w, HomotopyWord::torus(1, 1));
    }

    #[test]
    fn free_reduction_cancels() {
        // a b b^-1 = a
        let ab = HomotopyWord::from_letters(&[1, 2]);
        let binv = HomotopyWord::letter(-2);
        assert_eq!(ab.compose(&binv).unwrap(), HomotopyWord::letter(1));
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let w = HomotopyWord::from_letters(&[1, 2, -1, 2, 2]);
        assert!(w.compose(&w.inverse()).unwrap().is_identity());
    }

    #[test]
    fn group_mismatch_is_an_error() {
        let t = HomotopyWord::torus(1, 0);
        let f = HomotopyWord::letter(1);
        assert!(t.compose(&f).is_err());
    }

    /// Oracle: reduce by repeated full scans instead of the incremental stack.
    fn scan_reduce(letters: &[Letter]) -> Vec<Letter> {
        let mut w = letters.to_vec();
        loop {
            let mut changed = false;
            let mut out: Vec<Letter> = Vec::with_capacity(w.len());
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == -w[i + 1] {
                    i += 2;
                    changed = true;
                } else {
                    out.push(w[i]);
                    i += 1;
                }
            }
            w = out;
            if !changed {
                return w;
            }
        }
    }

    #[test]
    fn random_words_match_scan_reducer() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..500 {
            let w1: Vec<Letter> = (0..8)
                .map(|_| {
                    let l = rng.gen_range(1..=3i16);
                    if rng.gen_bool(0.5) {
                        l
                    } else {
                        -l
                    }
                })
                .collect();
            let w2: Vec<Letter> = (0..8)
                .map(|_| {
                    let l = rng.gen_range(1..=3i16);
                    if rng.gen_bool(0.5) {
                        l
                    } else {
                        -l
                    }
                })
                .collect();
            let composed = HomotopyWord::from_letters(&w1)
                .compose(&HomotopyWord::from_letters(&w2))
                .unwrap();
            let mut joined = w1.clone();
            joined.extend_from_slice(&w2);
            assert_eq!(composed, HomotopyWord::Free(scan_reduce(&joined)));
        }
    }

    #[test]
    fn compact_round_trip() {
        let w = HomotopyWord::from_letters(&[1, -2, -2, 1]);
        let s = w.to_compact();
        assert_eq!(HomotopyWord::parse_compact(&s, GroupKind::Free { rank: 2 }).unwrap(), w);
        let t = HomotopyWord::torus(-3, 4);
        assert_eq!(HomotopyWord::parse_compact(&t.to_compact(), GroupKind::TorusZ2).unwrap(), t);
    }
}
