//! TIMIT phone inventory and its broad phonetic classes.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The eight broad phonetic classes, in their canonical order.
///
/// The declaration order is significant: it is the fixed tie-breaking order
/// used by every classifier in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BroadClass {
    Affricate,
    Closures,
    Fricative,
    Nasals,
    SemivowelsGlides,
    Vowels,
    Stops,
    Others,
}

impl BroadClass {
    pub const COUNT: usize = 8;

    pub const ALL: [BroadClass; 8] = [
        BroadClass::Affricate,
        BroadClass::Closures,
        BroadClass::Fricative,
        BroadClass::Nasals,
        BroadClass::SemivowelsGlides,
        BroadClass::Vowels,
        BroadClass::Stops,
        BroadClass::Others,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<BroadClass> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BroadClass::Affricate => "Affricate",
            BroadClass::Closures => "Closures",
            BroadClass::Fricative => "Fricative",
            BroadClass::Nasals => "Nasals",
            BroadClass::SemivowelsGlides => "SemivowelsGlides",
            BroadClass::Vowels => "Vowels",
            BroadClass::Stops => "Stops",
            BroadClass::Others => "Others",
        }
    }

    /// Phone symbols that belong to this class.
    pub fn phones(self) -> &'static [&'static str] {
        match self {
            BroadClass::Affricate => &["jh", "ch"],
            BroadClass::Closures => &["bcl", "dcl", "gcl", "pcl", "tck", "tcl", "kcl"],
            BroadClass::Fricative => &["s", "sh", "z", "zh", "f", "th", "v", "dh"],
            BroadClass::Nasals => &["m", "n", "ng", "em", "en", "eng", "nx"],
            BroadClass::SemivowelsGlides => &["l", "r", "w", "y", "hh", "hv", "el"],
            BroadClass::Vowels => &[
                "iy", "ih", "eh", "ey", "ae", "aa", "aw", "ay", "ah", "ao", "oy", "ow", "uh", "uw",
                "ux", "er", "ax", "ix", "axr", "ax-h",
            ],
            BroadClass::Stops => &["b", "d", "g", "p", "t", "k", "dx", "q"],
            BroadClass::Others => &["pau", "epi", "h#"],
        }
    }
}

impl fmt::Display for BroadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Class of a known phone symbol, `None` for anything outside the inventory.
pub fn lookup_broad_class(phone: &str) -> Option<BroadClass> {
    BroadClass::ALL
        .into_iter()
        .find(|class| class.phones().contains(&phone))
}

/// Total mapping from phone symbol to broad class. Unknown symbols land in
/// [`BroadClass::Others`]; use [`lookup_broad_class`] to detect them.
pub fn phone_to_broad_class(phone: &str) -> BroadClass {
    lookup_broad_class(phone).unwrap_or(BroadClass::Others)
}

/// Standard 61 → 39 TIMIT folding, used by the phone probe.
///
/// Closures and silences fold to `sil`; `q` is folded to `sil` as well so the
/// function stays total.
pub fn fold_phone(phone: &str) -> &str {
    match phone {
        "ao" => "aa",
        "ax" | "ax-h" => "ah",
        "axr" => "er",
        "hv" => "hh",
        "ix" => "ih",
        "el" => "l",
        "em" => "m",
        "en" | "nx" => "n",
        "eng" => "ng",
        "zh" => "sh",
        "ux" => "uw",
        "pcl" | "tcl" | "tck" | "kcl" | "bcl" | "dcl" | "gcl" | "h#" | "pau" | "epi" | "q" => "sil",
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_table_symbol_maps_to_its_row() {
        for class in BroadClass::ALL {
            for phone in class.phones() {
                assert_eq!(phone_to_broad_class(phone), class, "phone {phone}");
            }
        }
    }

    #[test]
    fn table_rows_are_disjoint() {
        let mut seen = std::collections::HashSet::new();
        for class in BroadClass::ALL {
            for phone in class.phones() {
                assert!(seen.insert(*phone), "{phone} listed twice");
            }
        }
    }

    #[test]
    fn named_examples() {
        assert_eq!(phone_to_broad_class("jh"), BroadClass::Affricate);
        assert_eq!(phone_to_broad_class("ng"), BroadClass::Nasals);
        assert_eq!(phone_to_broad_class("q"), BroadClass::Stops);
        assert_eq!(phone_to_broad_class("h#"), BroadClass::Others);
    }

    #[test]
    fn unknown_phone_is_others() {
        assert_eq!(lookup_broad_class("xyz"), None);
        assert_eq!(phone_to_broad_class("xyz"), BroadClass::Others);
    }

    #[test]
    fn index_round_trips() {
        for (i, class) in BroadClass::ALL.into_iter().enumerate() {
            assert_eq!(class.index(), i);
            assert_eq!(BroadClass::from_index(i), Some(class));
        }
        assert_eq!(BroadClass::from_index(8), None);
    }

    #[test]
    fn folding_reduces_inventory() {
        let folded: std::collections::BTreeSet<_> = BroadClass::ALL
            .into_iter()
            .flat_map(|c| c.phones().iter().map(|p| fold_phone(p)))
            .collect();
        // 61 symbols + tck alias fold to 39 plus "sil" counted once
        assert_eq!(folded.len(), 39);
    }
}
