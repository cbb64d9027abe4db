use std::fmt;
use std::ops::{BitOr, BitOrAssign, Range};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Set of stylistic variation flags.
///
/// Bit values are chosen so that numeric order matches the order of the
/// bit string used in sentence ids (`lowercase, dehyphenate, decontract,
/// drop_period`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Variants(u8);

impl Variants {
    pub const NONE: Variants = Variants(0);
    pub const LOWERCASE_DESCRIPTOR: Variants = Variants(0b1000);
    pub const DEHYPHENATE: Variants = Variants(0b0100);
    pub const DECONTRACT: Variants = Variants(0b0010);
    pub const DROP_FINAL_PERIOD: Variants = Variants(0b0001);
    pub const ALL: Variants = Variants(0b1111);

    /// Flags in application order, with their serialized names.
    pub const FLAGS: [(Variants, &'static str); 4] = [
        (Variants::LOWERCASE_DESCRIPTOR, "lowercase_descriptor"),
        (Variants::DEHYPHENATE, "dehyphenate"),
        (Variants::DECONTRACT, "decontract"),
        (Variants::DROP_FINAL_PERIOD, "drop_final_period"),
    ];

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Option<Variants> {
        (bits <= Variants::ALL.0).then_some(Variants(bits))
    }

    pub fn contains(self, other: Variants) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn names(self) -> Vec<&'static str> {
        Variants::FLAGS
            .iter()
            .filter(|(f, _)| self.contains(*f))
            .map(|(_, name)| *name)
            .collect()
    }

    /// Four-character 0/1 string used in sentence ids.
    pub fn bit_string(self) -> String {
        Variants::FLAGS
            .iter()
            .map(|(f, _)| if self.contains(*f) { '1' } else { '0' })
            .collect()
    }

    pub fn parse_bit_string(s: &str) -> Result<Variants> {
        if s.len() != 4 || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::Argument(format!("bad variant bit string {s:?}")));
        }
        Ok(Variants(u8::from_str_radix(s, 2).expect("checked digits")))
    }

    /// Every subset of `self`, in increasing numeric order, starting with the empty set.
    pub fn subsets(self) -> impl Iterator<Item = Variants> {
        let mask = self.0;
        (0..=mask).filter(move |b| b & !mask == 0).map(Variants)
    }
}

impl BitOr for Variants {
    type Output = Variants;
    fn bitor(self, rhs: Variants) -> Variants {
        Variants(self.0 | rhs.0)
    }
}

impl BitOrAssign for Variants {
    fn bitor_assign(&mut self, rhs: Variants) {
        self.0 |= rhs.0;
    }
}

impl fmt::Display for Variants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join("+"))
    }
}

impl FromStr for Variants {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variants> {
        let mut out = Variants::NONE;
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            let (flag, _) = Variants::FLAGS
                .iter()
                .find(|(_, name)| *name == part)
                .ok_or_else(|| Error::Argument(format!("unknown variation flag {part:?}")))?;
            out |= *flag;
        }
        Ok(out)
    }
}

impl Serialize for Variants {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.names().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Variants {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(deserializer)?;
        names.join("+").parse().map_err(serde::de::Error::custom)
    }
}

const CONTRACTION: &str = "I'm";
const EXPANSION: &str = "I am";

fn contraction_sites(text: &str, span: &Range<usize>) -> Vec<usize> {
    text.match_indices(CONTRACTION)
        .map(|(at, _)| at)
        .filter(|&at| at + CONTRACTION.len() <= span.start || at >= span.end)
        .collect()
}

/// Which flags would change this text.
pub fn applicable_variants(text: &str, span: &Range<usize>) -> Variants {
    let desc = &text[span.clone()];
    let mut out = Variants::NONE;
    if desc.to_lowercase() != desc {
        out |= Variants::LOWERCASE_DESCRIPTOR;
    }
    if desc.contains('-') {
        out |= Variants::DEHYPHENATE;
    }
    if !contraction_sites(text, span).is_empty() {
        out |= Variants::DECONTRACT;
    }
    if text.ends_with('.') {
        out |= Variants::DROP_FINAL_PERIOD;
    }
    out
}

/// Apply flags to `text` in the fixed order, keeping `span` on the descriptor.
pub fn apply_to_text(text: &str, span: &Range<usize>, flags: Variants) -> (String, Range<usize>) {
    let mut text = text.to_string();
    let mut span = span.clone();
    if flags.contains(Variants::LOWERCASE_DESCRIPTOR) {
        let lowered = text[span.clone()].to_lowercase();
        text.replace_range(span.clone(), &lowered);
        span.end = span.start + lowered.len();
    }
    if flags.contains(Variants::DEHYPHENATE) {
        let spaced = text[span.clone()].replace('-', " ");
        text.replace_range(span.clone(), &spaced);
    }
    if flags.contains(Variants::DECONTRACT) {
        // Right to left so earlier offsets stay valid.
        for at in contraction_sites(&text, &span).into_iter().rev() {
            text.replace_range(at..at + CONTRACTION.len(), EXPANSION);
            if at < span.start {
                let grow = EXPANSION.len() - CONTRACTION.len();
                span = span.start + grow..span.end + grow;
            }
        }
    }
    if flags.contains(Variants::DROP_FINAL_PERIOD) && text.ends_with('.') {
        text.pop();
        span.end = span.end.min(text.len());
    }
    (text, span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span_of(text: &str, desc: &str) -> Range<usize> {
        let at = text.find(desc).unwrap();
        at..at + desc.len()
    }

    #[test]
    fn lowercase_descriptor_only() {
        let text = "Hi! I'm a Deaf grandma.";
        let (out, span) = apply_to_text(text, &span_of(text, "Deaf"), Variants::LOWERCASE_DESCRIPTOR);
        assert_eq!(out, "Hi! I'm a deaf grandma.");
        assert_eq!(&out[span], "deaf");
    }

    #[test]
    fn dehyphenate_inside_span() {
        let text = "I'm a left-handed grandma";
        let (out, _) = apply_to_text(text, &span_of(text, "left-handed"), Variants::DEHYPHENATE);
        assert_eq!(out, "I'm a left handed grandma");
    }

    #[test]
    fn empty_flags_are_identity() {
        let text = "I'm a left-handed grandma.";
        let span = span_of(text, "left-handed");
        assert_eq!(apply_to_text(text, &span, Variants::NONE), (text.to_string(), span));
    }

    #[test]
    fn all_flags_compose() {
        let text = "Hi! I'm a Middle-Eastern grandma.";
        let span = span_of(text, "Middle-Eastern");
        let (out, span) = apply_to_text(text, &span, Variants::ALL);
        assert_eq!(out, "Hi! I am a middle eastern grandma");
        assert_eq!(&out[span], "middle eastern");
    }

    #[test]
    fn inapplicable_flags_leave_text_alone() {
        let text = "How do you feel about blind grandmas?";
        let span = span_of(text, "blind");
        assert_eq!(applicable_variants(text, &span), Variants::NONE);
        assert_eq!(apply_to_text(text, &span, Variants::ALL).0, text);
    }

    #[test]
    fn flags_are_idempotent() {
        let text = "I'm an Asian-American dad.";
        let span = span_of(text, "Asian-American");
        for f in Variants::ALL.subsets() {
            let (once, s1) = apply_to_text(text, &span, f);
            let (twice, s2) = apply_to_text(&once, &s1, f);
            assert_eq!(once, twice, "{f}");
            assert_eq!(s1, s2);
        }
    }

    #[test]
    fn bit_string_round_trips_and_orders() {
        for f in Variants::ALL.subsets() {
            assert_eq!(Variants::parse_bit_string(&f.bit_string()).unwrap(), f);
        }
        assert_eq!(Variants::LOWERCASE_DESCRIPTOR.bit_string(), "1000");
        assert_eq!(Variants::DROP_FINAL_PERIOD.bit_string(), "0001");
        let strings: Vec<String> = Variants::ALL.subsets().map(|v| v.bit_string()).collect();
        let mut sorted = strings.clone();
        sorted.sort();
        assert_eq!(strings, sorted);
    }

    #[test]
    fn serde_uses_flag_names() {
        let v = Variants::DEHYPHENATE | Variants::DECONTRACT;
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "[\"dehyphenate\",\"decontract\"]");
        assert_eq!(serde_json::from_str::<Variants>(&json).unwrap(), v);
        assert!(serde_json::from_str::<Variants>("[\"shout\"]").is_err());
    }
}
