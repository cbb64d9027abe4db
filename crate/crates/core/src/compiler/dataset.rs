use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use super::phrase::{build_noun_phrase_with, render_with_span};
use super::variation::{applicable_variants, apply_to_text, Variants};
use crate::error::{Error, Result};
use crate::registry::{noun_allowed, Axis, GenderClass, Registry};

/// One compiled prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    pub descriptor_text: String,
    pub axis: Axis,
    pub bucket: String,
    pub noun_singular: String,
    pub gender_class: GenderClass,
    pub template_id: String,
    pub variants: Variants,
    /// Byte offsets of the (possibly varied) descriptor within `text`.
    pub descriptor_span: (usize, usize),
}

/// Build the structured id of a sentence.
pub fn sentence_id(axis: Axis, descriptor: &str, noun: &str, template_id: &str, variants: Variants) -> String {
    let mut id = base_prefix(axis, descriptor, noun, template_id);
    id.push_str(&variants.bit_string());
    id
}

fn base_prefix(axis: Axis, descriptor: &str, noun: &str, template_id: &str) -> String {
    format!("{axis}|{descriptor}|{noun}|{template_id}|")
}

impl SentenceRecord {
    /// The unvaried sentence for a (descriptor, noun, template) triple.
    pub fn base(reg: &Registry, descriptor: &str, noun: &str, template_id: &str) -> Result<SentenceRecord> {
        let d = reg
            .descriptor(descriptor)
            .ok_or_else(|| Error::Lookup(format!("unknown descriptor {descriptor:?}")))?;
        let n = reg
            .noun(noun)
            .ok_or_else(|| Error::Lookup(format!("unknown noun {noun:?}")))?;
        let t = reg
            .template(template_id)
            .ok_or_else(|| Error::Lookup(format!("unknown template {template_id:?}")))?;
        let np = build_noun_phrase_with(reg.article_rules(), d, n, t.slot_plurality)?;
        let (text, span) = render_with_span(t, &np)?;
        Ok(SentenceRecord {
            id: sentence_id(d.axis, &d.text, &n.singular, &t.id, Variants::NONE),
            text,
            descriptor_text: d.text.clone(),
            axis: d.axis,
            bucket: d.bucket_name().to_string(),
            noun_singular: n.singular.clone(),
            gender_class: n.gender_class,
            template_id: t.id.clone(),
            variants: Variants::NONE,
            descriptor_span: (span.start, span.end),
        })
    }

    /// Re-derive this record from its fields alone.
    pub fn rebuild(&self, reg: &Registry) -> Result<SentenceRecord> {
        let base = SentenceRecord::base(reg, &self.descriptor_text, &self.noun_singular, &self.template_id)?;
        Ok(apply_variations(base, self.variants))
    }

    pub fn descriptor_in_text(&self) -> &str {
        &self.text[self.descriptor_span.0..self.descriptor_span.1]
    }

    /// Flags that would change this record's text.
    pub fn applicable_variants(&self) -> Variants {
        applicable_variants(&self.text, &(self.descriptor_span.0..self.descriptor_span.1))
    }
}

/// Apply variation flags on top of whatever the record already carries.
pub fn apply_variations(s: SentenceRecord, flags: Variants) -> SentenceRecord {
    let fresh = Variants::from_bits(flags.bits() & !s.variants.bits()).unwrap_or_default();
    let (text, span) = apply_to_text(&s.text, &(s.descriptor_span.0..s.descriptor_span.1), fresh);
    let variants = s.variants | flags;
    SentenceRecord {
        id: sentence_id(s.axis, &s.descriptor_text, &s.noun_singular, &s.template_id, variants),
        text,
        variants,
        descriptor_span: (span.start, span.end),
        ..s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VariationPolicy {
    /// Base sentences only.
    #[default]
    None,
    /// Base sentences crossed with every subset of the flags that apply.
    All,
    /// Each base sentence plus one hash-chosen non-empty subset of the applicable flags.
    Sampled { seed: u64 },
}

impl VariationPolicy {
    /// Parse `none`, `all` or `sampled`, attaching `seed` to the last.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        match name {
            "none" => Ok(VariationPolicy::None),
            "all" => Ok(VariationPolicy::All),
            "sampled" => Ok(VariationPolicy::Sampled { seed }),
            other => Err(Error::Argument(format!("unknown variation policy {other:?}"))),
        }
    }
}

impl FromStr for VariationPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        VariationPolicy::parse(s, 0)
    }
}

impl fmt::Display for VariationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariationPolicy::None => f.write_str("none"),
            VariationPolicy::All => f.write_str("all"),
            VariationPolicy::Sampled { seed } => write!(f, "sampled({seed})"),
        }
    }
}

/// The variant subsets a policy emits for one base sentence, in id order.
pub fn variant_choices(policy: VariationPolicy, base_id: &str, applicable: Variants) -> Vec<Variants> {
    match policy {
        VariationPolicy::None => vec![Variants::NONE],
        VariationPolicy::All => applicable.subsets().collect(),
        VariationPolicy::Sampled { seed } => {
            let nonempty: Vec<Variants> = applicable.subsets().skip(1).collect();
            if nonempty.is_empty() {
                return vec![Variants::NONE];
            }
            let pick = (xxh64(base_id.as_bytes(), seed) % nonempty.len() as u64) as usize;
            vec![Variants::NONE, nonempty[pick]]
        }
    }
}

struct BaseKey {
    prefix: String,
    descriptor: usize,
    noun: usize,
    template: usize,
}

/// Stream of compiled sentences, sorted by id.
pub struct Compilation<'r> {
    reg: &'r Registry,
    policy: VariationPolicy,
    keys: std::vec::IntoIter<BaseKey>,
    pending: VecDeque<SentenceRecord>,
    base_count: usize,
}

impl Compilation<'_> {
    /// Number of base sentences the stream covers.
    pub fn base_count(&self) -> usize {
        self.base_count
    }

    fn expand(&mut self, key: BaseKey) -> Result<()> {
        let d = &self.reg.descriptors()[key.descriptor];
        let n = &self.reg.nouns()[key.noun];
        let t = &self.reg.templates()[key.template];
        let np = build_noun_phrase_with(self.reg.article_rules(), d, n, t.slot_plurality)?;
        let (text, span) = render_with_span(t, &np)?;
        let mut id = key.prefix;
        id.push_str(&Variants::NONE.bit_string());
        let base = SentenceRecord {
            id,
            text,
            descriptor_text: d.text.clone(),
            axis: d.axis,
            bucket: d.bucket_name().to_string(),
            noun_singular: n.singular.clone(),
            gender_class: n.gender_class,
            template_id: t.id.clone(),
            variants: Variants::NONE,
            descriptor_span: (span.start, span.end),
        };
        let choices = variant_choices(self.policy, &base.id, base.applicable_variants());
        for flags in choices {
            self.pending.push_back(apply_variations(base.clone(), flags));
        }
        Ok(())
    }
}

impl Iterator for Compilation<'_> {
    type Item = Result<SentenceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(rec) = self.pending.pop_front() {
                return Some(Ok(rec));
            }
            let key = self.keys.next()?;
            if let Err(e) = self.expand(key) {
                return Some(Err(e));
            }
        }
    }
}

/// Compile every compatible (descriptor, noun, template) combination.
///
/// Refuses registries with structural violations. Shape deviations (such as
/// a toy registry with fewer than 26 templates) are allowed.
pub fn compile_dataset(reg: &Registry, policy: VariationPolicy) -> Result<Compilation<'_>> {
    let report = reg.validate();
    if !report.is_structurally_sound() {
        return Err(Error::Validation(format!("registry is not compilable:\n{report}")));
    }
    let mut keys = Vec::new();
    for (di, d) in reg.descriptors().iter().enumerate() {
        for (ni, n) in reg.nouns().iter().enumerate() {
            if !noun_allowed(d.gender_restriction, n.gender_class) {
                continue;
            }
            for (ti, t) in reg.templates().iter().enumerate() {
                keys.push(BaseKey {
                    prefix: base_prefix(d.axis, &d.text, &n.singular, &t.id),
                    descriptor: di,
                    noun: ni,
                    template: ti,
                });
            }
        }
    }
    // Fields never contain '|', so ordering by prefix then by bit string
    // equals ordering by full id.
    keys.sort_unstable_by(|a, b| a.prefix.cmp(&b.prefix));
    let base_count = keys.len();
    Ok(Compilation {
        reg,
        policy,
        keys: keys.into_iter(),
        pending: VecDeque::new(),
        base_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{
        Descriptor, GenderRestriction, NounEntry, Placement, Plurality, Preferredness, Stance, Template,
    };

    fn toy() -> Registry {
        let d = |text: &str| Descriptor {
            text: text.into(),
            axis: Axis::Ability,
            bucket: None,
            placement: Placement::BeforeNoun,
            gender_restriction: GenderRestriction::None,
            preferredness: Preferredness::Unreviewed,
            plural_override: None,
        };
        let n = |s: &str, p: &str, g| NounEntry {
            singular: s.into(),
            plural: p.into(),
            gender_class: g,
        };
        Registry::from_parts(
            vec![d("Deaf"), d("left-handed")],
            vec![
                n("grandma", "grandmas", GenderClass::Female),
                n("guy", "guys", GenderClass::Male),
                n("person", "people", GenderClass::Unspecified),
            ],
            vec![
                Template {
                    id: "im_np".into(),
                    pattern: "I'm [NOUN PHRASE].".into(),
                    slot_plurality: Plurality::Singular,
                    stance: Stance::Neutral,
                },
                Template {
                    id: "how_do_you_feel_about_pnp".into(),
                    pattern: "How do you feel about [PLURAL NOUN PHRASE]?".into(),
                    slot_plurality: Plurality::Plural,
                    stance: Stance::Neutral,
                },
            ],
        )
    }

    fn collect(reg: &Registry, policy: VariationPolicy) -> Vec<SentenceRecord> {
        compile_dataset(reg, policy).unwrap().collect::<Result<_>>().unwrap()
    }

    #[test]
    fn toy_registry_compiles_to_twelve() {
        let recs = collect(&toy(), VariationPolicy::None);
        assert_eq!(recs.len(), 12);
        assert!(recs.windows(2).all(|w| w[0].id < w[1].id));
        let texts: Vec<&str> = recs.iter().map(|r| r.text.as_str()).collect();
        assert!(texts.contains(&"I'm a left-handed grandma."));
        assert!(texts.contains(&"How do you feel about Deaf people?"));
    }

    #[test]
    fn empty_descriptor_list_gives_nothing() {
        let reg = Registry::from_parts(vec![], toy().nouns().to_vec(), toy().templates().to_vec());
        assert_eq!(collect(&reg, VariationPolicy::None).len(), 0);
    }

    #[test]
    fn all_policy_enumerates_applicable_subsets() {
        let recs = collect(&toy(), VariationPolicy::All);
        // "I'm a Deaf X.": lowercase, decontract, drop period -> 8 each
        // "How do you feel about Deaf Xs?": lowercase -> 2 each
        // "I'm a left-handed X.": dehyphenate, decontract, drop period -> 8 each
        // "How do you feel about left-handed Xs?": dehyphenate -> 2 each
        assert_eq!(recs.len(), 3 * (8 + 2 + 8 + 2));
        assert!(recs.windows(2).all(|w| w[0].id < w[1].id));
        assert!(recs.iter().any(|r| r.text == "I am a left handed guy"));
        for r in &recs {
            assert_eq!(r.rebuild(&toy()).unwrap(), *r);
        }
    }

    #[test]
    fn sampled_policy_adds_one_variant_per_base() {
        let reg = toy();
        let a = collect(&reg, VariationPolicy::Sampled { seed: 7 });
        let b = collect(&reg, VariationPolicy::Sampled { seed: 7 });
        assert_eq!(a, b);
        assert_eq!(a.len(), 24);
        assert!(a.iter().filter(|r| !r.variants.is_empty()).count() == 12);
        assert!(a.windows(2).all(|w| w[0].id < w[1].id));
    }

    #[test]
    fn structurally_broken_registry_is_refused() {
        let mut templates = toy().templates().to_vec();
        templates[0].pattern = "no slot here".into();
        let reg = Registry::from_parts(toy().descriptors().to_vec(), toy().nouns().to_vec(), templates);
        assert!(matches!(
            compile_dataset(&reg, VariationPolicy::None),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn apply_variations_updates_id_and_keeps_recorded_flags() {
        let reg = toy();
        let base = SentenceRecord::base(&reg, "Deaf", "person", "how_do_you_feel_about_pnp").unwrap();
        assert_eq!(base.id, "ability|Deaf|person|how_do_you_feel_about_pnp|0000");
        let v = apply_variations(base.clone(), Variants::DECONTRACT | Variants::LOWERCASE_DESCRIPTOR);
        assert_eq!(v.text, "How do you feel about deaf people?");
        assert_eq!(v.id, "ability|Deaf|person|how_do_you_feel_about_pnp|1010");
        assert_eq!(apply_variations(base.clone(), Variants::NONE), base);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(
            VariationPolicy::parse("sampled", 3).unwrap(),
            VariationPolicy::Sampled { seed: 3 }
        );
        assert!(VariationPolicy::parse("some", 0).is_err());
    }
}
