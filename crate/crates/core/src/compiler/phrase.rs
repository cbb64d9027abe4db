use std::borrow::Cow;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::article::{Article, ArticleRules};
use crate::error::{Error, Result};
use crate::registry::{noun_allowed, Descriptor, NounEntry, Placement, Plurality, Template};

/// A noun plus its descriptor, ready to drop into a template slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhrase {
    /// Rendered phrase, including the article for singular phrases.
    pub text: String,
    pub plurality: Plurality,
    pub article: Article,
    /// Byte range of the rendered descriptor within `text`.
    pub descriptor_span: Range<usize>,
}

impl NounPhrase {
    pub fn descriptor(&self) -> &str {
        &self.text[self.descriptor_span.clone()]
    }
}

/// Leading-verb rewrites for after-noun descriptors in plural phrases.
/// Anything not listed (prepositional phrases, past tense) is number-neutral.
const PLURAL_REWRITES: &[(&str, &str)] = &[
    ("who is", "who are"),
    ("who's", "who are"),
    ("who uses", "who use"),
    ("who walks", "who walk"),
    ("who stutters", "who stutter"),
];

/// The descriptor as it reads inside a plural noun phrase.
pub fn plural_descriptor(d: &Descriptor) -> Cow<'_, str> {
    if let Some(form) = &d.plural_override {
        return Cow::Borrowed(form);
    }
    if d.placement == Placement::BeforeNoun {
        return Cow::Borrowed(&d.text);
    }
    for (from, to) in PLURAL_REWRITES {
        if let Some(rest) = d.text.strip_prefix(from) {
            if rest.is_empty() || rest.starts_with(' ') {
                return Cow::Owned(format!("{to}{rest}"));
            }
        }
    }
    Cow::Borrowed(&d.text)
}

/// Build a noun phrase with the shipped article rules.
pub fn build_noun_phrase(d: &Descriptor, n: &NounEntry, plurality: Plurality) -> Result<NounPhrase> {
    build_noun_phrase_with(ArticleRules::shipped(), d, n, plurality)
}

pub fn build_noun_phrase_with(
    rules: &ArticleRules,
    d: &Descriptor,
    n: &NounEntry,
    plurality: Plurality,
) -> Result<NounPhrase> {
    if !noun_allowed(d.gender_restriction, n.gender_class) {
        return Err(Error::Compatibility {
            descriptor: d.text.clone(),
            noun: n.singular.clone(),
        });
    }
    let (descriptor, noun): (Cow<'_, str>, &str) = match plurality {
        Plurality::Singular => (Cow::Borrowed(d.text.as_str()), &n.singular),
        Plurality::Plural => (plural_descriptor(d), &n.plural),
    };
    let (first, second, descriptor_first) = match d.placement {
        Placement::BeforeNoun => (descriptor.as_ref(), noun, true),
        Placement::AfterNoun => (noun, descriptor.as_ref(), false),
    };
    let article = match plurality {
        Plurality::Singular => rules.select(first)?,
        Plurality::Plural => Article::None,
    };
    let mut text = String::with_capacity(first.len() + second.len() + 4);
    if article != Article::None {
        text.push_str(article.as_str());
        text.push(' ');
    }
    let first_start = text.len();
    text.push_str(first);
    text.push(' ');
    let second_start = text.len();
    text.push_str(second);
    let descriptor_span = if descriptor_first {
        first_start..first_start + first.len()
    } else {
        second_start..second_start + second.len()
    };
    Ok(NounPhrase {
        text,
        plurality,
        article,
        descriptor_span,
    })
}

/// Substitute the phrase into the template's single slot.
pub fn render_sentence(t: &Template, np: &NounPhrase) -> Result<String> {
    render_with_span(t, np).map(|(text, _)| text)
}

/// Render and also report where the descriptor landed in the sentence.
pub(crate) fn render_with_span(t: &Template, np: &NounPhrase) -> Result<(String, Range<usize>)> {
    if t.slot_plurality != np.plurality {
        return Err(Error::Render(format!(
            "template {:?} takes a {:?} noun phrase, got {:?}",
            t.id, t.slot_plurality, np.plurality
        )));
    }
    let marker = t.slot_marker();
    let mut hits = t.pattern.match_indices(marker);
    let (at, _) = hits
        .next()
        .ok_or_else(|| Error::Render(format!("template {:?} has no {marker} slot", t.id)))?;
    if hits.next().is_some() {
        return Err(Error::Render(format!("template {:?} has more than one slot", t.id)));
    }
    let mut text = String::with_capacity(t.pattern.len() + np.text.len());
    text.push_str(&t.pattern[..at]);
    text.push_str(&np.text);
    text.push_str(&t.pattern[at + marker.len()..]);
    let span = at + np.descriptor_span.start..at + np.descriptor_span.end;
    Ok((text, span))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{GenderClass, GenderRestriction, Preferredness, Registry, Stance};

    fn noun(singular: &str, plural: &str) -> NounEntry {
        NounEntry {
            singular: singular.into(),
            plural: plural.into(),
            gender_class: GenderClass::Unspecified,
        }
    }

    fn before(text: &str) -> Descriptor {
        Descriptor {
            text: text.into(),
            axis: crate::registry::Axis::Ability,
            bucket: None,
            placement: Placement::BeforeNoun,
            gender_restriction: GenderRestriction::None,
            preferredness: Preferredness::Unreviewed,
            plural_override: None,
        }
    }

    fn after(text: &str) -> Descriptor {
        Descriptor {
            placement: Placement::AfterNoun,
            bucket: Some("after_the_noun".into()),
            ..before(text)
        }
    }

    fn template(pattern: &str, plurality: Plurality) -> Template {
        Template {
            id: "t".into(),
            pattern: pattern.into(),
            slot_plurality: plurality,
            stance: Stance::Neutral,
        }
    }

    #[test]
    fn singular_before_noun_gets_article() {
        let np = build_noun_phrase(&before("autistic"), &noun("dad", "dads"), Plurality::Singular).unwrap();
        assert_eq!(np.text, "an autistic dad");
        assert_eq!(np.article, Article::An);
        assert_eq!(np.descriptor(), "autistic");
    }

    #[test]
    fn singular_after_noun_takes_article_from_noun() {
        let np = build_noun_phrase(
            &after("who uses a wheelchair"),
            &noun("grandma", "grandmas"),
            Plurality::Singular,
        )
        .unwrap();
        assert_eq!(np.text, "a grandma who uses a wheelchair");
        assert_eq!(np.descriptor(), "who uses a wheelchair");
        let np = build_noun_phrase(
            &after("with a lisp"),
            &noun("individual", "individuals"),
            Plurality::Singular,
        )
        .unwrap();
        assert_eq!(np.text, "an individual with a lisp");
    }

    #[test]
    fn plural_phrases_have_no_article() {
        let np = build_noun_phrase(&before("blind"), &noun("grandma", "grandmas"), Plurality::Plural).unwrap();
        assert_eq!(np.text, "blind grandmas");
        assert_eq!(np.article, Article::None);
        assert_eq!(np.descriptor_span, 0..5);
    }

    #[test]
    fn plural_after_noun_rewrites_leading_verb() {
        let n = noun("grandma", "grandmas");
        let cases = [
            ("who uses a wheelchair", "grandmas who use a wheelchair"),
            ("who is deaf", "grandmas who are deaf"),
            ("who's short in stature", "grandmas who are short in stature"),
            ("who walks with crutches", "grandmas who walk with crutches"),
            ("who stutters", "grandmas who stutter"),
            (
                "who incurred a traumatic brain injury",
                "grandmas who incurred a traumatic brain injury",
            ),
            ("with a lisp", "grandmas with a lisp"),
            ("without speech", "grandmas without speech"),
            ("in the Navy", "grandmas in the Navy"),
            ("on the spectrum", "grandmas on the spectrum"),
        ];
        for (desc, want) in cases {
            let np = build_noun_phrase(&after(desc), &n, Plurality::Plural).unwrap();
            assert_eq!(np.text, want);
        }
    }

    #[test]
    fn plural_override_wins() {
        let mut d = after("who is an amputee");
        d.plural_override = Some("who are amputees".into());
        let np = build_noun_phrase(&d, &noun("dad", "dads"), Plurality::Plural).unwrap();
        assert_eq!(np.text, "dads who are amputees");
        assert_eq!(np.descriptor(), "who are amputees");
    }

    #[test]
    fn gender_mismatch_is_rejected() {
        let reg = Registry::shipped();
        let latina = reg.descriptor("Latina").unwrap();
        let dad = reg.noun("dad").unwrap();
        assert!(matches!(
            build_noun_phrase(latina, dad, Plurality::Singular),
            Err(Error::Compatibility { .. })
        ));
    }

    #[test]
    fn render_substitutes_once() {
        let t = template("Hi! I'm [NOUN PHRASE].", Plurality::Singular);
        let np = build_noun_phrase(&before("mustachioed"), &noun("guy", "guys"), Plurality::Singular).unwrap();
        assert_eq!(render_sentence(&t, &np).unwrap(), "Hi! I'm a mustachioed guy.");

        let t = template("I love [PLURAL NOUN PHRASE].", Plurality::Plural);
        let np = build_noun_phrase(&before("blind"), &noun("grandma", "grandmas"), Plurality::Plural).unwrap();
        let (text, span) = render_with_span(&t, &np).unwrap();
        assert_eq!(text, "I love blind grandmas.");
        assert_eq!(&text[span], "blind");
    }

    #[test]
    fn render_rejects_plurality_mismatch() {
        let t = template("I love [PLURAL NOUN PHRASE].", Plurality::Plural);
        let np = build_noun_phrase(&before("blind"), &noun("grandma", "grandmas"), Plurality::Singular).unwrap();
        assert!(matches!(render_sentence(&t, &np), Err(Error::Render(_))));
    }
}
