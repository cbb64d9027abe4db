//! Descriptor, noun and template registries.
//!
//! The three collections together define the combinatorial space of the
//! dataset. They are loaded from line-delimited JSON files (see the
//! `data/` directory of this crate for the shipped set) and are immutable
//! once loaded.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compiler::ArticleRules;
use crate::error::{Error, Result};
use crate::jsonl;

/// Slot marker for singular noun phrases.
pub const SINGULAR_SLOT: &str = "[NOUN PHRASE]";
/// Slot marker for plural noun phrases.
pub const PLURAL_SLOT: &str = "[PLURAL NOUN PHRASE]";

/// Number of templates in the canonical template set.
pub const CANONICAL_TEMPLATE_COUNT: usize = 26;
/// Noun counts of the canonical noun list, by gender class (female, male, unspecified).
pub const CANONICAL_NOUN_COUNTS: (usize, usize, usize) = (10, 11, 9);

const SHIPPED_DESCRIPTORS: &str = include_str!("../data/descriptors.jsonl");
const SHIPPED_NOUNS: &str = include_str!("../data/nouns.jsonl");
const SHIPPED_TEMPLATES: &str = include_str!("../data/templates.jsonl");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Ability,
    Age,
    BodyType,
    Characteristics,
    Cultural,
    GenderAndSex,
    Nationality,
    Nonce,
    PoliticalIdeologies,
    RaceEthnicity,
    Religion,
    SexualOrientation,
    SocioeconomicClass,
}

impl Axis {
    pub const ALL: [Axis; 13] = [
        Axis::Ability,
        Axis::Age,
        Axis::BodyType,
        Axis::Characteristics,
        Axis::Cultural,
        Axis::GenderAndSex,
        Axis::Nationality,
        Axis::Nonce,
        Axis::PoliticalIdeologies,
        Axis::RaceEthnicity,
        Axis::Religion,
        Axis::SexualOrientation,
        Axis::SocioeconomicClass,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Ability => "ability",
            Axis::Age => "age",
            Axis::BodyType => "body_type",
            Axis::Characteristics => "characteristics",
            Axis::Cultural => "cultural",
            Axis::GenderAndSex => "gender_and_sex",
            Axis::Nationality => "nationality",
            Axis::Nonce => "nonce",
            Axis::PoliticalIdeologies => "political_ideologies",
            Axis::RaceEthnicity => "race_ethnicity",
            Axis::Religion => "religion",
            Axis::SexualOrientation => "sexual_orientation",
            Axis::SocioeconomicClass => "socioeconomic_class",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown axis {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    BeforeNoun,
    AfterNoun,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderRestriction {
    #[default]
    None,
    FemaleOnly,
    MaleOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preferredness {
    ReviewedUnlabeled,
    Dispreferred,
    Polarizing,
    Unreviewed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderClass {
    Female,
    Male,
    Unspecified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plurality {
    Singular,
    Plural,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Positive,
    Negative,
    Neutral,
}

/// A demographic term slotted into noun phrases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    pub text: String,
    pub axis: Axis,
    #[serde(default)]
    pub bucket: Option<String>,
    pub placement: Placement,
    #[serde(default)]
    pub gender_restriction: GenderRestriction,
    pub preferredness: Preferredness,
    /// Rendered form inside plural noun phrases, when the default rules get it wrong.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plural_override: Option<String>,
}

impl Descriptor {
    pub fn bucket_name(&self) -> &str {
        self.bucket.as_deref().unwrap_or("")
    }
}

/// Same shape as [`Descriptor`] but with the axis left as free text, so an
/// unknown axis surfaces as a validation error instead of a parse error.
#[derive(Deserialize)]
struct DescriptorRow {
    text: String,
    axis: String,
    #[serde(default)]
    bucket: Option<String>,
    placement: Placement,
    #[serde(default)]
    gender_restriction: GenderRestriction,
    preferredness: Preferredness,
    #[serde(default)]
    plural_override: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounEntry {
    pub singular: String,
    pub plural: String,
    pub gender_class: GenderClass,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub pattern: String,
    pub slot_plurality: Plurality,
    pub stance: Stance,
}

impl Template {
    pub fn slot_marker(&self) -> &'static str {
        match self.slot_plurality {
            Plurality::Singular => SINGULAR_SLOT,
            Plurality::Plural => PLURAL_SLOT,
        }
    }
}

/// The loaded descriptor, noun and template collections.
#[derive(Clone, Debug)]
pub struct Registry {
    descriptors: Vec<Descriptor>,
    nouns: Vec<NounEntry>,
    templates: Vec<Template>,
    article_rules: ArticleRules,
    by_text: HashMap<String, usize>,
}

impl Registry {
    /// Assemble a registry without running any checks beyond indexing.
    /// Later duplicates of a descriptor text are shadowed in lookups.
    pub fn from_parts(descriptors: Vec<Descriptor>, nouns: Vec<NounEntry>, templates: Vec<Template>) -> Self {
        let mut by_text = HashMap::with_capacity(descriptors.len());
        for (idx, d) in descriptors.iter().enumerate() {
            by_text.entry(d.text.clone()).or_insert(idx);
        }
        Registry {
            descriptors,
            nouns,
            templates,
            article_rules: ArticleRules::shipped().clone(),
            by_text,
        }
    }

    pub fn with_article_rules(mut self, rules: ArticleRules) -> Self {
        self.article_rules = rules;
        self
    }

    /// The registry compiled into this crate.
    pub fn shipped() -> Self {
        load_registry(
            SHIPPED_DESCRIPTORS.as_bytes(),
            SHIPPED_NOUNS.as_bytes(),
            SHIPPED_TEMPLATES.as_bytes(),
        )
        .expect("shipped registry is valid")
    }

    /// Load `descriptors.jsonl`, `nouns.jsonl` and `templates.jsonl` from a
    /// directory, plus `article_exceptions.json` when present.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<BufReader<File>> {
            let path = dir.join(name);
            File::open(&path)
                .map(BufReader::new)
                .map_err(|e| Error::Lookup(format!("{}: {e}", path.display())))
        };
        let mut reg = load_named(
            (open("descriptors.jsonl")?, "descriptors.jsonl"),
            (open("nouns.jsonl")?, "nouns.jsonl"),
            (open("templates.jsonl")?, "templates.jsonl"),
        )?;
        let exceptions = dir.join("article_exceptions.json");
        if exceptions.exists() {
            reg.article_rules = ArticleRules::from_reader(File::open(exceptions)?)?;
        }
        Ok(reg)
    }

    pub fn descriptors(&self) -> &[Descriptor] {
        &self.descriptors
    }

    pub fn nouns(&self) -> &[NounEntry] {
        &self.nouns
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn article_rules(&self) -> &ArticleRules {
        &self.article_rules
    }

    pub fn descriptor(&self, text: &str) -> Option<&Descriptor> {
        self.by_text.get(text).map(|&i| &self.descriptors[i])
    }

    pub fn template(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn noun(&self, singular: &str) -> Option<&NounEntry> {
        self.nouns.iter().find(|n| n.singular == singular)
    }

    /// Nouns that `descriptor` may be paired with.
    pub fn compatible_nouns(&self, descriptor: &Descriptor) -> Result<Vec<&NounEntry>> {
        let known = self
            .descriptor(&descriptor.text)
            .ok_or_else(|| Error::Lookup(format!("descriptor {:?} is not in the registry", descriptor.text)))?;
        Ok(self
            .nouns
            .iter()
            .filter(|n| noun_allowed(known.gender_restriction, n.gender_class))
            .collect())
    }

    pub fn validate(&self) -> ValidationReport {
        validate_registry(self)
    }
}

pub(crate) fn noun_allowed(restriction: GenderRestriction, class: GenderClass) -> bool {
    match restriction {
        GenderRestriction::None => true,
        GenderRestriction::FemaleOnly => class == GenderClass::Female,
        GenderRestriction::MaleOnly => class == GenderClass::Male,
    }
}

/// Load the three registry collections from JSONL streams.
///
/// Parse failures carry the offending line number. A duplicated descriptor
/// text or an axis outside the fixed set of 13 fails the load, as does any
/// structural violation found by [`validate_registry`]. Shape deviations
/// (e.g. a template count other than 26) are left to the validation report.
pub fn load_registry<D: BufRead, N: BufRead, T: BufRead>(descriptors: D, nouns: N, templates: T) -> Result<Registry> {
    load_named((descriptors, "descriptors"), (nouns, "nouns"), (templates, "templates"))
}

fn load_named<D: BufRead, N: BufRead, T: BufRead>(
    (descriptor_src, descriptor_name): (D, &str),
    (noun_src, noun_name): (N, &str),
    (template_src, template_name): (T, &str),
) -> Result<Registry> {
    let mut descriptors = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    jsonl::for_each_record(descriptor_src, descriptor_name, |line, row: DescriptorRow| {
        let axis = Axis::from_str(&row.axis)
            .map_err(|_| Error::Validation(format!("{descriptor_name}:{line}: unknown axis {:?}", row.axis)))?;
        if seen.insert(row.text.clone(), line).is_some() {
            return Err(Error::Duplicate {
                kind: "descriptor",
                key: row.text,
            });
        }
        descriptors.push(Descriptor {
            text: row.text,
            axis,
            bucket: row.bucket.filter(|b| !b.is_empty()),
            placement: row.placement,
            gender_restriction: row.gender_restriction,
            preferredness: row.preferredness,
            plural_override: row.plural_override.filter(|p| !p.is_empty()),
        });
        Ok(())
    })?;
    let nouns: Vec<NounEntry> = jsonl::read_records(noun_src, noun_name)?;
    let templates: Vec<Template> = jsonl::read_records(template_src, template_name)?;

    let registry = Registry::from_parts(descriptors, nouns, templates);
    let report = validate_registry(&registry);
    let structural: Vec<_> = report
        .violations
        .iter()
        .filter(|v| v.kind == ViolationKind::Structural)
        .map(|v| v.message.clone())
        .collect();
    if !structural.is_empty() {
        return Err(Error::Validation(structural.join("; ")));
    }
    for warning in &report.warnings {
        log::warn!("{warning}");
    }
    Ok(registry)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A per-record invariant is broken; compiling would produce bad sentences.
    Structural,
    /// The registry deviates from the canonical collection sizes.
    Shape,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    pub female_only: usize,
    pub male_only: usize,
    pub descriptor_count: usize,
    pub noun_count: usize,
    pub template_count: usize,
    pub axis_counts: BTreeMap<Axis, usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_structurally_sound(&self) -> bool {
        self.violations.iter().all(|v| v.kind == ViolationKind::Shape)
    }

    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "descriptors: {}  nouns: {}  templates: {}",
            self.descriptor_count, self.noun_count, self.template_count
        )?;
        writeln!(
            f,
            "gender-restricted: female_only={} male_only={}",
            self.female_only, self.male_only
        )?;
        for (axis, n) in &self.axis_counts {
            writeln!(f, "  {axis}: {n}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        if self.violations.is_empty() {
            writeln!(f, "no violations")
        } else {
            for v in &self.violations {
                let tag = match v.kind {
                    ViolationKind::Structural => "error",
                    ViolationKind::Shape => "shape",
                };
                writeln!(f, "{tag}: {}", v.message)?;
            }
            Ok(())
        }
    }
}

/// Check every registry invariant and report all violations found.
pub fn validate_registry(reg: &Registry) -> ValidationReport {
    use ViolationKind::*;

    let mut report = ValidationReport {
        descriptor_count: reg.descriptors.len(),
        noun_count: reg.nouns.len(),
        template_count: reg.templates.len(),
        ..Default::default()
    };
    if reg.descriptors.is_empty() {
        report.warnings.push("registry has no descriptors".to_string());
    }

    let mut seen = HashMap::new();
    for d in &reg.descriptors {
        *report.axis_counts.entry(d.axis).or_default() += 1;
        match d.gender_restriction {
            GenderRestriction::FemaleOnly => report.female_only += 1,
            GenderRestriction::MaleOnly => report.male_only += 1,
            GenderRestriction::None => {}
        }
        if d.text.trim().is_empty() {
            report.push(Structural, "descriptor with empty text");
            continue;
        }
        if seen.insert(d.text.as_str(), ()).is_some() {
            report.push(Structural, format!("duplicate descriptor {:?}", d.text));
        }
        let after_bucket = d.bucket.as_deref() == Some("after_the_noun");
        if after_bucket != (d.placement == Placement::AfterNoun) {
            report.push(
                Structural,
                format!("descriptor {:?}: placement disagrees with bucket", d.text),
            );
        }
    }

    let mut plurals = HashMap::new();
    for n in &reg.nouns {
        if n.singular.trim().is_empty() || n.plural.trim().is_empty() {
            report.push(Structural, format!("noun {:?} has an empty form", n.singular));
        } else if plurals.insert(n.plural.as_str(), ()).is_some() {
            report.push(Structural, format!("noun plural {:?} is not distinct", n.plural));
        }
    }

    let mut ids = HashMap::new();
    for t in &reg.templates {
        if ids.insert(t.id.as_str(), ()).is_some() {
            report.push(Structural, format!("duplicate template id {:?}", t.id));
        }
        let singular = t.pattern.matches(SINGULAR_SLOT).count();
        let plural = t.pattern.matches(PLURAL_SLOT).count();
        let ok = match t.slot_plurality {
            Plurality::Singular => singular == 1 && plural == 0,
            Plurality::Plural => plural == 1 && singular == 0,
        };
        if !ok {
            report.push(
                Structural,
                format!(
                    "template {:?} must contain exactly one {} marker",
                    t.id,
                    t.slot_marker()
                ),
            );
        }
    }

    if reg.templates.len() != CANONICAL_TEMPLATE_COUNT {
        report.push(
            Shape,
            format!(
                "template count != {CANONICAL_TEMPLATE_COUNT} (found {})",
                reg.templates.len()
            ),
        );
    }
    let count = |class| reg.nouns.iter().filter(|n| n.gender_class == class).count();
    let found = (
        count(GenderClass::Female),
        count(GenderClass::Male),
        count(GenderClass::Unspecified),
    );
    if found != CANONICAL_NOUN_COUNTS {
        report.push(
            Shape,
            format!("noun counts (female, male, unspecified) = {found:?}, expected {CANONICAL_NOUN_COUNTS:?}"),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_registry_counts() {
        let reg = Registry::shipped();
        assert_eq!(reg.descriptors().len(), 594);
        assert_eq!(reg.nouns().len(), 30);
        assert_eq!(reg.templates().len(), 26);
        let report = reg.validate();
        assert!(report.is_valid(), "{report}");
        assert_eq!((report.female_only, report.male_only), (4, 3));
        assert_eq!(report.axis_counts.len(), 13);
    }

    #[test]
    fn compatible_noun_counts() {
        let reg = Registry::shipped();
        let count = |t: &str| reg.compatible_nouns(reg.descriptor(t).unwrap()).unwrap().len();
        assert_eq!(count("blind"), 30);
        assert_eq!(count("Latina"), 10);
        assert_eq!(count("Filipino"), 11);
        let latina: Vec<_> = reg
            .compatible_nouns(reg.descriptor("Latina").unwrap())
            .unwrap()
            .iter()
            .map(|n| n.singular.as_str())
            .collect();
        assert_eq!(latina.first(), Some(&"woman"));
        assert_eq!(latina.last(), Some(&"sister"));
    }

    #[test]
    fn total_pairings_follow_count_law() {
        let reg = Registry::shipped();
        let total: usize = reg
            .descriptors()
            .iter()
            .map(|d| reg.compatible_nouns(d).unwrap().len())
            .sum();
        assert_eq!(total, 594 * 30 - 4 * 20 - 3 * 19);
        assert_eq!(total, 17_683);
    }

    #[test]
    fn unknown_descriptor_lookup_fails() {
        let reg = Registry::shipped();
        let mut ghost = reg.descriptors()[0].clone();
        ghost.text = "not-a-descriptor".into();
        assert!(matches!(reg.compatible_nouns(&ghost), Err(Error::Lookup(_))));
    }

    #[test]
    fn empty_descriptor_file_loads_with_warning() {
        let reg = load_registry(&b""[..], SHIPPED_NOUNS.as_bytes(), SHIPPED_TEMPLATES.as_bytes()).unwrap();
        assert!(reg.descriptors().is_empty());
        let report = reg.validate();
        assert!(report.violations.is_empty());
        assert_eq!(report.warnings, vec!["registry has no descriptors".to_string()]);
    }

    #[test]
    fn duplicate_descriptor_is_named() {
        let line = r#"{"text":"blind","axis":"ability","bucket":"visual","placement":"before_noun","preferredness":"reviewed_unlabeled"}"#;
        let src = format!("{line}\n{line}\n");
        let err = load_registry(src.as_bytes(), SHIPPED_NOUNS.as_bytes(), SHIPPED_TEMPLATES.as_bytes()).unwrap_err();
        match err {
            Error::Duplicate { key, .. } => assert_eq!(key, "blind"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_axis_is_a_validation_error() {
        let src = r#"{"text":"blind","axis":"astrology","placement":"before_noun","preferredness":"unreviewed"}"#;
        let err = load_registry(src.as_bytes(), SHIPPED_NOUNS.as_bytes(), SHIPPED_TEMPLATES.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unknown axis"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = SHIPPED_DESCRIPTORS.lines().next().unwrap();
        let src = format!("{good}\n{{not json\n");
        let err = load_registry(src.as_bytes(), SHIPPED_NOUNS.as_bytes(), SHIPPED_TEMPLATES.as_bytes()).unwrap_err();
        match err {
            Error::Schema { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_template_is_one_shape_violation() {
        let reg = Registry::shipped();
        let mut templates = reg.templates().to_vec();
        templates.pop();
        let short = Registry::from_parts(reg.descriptors().to_vec(), reg.nouns().to_vec(), templates);
        let report = short.validate();
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.starts_with("template count != 26"));
        assert!(report.is_structurally_sound());
    }

    #[test]
    fn slot_marker_mismatch_is_structural() {
        let reg = Registry::shipped();
        let mut templates = reg.templates().to_vec();
        templates[0].slot_plurality = Plurality::Singular;
        let bad = Registry::from_parts(reg.descriptors().to_vec(), reg.nouns().to_vec(), templates);
        let report = bad.validate();
        assert_eq!(report.violations.len(), 1);
        assert!(!report.is_structurally_sound());
    }

    #[test]
    fn loading_is_deterministic() {
        let a = Registry::shipped();
        let b = Registry::shipped();
        assert_eq!(a.descriptors(), b.descriptors());
        assert_eq!(a.nouns(), b.nouns());
        assert_eq!(a.templates(), b.templates());
    }
}
