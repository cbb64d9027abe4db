//! Training-data preparation for bias-controlled generation: descriptor
//! masking, unsafe-token stripping, bias values and tagged pairs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::{mean_style_profiles, ResponseRecord, StyleGrid};

/// Literal marker some dialogue models emit in front of flagged text.
pub const UNSAFE_TOKEN: &str = "_POTENTIALLY_UNSAFE__";

/// Neutral stand-ins for a masked descriptor, tried in order. The first
/// one sharing no word with the descriptor is used.
pub const MASK_CANDIDATES: [&str; 4] = ["left-handed", "ambidextrous", "right-handed", "unremarkable"];

/// Beta preset for smaller models whose style vectors move less.
pub const BETA_SMALL_MODEL: f64 = 0.0003;
/// Beta preset for larger models.
pub const BETA_LARGE_MODEL: f64 = 0.0030;

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Replacement used when masking `descriptor`.
pub fn mask_replacement(descriptor: &str) -> &'static str {
    let own: Vec<String> = words(descriptor).collect();
    MASK_CANDIDATES
        .iter()
        .find(|c| words(c).all(|w| !own.contains(&w)))
        .copied()
        .unwrap_or(MASK_CANDIDATES[0])
}

fn is_boundary(c: Option<char>) -> bool {
    c.is_none_or(|c| !c.is_alphanumeric())
}

/// Compiled matcher for one descriptor and its dehyphenated form.
#[derive(Clone, Debug)]
pub struct DescriptorMask {
    pattern: Regex,
    replacement: &'static str,
}

impl DescriptorMask {
    pub fn new(descriptor: &str) -> Result<Self> {
        if descriptor.trim().is_empty() {
            return Err(Error::Argument("cannot mask an empty descriptor".into()));
        }
        let mut forms = vec![regex::escape(descriptor)];
        if descriptor.contains('-') {
            forms.push(regex::escape(&descriptor.replace('-', " ")));
        }
        let pattern = RegexBuilder::new(&forms.join("|"))
            .case_insensitive(true)
            .build()
            .map_err(|e| Error::Argument(e.to_string()))?;
        Ok(DescriptorMask {
            pattern,
            replacement: mask_replacement(descriptor),
        })
    }

    pub fn replacement(&self) -> &'static str {
        self.replacement
    }

    /// Byte ranges of bounded occurrences, left to right, non-overlapping.
    pub fn occurrences(&self, text: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut pos = 0;
        while let Some(m) = self.pattern.find_at(text, pos) {
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            if is_boundary(before) && is_boundary(after) {
                out.push((m.start(), m.end()));
                pos = m.end();
            } else {
                // retry from the next character so overlapping candidates are seen
                pos = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
            }
            if pos > text.len() {
                break;
            }
        }
        out
    }

    pub fn apply(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for (start, end) in self.occurrences(text) {
            out.push_str(&text[last..start]);
            out.push_str(self.replacement);
            last = end;
        }
        out.push_str(&text[last..]);
        out
    }
}

/// Replace every case-insensitive, word-bounded mention of the descriptor
/// (hyphenated or not) with a neutral descriptor.
///
/// ```
/// use hb_core::mitigation::mask_descriptor;
/// assert_eq!(mask_descriptor("I like mustachioed guys.", "mustachioed"), "I like left-handed guys.");
/// ```
pub fn mask_descriptor(response: &str, descriptor: &str) -> String {
    match DescriptorMask::new(descriptor) {
        Ok(mask) => mask.apply(response),
        Err(_) => response.to_string(),
    }
}

/// Remove the unsafe marker, collapsing the whitespace around each removal.
///
/// ```
/// use hb_core::mitigation::strip_unsafe_token;
/// assert_eq!(strip_unsafe_token("Sure! _POTENTIALLY_UNSAFE__"), "Sure!");
/// ```
pub fn strip_unsafe_token(text: &str) -> String {
    let mut pieces = text.split(UNSAFE_TOKEN);
    let mut out = pieces.next().unwrap_or_default().to_string();
    for piece in pieces {
        let had_space = out.ends_with(char::is_whitespace) || piece.starts_with(char::is_whitespace);
        out.truncate(out.trim_end().len());
        let rest = piece.trim_start();
        if had_space && !out.is_empty() && !rest.is_empty() {
            out.push(' ');
        }
        out.push_str(rest);
    }
    out
}

/// Strip the unsafe marker, then mask the descriptor.
pub fn prepare_for_classification(response: &str, descriptor: &str) -> String {
    mask_descriptor(&strip_unsafe_token(response), descriptor)
}

/// Exponent on the direction norm in the bias value denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Alpha {
    #[default]
    Zero,
    One,
    Two,
}

impl Alpha {
    pub const ALL: [Alpha; 3] = [Alpha::Zero, Alpha::One, Alpha::Two];

    pub fn exponent(self) -> i32 {
        match self {
            Alpha::Zero => 0,
            Alpha::One => 1,
            Alpha::Two => 2,
        }
    }
}

impl TryFrom<u8> for Alpha {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Alpha::Zero),
            1 => Ok(Alpha::One),
            2 => Ok(Alpha::Two),
            other => Err(Error::Config(format!("alpha must be 0, 1 or 2, got {other}"))),
        }
    }
}

impl From<Alpha> for u8 {
    fn from(a: Alpha) -> u8 {
        a.exponent() as u8
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.exponent())
    }
}

impl std::str::FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<u8>()
            .map_err(|_| Error::Config(format!("alpha must be 0, 1 or 2, got {s:?}")))?
            .try_into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasProjectionConfig {
    pub alpha: Alpha,
    pub beta: f64,
}

impl BiasProjectionConfig {
    pub fn new(alpha: Alpha, beta: f64) -> Result<Self> {
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        Ok(BiasProjectionConfig { alpha, beta })
    }
}

/// Scaled projection of `p − m̄` onto the bias direction `m_d − m̄`.
///
/// With `alpha = 0` a zero direction gives 0; otherwise it is an error.
pub fn bias_value(p: &[f64], m_d: &[f64], m_bar: &[f64], alpha: Alpha) -> Result<f64> {
    if m_d.len() != p.len() || m_bar.len() != p.len() {
        return Err(Error::Shape {
            expected: p.len(),
            found: if m_d.len() != p.len() { m_d.len() } else { m_bar.len() },
        });
    }
    let mut dot = 0.0;
    let mut norm_sq = 0.0;
    for ((pi, di), bi) in p.iter().zip(m_d).zip(m_bar) {
        let dir = di - bi;
        dot += (pi - bi) * dir;
        norm_sq += dir * dir;
    }
    match alpha {
        Alpha::Zero => Ok(dot),
        _ if norm_sq == 0.0 => Err(Error::DegenerateDirection(
            "descriptor mean equals the global mean".into(),
        )),
        Alpha::One => Ok(dot / norm_sq.sqrt()),
        Alpha::Two => Ok(dot / norm_sq),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasLabel {
    Bias,
    NoBias,
}

impl BiasLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasLabel::Bias => "bias",
            BiasLabel::NoBias => "no_bias",
        }
    }
}

/// One context/response training example with its bias tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedPair {
    pub response_id: String,
    /// Original context with the tag appended as its last token.
    pub context: String,
    pub response: String,
    pub label: BiasLabel,
    pub bias_value: f64,
    pub descriptor: String,
    pub template_id: String,
}

/// Append the tag as a final whitespace-separated token.
pub fn tag_context(context: &str, label: BiasLabel) -> String {
    let base = context.trim_end();
    if base.is_empty() {
        label.as_str().to_string()
    } else {
        format!("{base} {}", label.as_str())
    }
}

/// Label every response in the grid. Output is ordered by template,
/// descriptor, then position in `responses`.
pub fn tag_pairs(
    grid: &StyleGrid,
    responses: &[ResponseRecord],
    config: BiasProjectionConfig,
) -> Result<Vec<TaggedPair>> {
    let profiles = mean_style_profiles(grid)?;
    let by_id: HashMap<&str, (usize, &ResponseRecord)> = responses
        .iter()
        .enumerate()
        .map(|(i, r)| (r.response_id.as_str(), (i, r)))
        .collect();

    let mut out = Vec::with_capacity(grid.response_count());
    let mut skipped: BTreeMap<&str, usize> = BTreeMap::new();
    for (t, d, cell) in grid.cells() {
        let m_d = &profiles.descriptor_means[d];
        let mut rows = Vec::with_capacity(cell.len());
        for (rid, p) in cell {
            let &(idx, record) = by_id.get(rid.as_str()).ok_or_else(|| Error::Join {
                offenders: vec![rid.clone()],
            })?;
            let context = record
                .context
                .as_deref()
                .ok_or_else(|| Error::Argument(format!("response {rid:?} has no context")))?;
            let b = match bias_value(p, m_d, &profiles.global_mean, config.alpha) {
                Ok(b) => b,
                Err(Error::DegenerateDirection(_)) => {
                    *skipped.entry(d).or_default() += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let label = if b > config.beta {
                BiasLabel::Bias
            } else {
                BiasLabel::NoBias
            };
            rows.push((
                idx,
                TaggedPair {
                    response_id: rid.clone(),
                    context: tag_context(context, label),
                    response: record.text.clone(),
                    label,
                    bias_value: b,
                    descriptor: d.to_string(),
                    template_id: t.to_string(),
                },
            ));
        }
        rows.sort_by_key(|(idx, _)| *idx);
        out.extend(rows.into_iter().map(|(_, pair)| pair));
    }
    for (d, n) in skipped {
        log::warn!(
            "descriptor {d:?}: mean equals the global mean; skipped {n} response(s) at alpha {}",
            config.alpha
        );
    }
    Ok(out)
}

/// Mean |b| of two exemplar sets under one alpha.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub alpha: Alpha,
    pub mean_abs_a: f64,
    pub mean_abs_b: f64,
    /// `mean_abs_a / mean_abs_b`.
    pub ratio: f64,
}

/// Compare bias-value magnitudes of two named response sets under every
/// alpha. Sets hold response ids present in the grid.
pub fn alpha_comparison(grid: &StyleGrid, set_a: &[String], set_b: &[String]) -> Result<Vec<AlphaSummary>> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::Argument("exemplar sets must be non-empty".into()));
    }
    let profiles = mean_style_profiles(grid)?;
    let mut located: HashMap<&str, (&str, &Vec<f64>)> = HashMap::new();
    for (_, d, cell) in grid.cells() {
        for (rid, p) in cell {
            located.insert(rid, (d, p));
        }
    }
    let mean_abs = |set: &[String], alpha: Alpha| -> Result<f64> {
        let mut total = 0.0;
        for rid in set {
            let (d, p) = located
                .get(rid.as_str())
                .ok_or_else(|| Error::Lookup(format!("response {rid:?} is not in the style grid")))?;
            let m_d = &profiles.descriptor_means[*d];
            total += bias_value(p, m_d, &profiles.global_mean, alpha)
                .map_err(|e| match e {
                    Error::DegenerateDirection(_) => {
                        Error::DegenerateDirection(format!("descriptor {d:?} mean equals the global mean"))
                    }
                    other => other,
                })?
                .abs();
        }
        Ok(total / set.len() as f64)
    };
    Alpha::ALL
        .into_iter()
        .map(|alpha| {
            let a = mean_abs(set_a, alpha)?;
            let b = mean_abs(set_b, alpha)?;
            Ok(AlphaSummary {
                alpha,
                mean_abs_a: a,
                mean_abs_b: b,
                ratio: a / b,
            })
        })
        .collect()
}
