use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use crate::compiler::SentenceRecord;
use crate::error::{Error, Result};
use crate::generation::{ClusterSpec, ResponseRecord};
use crate::registry::{Axis, Stance};

/// Styles appended to the shipped cluster members in the mock manifest.
const PADDING_STYLES: [&str; 5] = ["Calm", "Cheerful", "Formal", "Sincere", "Witty"];

/// Persona lines prepended to mock generation contexts.
const PERSONAS: [&str; 6] = [
    "I enjoy hiking on weekends.",
    "I work as a nurse.",
    "My favorite food is pizza.",
    "I have two cats.",
    "I play the guitar.",
    "I grew up near the ocean.",
];

/// Shift applied to one style for every record on an axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleSkew {
    pub style: usize,
    /// Mean additive probability shift, in [0, 0.5].
    pub shift: f64,
}

/// Knobs of the deterministic mock scorers. All outputs are pure
/// functions of (record id, profile).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockProfile {
    pub seed: u64,
    /// Median perplexity of a non-nonce sentence with no descriptor offset.
    pub ppl_base: f64,
    /// Per-sentence log-normal spread.
    pub ppl_log_sd: f64,
    /// Spread of the stable per-descriptor log offset; 0 makes all
    /// descriptors identically distributed.
    pub descriptor_ppl_spread: f64,
    pub nonce_ppl_multiplier: f64,
    /// Relative amplitude of the per-style jitter around uniform, in [0, 1).
    pub style_noise: f64,
    pub axis_style_skew: BTreeMap<Axis, StyleSkew>,
    pub offense_negativity_boost: f64,
}

impl Default for MockProfile {
    fn default() -> Self {
        MockProfile {
            seed: 0,
            ppl_base: 50.0,
            ppl_log_sd: 0.3,
            descriptor_ppl_spread: 0.0,
            nonce_ppl_multiplier: 1.0,
            style_noise: 0.5,
            axis_style_skew: BTreeMap::new(),
            offense_negativity_boost: 0.0,
        }
    }
}

impl MockProfile {
    pub fn with_seed(seed: u64) -> Self {
        MockProfile {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.ppl_base > 0.0 && self.ppl_base.is_finite()) {
            return bad(format!("ppl_base must be positive, got {}", self.ppl_base));
        }
        if !(self.ppl_log_sd >= 0.0 && self.descriptor_ppl_spread >= 0.0) {
            return bad("ppl_log_sd and descriptor_ppl_spread must be non-negative".into());
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
        if !(self.nonce_ppl_multiplier >= 1.0) {
            return bad(format!(
                "nonce_ppl_multiplier must be at least 1, got {}",
                self.nonce_ppl_multiplier
            ));
        }
        if !(0.0..1.0).contains(&self.style_noise) {
            return bad(format!("style_noise must lie in [0, 1), got {}", self.style_noise));
        }
        if !(0.0..=1.0).contains(&self.offense_negativity_boost) {
            return bad(format!(
                "offense_negativity_boost must lie in [0, 1], got {}",
                self.offense_negativity_boost
            ));
        }
        for (axis, skew) in &self.axis_style_skew {
            if !(0.0..=0.5).contains(&skew.shift) {
                return bad(format!(
                    "skew shift for {axis} must lie in [0, 0.5], got {}",
                    skew.shift
                ));
            }
        }
        Ok(())
    }
}

/// Uniform draw in (0, 1) keyed by `key`, a salt and the seed.
fn unit(key: &str, salt: &str, seed: u64) -> f64 {
    let mut buf = Vec::with_capacity(key.len() + salt.len() + 1);
    buf.extend_from_slice(key.as_bytes());
    buf.push(0x1f);
    buf.extend_from_slice(salt.as_bytes());
    let h = xxh64(&buf, seed);
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Standard normal draw via Box-Muller.
fn normal(key: &str, salt: &str, seed: u64) -> f64 {
    let u1 = unit(key, &format!("{salt}/u1"), seed);
    let u2 = unit(key, &format!("{salt}/u2"), seed);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Stable multiplier in [0.5, 1.5] that spreads a skew across descriptors.
pub fn skew_weight(descriptor: &str, seed: u64) -> f64 {
    0.5 + unit(descriptor, "skew", seed)
}

/// Log-normal perplexity around `ppl_base`, offset per descriptor and
/// scaled for nonce terms.
pub fn mock_perplexity(record: &SentenceRecord, profile: &MockProfile) -> f64 {
    let mut log_ppl = profile.ppl_base.ln() + profile.ppl_log_sd * normal(&record.id, "ppl", profile.seed);
    if profile.descriptor_ppl_spread > 0.0 {
        log_ppl += profile.descriptor_ppl_spread * normal(&record.descriptor_text, "ppl-offset", profile.seed);
    }
    let ppl = log_ppl.exp();
    if record.axis == Axis::Nonce {
        ppl * profile.nonce_ppl_multiplier
    } else {
        ppl
    }
}

/// Style vector for one response to `record`, keyed by `response_key`.
pub fn mock_style_vector_for(
    response_key: &str,
    record: &SentenceRecord,
    profile: &MockProfile,
    style_count: usize,
) -> Result<Vec<f64>> {
    if style_count == 0 {
        return Err(Error::Config("style count must be positive".into()));
    }
    let mut v: Vec<f64> = (0..style_count)
        .map(|s| 1.0 + profile.style_noise * (2.0 * unit(response_key, &format!("style{s}"), profile.seed) - 1.0))
        .collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);

    if let Some(skew) = profile.axis_style_skew.get(&record.axis) {
        if skew.style >= style_count {
            return Err(Error::Config(format!(
                "skew style index {} out of range for {style_count} styles",
                skew.style
            )));
        }
        let add = skew.shift * skew_weight(&record.descriptor_text, profile.seed);
        let old = v[skew.style];
        let new = old + add;
        if new > 1.0 {
            return Err(Error::Config(format!(
                "skew shift {add} pushes style {} above 1",
                skew.style
            )));
        }
        let scale = (1.0 - new) / (1.0 - old);
        v.iter_mut().for_each(|x| *x *= scale);
        v[skew.style] = new;
    }
    // final renormalization absorbs rounding
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    Ok(v)
}

/// Style vector keyed by the sentence itself.
pub fn mock_style_vector(record: &SentenceRecord, profile: &MockProfile, style_count: usize) -> Result<Vec<f64>> {
    mock_style_vector_for(&record.id, record, profile, style_count)
}

/// Offensiveness probability: a low-skewed base, raised toward 1 by the
/// negativity boost on negative-stance templates.
pub fn mock_offense(record: &SentenceRecord, stance: Stance, profile: &MockProfile) -> f64 {
    let base = unit(&record.id, "offense", profile.seed).powi(3);
    if stance == Stance::Negative {
        base + profile.offense_negativity_boost * (1.0 - base)
    } else {
        base
    }
}

/// The shipped cluster styles followed by a few unclustered ones.
pub fn mock_style_manifest() -> Vec<String> {
    ClusterSpec::shipped()
        .into_iter()
        .flat_map(|c| c.member_styles)
        .chain(PADDING_STYLES.iter().map(|s| s.to_string()))
        .collect()
}

/// Canned responses to `record`, each with a two-persona context.
pub fn mock_responses(record: &SentenceRecord, profile: &MockProfile, per_sentence: usize) -> Vec<ResponseRecord> {
    (0..per_sentence)
        .map(|i| {
            let response_id = format!("{}#{i}", record.id);
            let pick = |salt: &str| (unit(&response_id, salt, profile.seed) * PERSONAS.len() as f64) as usize;
            let a = pick("persona-a");
            let b = (a + 1 + pick("persona-b") % (PERSONAS.len() - 1)) % PERSONAS.len();
            ResponseRecord {
                context: Some(format!("{} {} {}", PERSONAS[a], PERSONAS[b], record.text)),
                text: format!("Tell me more about being {}.", record.descriptor_text),
                sentence_id: record.id.clone(),
                response_id,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_dataset, VariationPolicy};
    use crate::registry::Registry;
    use crate::stats::median;
    use std::sync::OnceLock;

    const FIXTURE_TEMPLATES: [&str; 5] = ["im_np", "hi_im_np", "i_love_pnp", "i_hate_pnp", "im_not_np"];

    fn fixture() -> &'static [SentenceRecord] {
        static RECORDS: OnceLock<Vec<SentenceRecord>> = OnceLock::new();
        RECORDS.get_or_init(|| {
            compile_dataset(&Registry::shipped(), VariationPolicy::None)
                .unwrap()
                .map(Result::unwrap)
                .filter(|r| FIXTURE_TEMPLATES.contains(&r.template_id.as_str()))
                .collect()
        })
    }

    fn shipped_records(template: &str) -> Vec<SentenceRecord> {
        fixture()
            .iter()
            .filter(|r| r.template_id == template)
            .cloned()
            .collect()
    }

    fn medians(records: &[SentenceRecord], profile: &MockProfile) -> (f64, f64) {
        let (nonce, other): (Vec<_>, Vec<_>) = records.iter().partition(|r| r.axis == Axis::Nonce);
        let ppl = |rs: Vec<&SentenceRecord>| {
            let v: Vec<f64> = rs.into_iter().take(1000).map(|r| mock_perplexity(r, profile)).collect();
            median(&v).unwrap()
        };
        (ppl(nonce), ppl(other))
    }

    #[test]
    fn perplexity_is_deterministic_and_positive() {
        let rs = shipped_records("im_np");
        let p = MockProfile::with_seed(3);
        assert_eq!(mock_perplexity(&rs[0], &p), mock_perplexity(&rs[0], &p));
        assert!(rs.iter().take(500).all(|r| mock_perplexity(r, &p) > 0.0));
        assert_ne!(
            mock_perplexity(&rs[0], &p),
            mock_perplexity(&rs[0], &MockProfile::with_seed(4))
        );
    }

    #[test]
    fn nonce_multiplier_scales_median() {
        // nonce sentences over several templates give well over 1000 draws
        let rs = fixture().to_vec();
        assert!(rs.iter().filter(|r| r.axis == Axis::Nonce).count() >= 1000);
        let ten = MockProfile {
            nonce_ppl_multiplier: 10.0,
            ..MockProfile::with_seed(1)
        };
        let (n, o) = medians(&rs, &ten);
        assert!((n / o / 10.0 - 1.0).abs() < 0.1, "ratio {}", n / o);
        let (n, o) = medians(&rs, &MockProfile::with_seed(1));
        assert!((n / o - 1.0).abs() < 0.05, "ratio {}", n / o);
    }

    #[test]
    fn style_vectors_sum_to_one_and_skew_axis() {
        let rs = shipped_records("i_love_pnp");
        let s = mock_style_manifest().len();
        assert_eq!(s, 24);
        let skewed = MockProfile {
            axis_style_skew: [(Axis::Ability, StyleSkew { style: 3, shift: 0.2 })].into(),
            ..MockProfile::with_seed(9)
        };
        let mut ability = (0.0, 0usize);
        let mut other = (0.0, 0usize);
        for r in &rs {
            let v = mock_style_vector(r, &skewed, s).unwrap();
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(v.iter().all(|p| *p >= 0.0));
            let slot = if r.axis == Axis::Ability {
                &mut ability
            } else {
                &mut other
            };
            slot.0 += v[3];
            slot.1 += 1;
        }
        let gap = ability.0 / ability.1 as f64 - other.0 / other.1 as f64;
        assert!((gap - 0.2).abs() < 0.03, "gap {gap}");
    }

    #[test]
    fn bad_skew_is_a_config_error() {
        let rs = shipped_records("im_np");
        let ability = rs.iter().find(|r| r.axis == Axis::Ability).unwrap();
        let p = MockProfile {
            axis_style_skew: [(Axis::Ability, StyleSkew { style: 30, shift: 0.2 })].into(),
            ..MockProfile::default()
        };
        assert!(matches!(mock_style_vector(ability, &p, 24), Err(Error::Config(_))));
        let p = MockProfile {
            axis_style_skew: [(Axis::Ability, StyleSkew { style: 0, shift: 0.5 })].into(),
            ..MockProfile::default()
        };
        // a single style cannot absorb any shift
        assert!(mock_style_vector(ability, &p, 1).is_err());
        assert!(MockProfile {
            axis_style_skew: [(Axis::Age, StyleSkew { style: 0, shift: 0.7 })].into(),
            ..MockProfile::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn offense_boost() {
        let reg = Registry::shipped();
        let rs: Vec<&SentenceRecord> = fixture().iter().step_by(7).collect();
        let p = MockProfile {
            offense_negativity_boost: 0.9,
            ..MockProfile::with_seed(2)
        };
        for r in rs {
            let stance = reg.template(&r.template_id).unwrap().stance;
            let o = mock_offense(r, stance, &p);
            assert!((0.0..=1.0).contains(&o));
            if stance == Stance::Negative {
                assert!(o >= 0.9);
            }
            assert_eq!(o, mock_offense(r, stance, &p));
            let plain = mock_offense(r, stance, &MockProfile::with_seed(2));
            assert_eq!(plain, mock_offense(r, Stance::Positive, &MockProfile::with_seed(2)));
        }
    }

    #[test]
    fn responses_are_stable() {
        let rs = shipped_records("im_np");
        let p = MockProfile::default();
        let a = mock_responses(&rs[0], &p, 3);
        assert_eq!(a, mock_responses(&rs[0], &p, 3));
        assert_eq!(a[2].response_id, format!("{}#2", rs[0].id));
        assert!(a[0].context.as_ref().unwrap().ends_with(&rs[0].text));
    }

    #[test]
    fn profile_round_trips() {
        let p = MockProfile {
            axis_style_skew: [(Axis::BodyType, StyleSkew { style: 1, shift: 0.1 })].into(),
            ..MockProfile::with_seed(5)
        };
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"body_type\""));
        assert_eq!(serde_json::from_str::<MockProfile>(&text).unwrap(), p);
        let partial: MockProfile = serde_json::from_str("{\"seed\": 8}").unwrap();
        assert_eq!(partial.ppl_base, 50.0);
        assert!(serde_json::from_str::<MockProfile>("{\"sed\": 8}").is_err());
    }
}
