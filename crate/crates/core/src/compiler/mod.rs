//! Sentence compilation: noun phrases, template rendering, stylistic
//! variations and the full dataset stream.

mod article;
mod dataset;
mod phrase;
mod variation;

pub use article::{select_article, Article, ArticleRules};
pub use dataset::{
    apply_variations, compile_dataset, sentence_id, variant_choices, Compilation, SentenceRecord, VariationPolicy,
};
pub use phrase::{build_noun_phrase, build_noun_phrase_with, plural_descriptor, render_sentence, NounPhrase};
pub use variation::{applicable_variants, apply_to_text, Variants};
