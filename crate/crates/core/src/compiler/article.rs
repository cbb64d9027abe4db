use std::collections::BTreeSet;
use std::io::Read;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SHIPPED_EXCEPTIONS: &str = include_str!("../../data/article_exceptions.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Article {
    A,
    An,
    None,
}

impl Article {
    pub fn as_str(self) -> &'static str {
        match self {
            Article::A => "a",
            Article::An => "an",
            Article::None => "",
        }
    }
}

/// Indefinite-article choice: vowel letter means "an", except for words
/// listed in the exception sets (matched case-insensitively on the whole
/// first word).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArticleRules {
    force_a: BTreeSet<String>,
    force_an: BTreeSet<String>,
}

#[derive(Deserialize)]
struct ExceptionFile {
    #[serde(default)]
    a: Vec<String>,
    #[serde(default)]
    an: Vec<String>,
}

impl ArticleRules {
    pub fn shipped() -> &'static ArticleRules {
        static RULES: OnceLock<ArticleRules> = OnceLock::new();
        RULES.get_or_init(|| ArticleRules::from_reader(SHIPPED_EXCEPTIONS.as_bytes()).expect("valid exception list"))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let file: ExceptionFile = serde_json::from_reader(reader)?;
        Ok(Self::new(file.a, file.an))
    }

    pub fn new<I, J>(force_a: I, force_an: J) -> Self
    where
        I: IntoIterator<Item = String>,
        J: IntoIterator<Item = String>,
    {
        ArticleRules {
            force_a: force_a.into_iter().map(|w| w.to_lowercase()).collect(),
            force_an: force_an.into_iter().map(|w| w.to_lowercase()).collect(),
        }
    }

    pub fn select(&self, phrase_head: &str) -> Result<Article> {
        let head = phrase_head.split_whitespace().next().unwrap_or("");
        if head.is_empty() {
            return Err(Error::Argument("article selection needs a non-empty word".into()));
        }
        let folded = head.to_lowercase();
        if self.force_a.contains(&folded) {
            return Ok(Article::A);
        }
        if self.force_an.contains(&folded) {
            return Ok(Article::An);
        }
        let first = folded.chars().next().unwrap_or('x');
        Ok(if "aeiou".contains(first) {
            Article::An
        } else {
            Article::A
        })
    }
}

/// Pick "a" or "an" for the first word of a singular noun phrase using the
/// shipped exception list.
pub fn select_article(phrase_head: &str) -> Result<Article> {
    ArticleRules::shipped().select(phrase_head)
}
