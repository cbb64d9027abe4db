//! Lookup from sentence id to the metadata the analyses group by.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::sync::Arc;

use crate::compiler::{SentenceRecord, Variants};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::registry::Axis;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceMeta {
    pub descriptor: Arc<str>,
    pub axis: Axis,
    pub template_id: Arc<str>,
    pub noun: Arc<str>,
    pub variants: Variants,
    pub text: Arc<str>,
}

/// Compiled-dataset metadata keyed by sentence id.
#[derive(Clone, Debug, Default)]
pub struct SentenceIndex {
    by_id: HashMap<String, SentenceMeta>,
    strings: HashSet<Arc<str>>,
}

impl SentenceIndex {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, s: &str) -> Arc<str> {
        if let Some(existing) = self.strings.get(s) {
            return existing.clone();
        }
        let arc: Arc<str> = Arc::from(s);
        self.strings.insert(arc.clone());
        arc
    }

    pub fn insert(&mut self, record: &SentenceRecord) -> Result<()> {
        if self.by_id.contains_key(&record.id) {
            return Err(Error::Duplicate {
                kind: "sentence",
                key: record.id.clone(),
            });
        }
        let meta = SentenceMeta {
            descriptor: self.intern(&record.descriptor_text),
            axis: record.axis,
            template_id: self.intern(&record.template_id),
            noun: self.intern(&record.noun_singular),
            variants: record.variants,
            text: Arc::from(record.text.as_str()),
        };
        self.by_id.insert(record.id.clone(), meta);
        Ok(())
    }

    pub fn from_records<'a, I: IntoIterator<Item = &'a SentenceRecord>>(records: I) -> Result<Self> {
        let mut index = SentenceIndex::new();
        for r in records {
            index.insert(r)?;
        }
        Ok(index)
    }

    /// Build from a `sentences.jsonl` stream.
    pub fn read<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut index = SentenceIndex::new();
        jsonl::for_each_record(reader, source_name, |_, r: SentenceRecord| index.insert(&r))?;
        Ok(index)
    }

    pub fn get(&self, id: &str) -> Option<&SentenceMeta> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}
