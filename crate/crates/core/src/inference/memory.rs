use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{Derivation, Fact, Source};

use super::InferenceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryEntry {
    pub fact: Fact,
    pub source: Source,
}

/// Facts established in one consultation, at most one value per attribute,
/// in insertion order. Facts are never retracted or overwritten.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct WorkingMemory {
    entries: Vec<MemoryEntry>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl WorkingMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Memory holding `facts` as given. Two values for one attribute is an
    /// error.
    pub fn from_given(facts: &[Fact]) -> Result<Self, InferenceError> {
        let mut m = Self::new();
        for f in facts {
            m.insert(f.clone(), Source::Given)?;
        }
        Ok(m)
    }

    pub fn get(&self, attribute: &str) -> Option<&MemoryEntry> {
        self.index.get(attribute).map(|&i| &self.entries[i])
    }

    pub fn value_of(&self, attribute: &str) -> Option<&str> {
        self.get(attribute).map(|e| e.fact.value.as_str())
    }

    pub fn holds(&self, fact: &Fact) -> bool {
        self.value_of(&fact.attribute) == Some(fact.value.as_str())
    }

    pub fn contains_attribute(&self, attribute: &str) -> bool {
        self.index.contains_key(attribute)
    }

    /// Adds a fact. Returns `Ok(false)` when the same fact is already
    /// present and an error when the attribute holds another value.
    pub fn insert(&mut self, fact: Fact, source: Source) -> Result<bool, InferenceError> {
        if let Some(existing) = self.value_of(&fact.attribute) {
            if existing == fact.value {
                return Ok(false);
            }
            return Err(InferenceError::ConflictingFact {
                attribute: fact.attribute,
                existing: existing.to_string(),
                value: fact.value,
            });
        }
        self.index.insert(fact.attribute.clone(), self.entries.len());
        self.entries.push(MemoryEntry { fact, source });
        Ok(true)
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.entries.iter().map(|e| &e.fact)
    }

    pub fn derivation_of(&self, attribute: &str) -> Option<&Derivation> {
        match &self.get(attribute)?.source {
            Source::Derived { derivation } => Some(derivation),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_value_per_attribute() {
        let mut m = WorkingMemory::new();
        assert!(m.insert(Fact::new("a", "yes"), Source::Given).unwrap());
        assert!(!m.insert(Fact::new("a", "yes"), Source::Asked).unwrap());
        assert!(m.insert(Fact::new("a", "no"), Source::Given).is_err());
        assert_eq!(m.value_of("a"), Some("yes"));
        assert_eq!(m.get("a").unwrap().source, Source::Given);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn from_given_rejects_two_values() {
        assert!(WorkingMemory::from_given(&[Fact::new("a", "yes"), Fact::new("a", "no")]).is_err());
        let m = WorkingMemory::from_given(&[Fact::new("a", "yes"), Fact::new("b", "no")]).unwrap();
        assert_eq!(m.facts().count(), 2);
        assert!(m.holds(&Fact::new("b", "no")));
    }
}
