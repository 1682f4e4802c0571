//! Name-keyed registries of interchangeable strategies.
//!
//! Bound methods, traffic generators and verification checks are each a
//! family of trait objects; a [`Registry`] holds one family and resolves
//! command-line selectors to instances.

use std::sync::Arc;

use thiserror::Error;

/// Anything selectable by name.
pub trait Named {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown {kind} `{name}` (available: {available})")]
pub struct UnknownName {
    pub kind: &'static str,
    pub name: String,
    pub available: String,
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<Arc<T>>,
}

impl<T: ?Sized> Clone for Registry<T> {
    fn clone(&self) -> Self {
        Registry {
            kind: self.kind,
            entries: self.entries.clone(),
        }
    }
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds `entry`, replacing an existing entry of the same name in place.
    pub fn register(&mut self, entry: Arc<T>) {
        match self.entries.iter().position(|e| e.name() == entry.name()) {
            Some(i) => self.entries[i] = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>, UnknownName> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .cloned()
            .ok_or_else(|| UnknownName {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<T>> {
        self.entries.iter()
    }

    /// A comma-separated list of names, or `all` (also `both`) for every
    /// entry. The result follows registration order without duplicates.
    pub fn select(&self, selector: &str) -> Result<Vec<Arc<T>>, UnknownName> {
        if matches!(selector, "all" | "both") {
            return Ok(self.entries.clone());
        }
        let wanted: Vec<&str> = selector.split(',').map(str::trim).collect();
        for name in &wanted {
            self.get(name)?;
        }
        Ok(self.entries.iter().filter(|e| wanted.contains(&e.name())).cloned().collect())
    }
}
