//! Name-keyed registries of strategy implementations.
//!
//! Every family of interchangeable algorithms in the crate exposes a
//! `registry()` constructor returning a [`Registry`] pre-populated with the
//! built-in variants. Callers may register additional variants before
//! resolving names coming from a scenario file or the command line.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::Value;

use crate::error::{Error, Result};

/// Free-form strategy parameters, e.g. `{"theta": 0.5}` for the tree code.
pub type Options = serde_json::Map<String, Value>;

pub type Factory<T> = fn(&Options) -> Result<Box<T>>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, factory: Factory<T>) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn create(&self, name: &str, options: &Options) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(factory) => factory(options),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }

    pub fn create_default(&self, name: &str) -> Result<Box<T>> {
        self.create(name, &Options::new())
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("entries", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Reads an optional numeric option, rejecting non-numeric values.
pub fn option_f64(options: &Options, key: &str, default: f64) -> Result<f64> {
    match options.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::invalid(format!("option `{key}` must be a number, got {v}"))),
    }
}

/// Rejects option keys outside `allowed`.
pub fn check_option_keys(options: &Options, allowed: &[&str]) -> Result<()> {
    for key in options.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::invalid(format!("unknown option `{key}`")));
        }
    }
    Ok(())
}
