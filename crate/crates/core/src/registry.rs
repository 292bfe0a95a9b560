//! Name-keyed registries of interchangeable strategies.
//!
//! Each family of algorithm variants (block models, test statistics,
//! degree-propensity rules) lives behind a trait object. A [`Registry`] maps a
//! stable string name to a constructor so that the variant can be chosen from a
//! config file or a command-line flag.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Factory<T, A> = Box<dyn Fn(&A) -> Result<Box<T>> + Send + Sync>;

/// Constructors for one strategy family, keyed by name.
///
/// `A` is the argument handed to every constructor; families without
/// per-variant settings use `()`.
pub struct Registry<T: ?Sized, A = ()> {
    kind: &'static str,
    factories: BTreeMap<&'static str, Factory<T, A>>,
}

impl<T: ?Sized, A> Registry<T, A> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &'static str, factory: F) -> &mut Self
    where
        F: Fn(&A) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.factories.insert(name, Box::new(factory));
        self
    }

    pub fn build(&self, name: &str, args: &A) -> Result<Box<T>> {
        match self.factories.get(name) {
            Some(factory) => factory(args),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            }),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }
}

impl<T: ?Sized> Registry<T, ()> {
    pub fn get(&self, name: &str) -> Result<Box<T>> {
        self.build(name, &())
    }
}
