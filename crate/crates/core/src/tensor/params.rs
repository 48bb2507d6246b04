//! Named parameter storage shared by models, the optimizer and checkpoints.

use std::cell::RefCell;
use std::rc::Rc;

use indexmap::IndexMap;

use super::{Gradients, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Prng;

pub struct ParamEntry<E: Scalar> {
    pub shape: Vec<usize>,
    pub data: Rc<Vec<E>>,
    /// Whether decoupled weight decay applies; norm gains and biases opt out.
    pub decay: bool,
}

/// Ordered map of named parameters.
///
/// A forward pass reads parameters through [`ParamStore::leaf`], which hands
/// out a traced tensor sharing the stored buffer and records the leaf id so
/// gradients can later be grouped by name. Iteration order is registration
/// order, which keeps every downstream consumer (optimizer, checkpoints,
/// gradient reports) deterministic.
pub struct ParamStore<E: Scalar> {
    entries: IndexMap<String, ParamEntry<E>>,
    bindings: RefCell<Vec<(u64, String)>>,
}

impl<E: Scalar> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Scalar> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore {
            entries: IndexMap::new(),
            bindings: RefCell::new(Vec::new()),
        }
    }

    pub fn register(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        data: Vec<E>,
        decay: bool,
    ) -> Result<()> {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "param {name}: shape/data mismatch"
        );
        if self.entries.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                shape,
                data: Rc::new(data),
                decay,
            },
        );
        Ok(())
    }

    /// Truncated-normal weight (sigma-scaled, clipped at two sigma), decayed.
    pub fn init_trunc_normal(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        std: f64,
        rng: &mut Prng,
    ) -> Result<()> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| E::from_f64(rng.next_trunc_normal(std)))
            .collect();
        self.register(name, shape, data, true)
    }

    pub fn init_zeros(&mut self, name: &str, shape: Vec<usize>, decay: bool) -> Result<()> {
        let n = shape.iter().product();
        self.register(name, shape, vec![E::zero(); n], decay)
    }

    pub fn init_ones(&mut self, name: &str, shape: Vec<usize>, decay: bool) -> Result<()> {
        let n = shape.iter().product();
        self.register(name, shape, vec![E::one(); n], decay)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn entry(&self, name: &str) -> Result<&ParamEntry<E>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Traced leaf tensor for a parameter; the binding is recorded so
    /// [`ParamStore::grads_by_name`] can attribute gradients.
    pub fn leaf(&self, name: &str) -> Result<Tensor<E>> {
        let entry = self.entry(name)?;
        let t = Tensor::leaf(entry.shape.clone(), Rc::clone(&entry.data));
        self.bindings.borrow_mut().push((t.id(), name.to_string()));
        Ok(t)
    }

    /// Drop leaf-id bindings from previous forward passes.
    pub fn clear_bindings(&self) {
        self.bindings.borrow_mut().clear();
    }

    pub fn set_data(&mut self, name: &str, data: Vec<E>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        assert_eq!(entry.data.len(), data.len(), "param {name}: length change");
        entry.data = Rc::new(data);
        Ok(())
    }

    /// Add `delta` to one coordinate in place (finite-difference probes).
    pub fn nudge(&mut self, name: &str, index: usize, delta: f64) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        let data = Rc::make_mut(&mut entry.data);
        data[index] = data[index] + E::from_f64(delta);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<E>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.data.len()).sum()
    }

    /// Gradients grouped by parameter name, in registration order. A
    /// parameter no loss reached maps to zeros; a parameter read through
    /// several leaves gets the sum of its per-leaf gradients.
    pub fn grads_by_name(&self, grads: &Gradients<E>) -> IndexMap<String, Vec<E>> {
        let mut out: IndexMap<String, Vec<E>> = self
            .entries
            .iter()
            .map(|(name, e)| (name.clone(), vec![E::zero(); e.data.len()]))
            .collect();
        for (id, name) in self.bindings.borrow().iter() {
            if let Some(g) = grads.by_id(*id) {
                let acc = out.get_mut(name).expect("binding for unregistered param");
                for (a, &v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        out
    }
}
