//! Named trainable tensors with gradient accumulators.

use std::collections::HashMap;

use super::Tensor;

/// Index of a parameter within its [`ParamSet`]. Stable for the set's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered collection of named parameters. Registration order is the
/// canonical order for optimizer state and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    items: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name:?}"
        );
        let grad = Tensor::zeros(value.rows(), value.cols());
        let id = self.items.len();
        self.items.push(Param {
            name: name.to_string(),
            value,
            grad,
        });
        self.by_name.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.items[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.items[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.items[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.items[id.0].grad
    }

    pub fn accumulate_grad(&mut self, id: ParamId, delta: &Tensor) {
        self.items[id.0].grad.add_assign(delta);
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.items {
            p.grad.fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, c: f32) {
        for p in &mut self.items {
            p.grad.scale_assign(c);
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.items.len()).map(ParamId)
    }

    /// (name, value) pairs in registration order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.items.iter().map(|p| (p.name.as_str(), &p.value))
    }

    /// Overwrite values by name from a loaded snapshot. Every parameter in
    /// the set must be present with a matching shape.
    pub fn load_values(&mut self, snapshot: &[(String, Tensor)]) -> super::Result<()> {
        let by_name: HashMap<&str, &Tensor> =
            snapshot.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for p in &mut self.items {
            let t = by_name.get(p.name.as_str()).ok_or_else(|| {
                super::MathError::Checkpoint(format!("missing parameter {:?}", p.name))
            })?;
            if t.shape() != p.value.shape() {
                return Err(super::MathError::Checkpoint(format!(
                    "parameter {:?} has shape {:?}, checkpoint has {:?}",
                    p.name,
                    p.value.shape(),
                    t.shape()
                )));
            }
            p.value = (*t).clone();
        }
        Ok(())
    }

    /// Byte-stable serialization of all values, for frozen-state comparisons
    /// and artifact hashing.
    pub fn value_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for p in &self.items {
            out.extend_from_slice(p.name.as_bytes());
            out.push(0);
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_and_lookup() {
        let mut ps = ParamSet::new();
        let a = ps.register("w", Tensor::zeros(2, 3));
        assert_eq!(ps.id("w"), Some(a));
        assert_eq!(ps.name(a), "w");
        assert_eq!(ps.grad(a).shape(), [2, 3]);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter")]
    fn duplicate_names_panic() {
        let mut ps = ParamSet::new();
        ps.register("w", Tensor::zeros(1, 1));
        ps.register("w", Tensor::zeros(1, 1));
    }

    #[test]
    fn grad_accumulation_and_zeroing() {
        let mut ps = ParamSet::new();
        let a = ps.register("w", Tensor::zeros(1, 2));
        ps.accumulate_grad(a, &Tensor::from_rows(&[vec![1.0, 2.0]]));
        ps.accumulate_grad(a, &Tensor::from_rows(&[vec![0.5, 0.5]]));
        assert_eq!(ps.grad(a).data(), &[1.5, 2.5]);
        ps.zero_grads();
        assert_eq!(ps.grad(a).data(), &[0.0, 0.0]);
    }
}
