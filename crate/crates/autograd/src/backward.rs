use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::tensor::{Tensor, TensorId};

/// Gradients keyed by tensor id.
#[derive(Debug, Default)]
pub struct GradStore {
    grads: HashMap<TensorId, Tensor>,
}

impl GradStore {
    pub fn get(&self, t: &Tensor) -> Option<&Tensor> {
        self.grads.get(&t.id())
    }

    pub fn remove(&mut self, t: &Tensor) -> Option<Tensor> {
        self.grads.remove(&t.id())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

enum Targets<'a> {
    AllVariables,
    Only(&'a HashSet<TensorId>),
}

impl Targets<'_> {
    fn contains(&self, t: &Tensor) -> bool {
        match self {
            Targets::AllVariables => t.is_variable(),
            Targets::Only(ids) => ids.contains(&t.id()),
        }
    }
}

/// Nodes lying on a path from a target to `root`, ordered so that every node
/// precedes its parents. Targets are not expanded further.
fn sorted_nodes(root: &Tensor, targets: &Targets<'_>) -> Vec<Tensor> {
    let mut reaches: HashMap<TensorId, bool> = HashMap::new();
    let mut post_order = Vec::new();
    let mut stack: Vec<(Tensor, usize)> = vec![(root.clone(), 0)];
    while let Some((node, next)) = stack.pop() {
        if next == 0 && reaches.contains_key(&node.id()) {
            continue;
        }
        let expandable = !targets.contains(&node);
        let parents = match (expandable, node.op()) {
            (true, Some(op)) => op.parents(),
            _ => Vec::new(),
        };
        if next < parents.len() {
            let parent = parents[next].clone();
            stack.push((node, next + 1));
            if !reaches.contains_key(&parent.id()) {
                stack.push((parent, 0));
            }
            continue;
        }
        let tracked = targets.contains(&node) || parents.iter().any(|p| reaches.get(&p.id()) == Some(&true));
        reaches.insert(node.id(), tracked);
        if tracked {
            post_order.push(node);
        }
    }
    post_order.reverse();
    post_order
}

fn run(root: &Tensor, targets: Targets<'_>, create_graph: bool) -> Result<GradStore> {
    if root.numel() != 1 {
        return Err(Error::NonScalarLoss(root.shape().to_vec()));
    }
    if !root.requires_grad() {
        return Err(Error::NoGraph);
    }
    let order = sorted_nodes(root, &targets);
    if order.is_empty() {
        return Err(Error::NoGraph);
    }
    let on_path: HashSet<TensorId> = order.iter().map(Tensor::id).collect();
    let mut pending: HashMap<TensorId, Tensor> = HashMap::new();
    pending.insert(root.id(), Tensor::ones(root.shape())?);
    let mut store = GradStore::default();

    for node in &order {
        let Some(grad) = pending.remove(&node.id()) else {
            continue;
        };
        if targets.contains(node) {
            store.grads.insert(node.id(), grad);
            continue;
        }
        let Some(op) = node.op() else {
            continue;
        };
        let parent_grads = op.backward(node, &grad, create_graph)?;
        for (parent, pg) in op.parents().into_iter().zip(parent_grads) {
            if !on_path.contains(&parent.id()) {
                continue;
            }
            let acc = match pending.remove(&parent.id()) {
                Some(prev) => prev.add(&pg)?,
                None => pg,
            };
            pending.insert(parent.id(), acc);
        }
    }
    Ok(store)
}

impl Tensor {
    /// Gradients of this scalar with respect to every reachable variable.
    ///
    /// With `create_graph` the returned gradients are graph-linked and can be
    /// differentiated again; otherwise they are constants.
    pub fn backward(&self, create_graph: bool) -> Result<GradStore> {
        run(self, Targets::AllVariables, create_graph)
    }
}

/// Gradients of `loss` with respect to `wrt`, which may be intermediate
/// tensors. Inputs that do not influence `loss` get zeros.
pub fn grad(loss: &Tensor, wrt: &[&Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    let ids: HashSet<TensorId> = wrt.iter().map(|t| t.id()).collect();
    let store = run(loss, Targets::Only(&ids), create_graph)?;
    Ok(wrt
        .iter()
        .map(|t| store.grads.get(&t.id()).cloned().unwrap_or_else(|| t.zeros_like()))
        .collect())
}
