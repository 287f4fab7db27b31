use super::{Operation, RepairingSequence};
use crate::error::{Error, Result};
use crate::relational::{conflict_graph, is_nontrivially_connected, Database, FunctionalDependency};

/// A complete sequence whose result is `target`.
///
/// Facts are layered by conflict distance from `target` and removed
/// outermost layer first. For the empty target the layering starts at the
/// first fact, which goes last together with a neighbour in a pair removal.
/// Requires a non-trivially connected conflict graph and an independent
/// `target`.
pub fn realize_repair(
    db: &Database,
    sigma: &[FunctionalDependency],
    target: &Database,
) -> Result<RepairingSequence> {
    let g = conflict_graph(db, sigma)?;
    if !is_nontrivially_connected(&g) {
        return Err(Error::Precondition(
            "conflict graph is not non-trivially connected".into(),
        ));
    }
    let target_idx: Vec<usize> = target
        .facts()
        .map(|f| {
            g.index_of(f)
                .ok_or_else(|| Error::Precondition(format!("target fact {f} is not in the database")))
        })
        .collect::<Result<_>>()?;
    if !g.is_independent(&target_idx) {
        return Err(Error::Precondition("target is not an independent set".into()));
    }
    let anchor = if target_idx.is_empty() { vec![0] } else { target_idx };

    let mut layer_of = vec![usize::MAX; g.node_count()];
    for &i in &anchor {
        layer_of[i] = 0;
    }
    let mut layers = vec![anchor];
    loop {
        let depth = layers.len();
        let mut next: Vec<usize> = Vec::new();
        for &i in &layers[depth - 1] {
            for &j in g.neighbors(i) {
                if layer_of[j] == usize::MAX {
                    layer_of[j] = depth;
                    next.push(j);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        layers.push(next);
    }

    let fact = |i: usize| g.nodes[i].clone();
    let mut ops = Vec::new();
    for layer in layers[1..].iter().rev() {
        ops.extend(layer.iter().map(|&i| Operation::single(fact(i))));
    }
    if target.is_empty() {
        let star = layers[0][0];
        let last = ops.pop().expect("connected graph with an edge has a second layer");
        ops.push(Operation::pair(last.removed[0].clone(), fact(star)));
    }
    Ok(RepairingSequence::new(ops))
}
