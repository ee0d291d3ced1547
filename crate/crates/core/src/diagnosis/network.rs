use thiserror::Error;

use crate::scalar::Probability;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkNode {
    pub name: String,
    pub states: Vec<String>,
}

impl NetworkNode {
    pub fn new(name: impl Into<String>, states: &[&str]) -> Self {
        NetworkNode { name: name.into(), states: states.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("{nodes} nodes but {parents} parent lists and {cpts} CPTs")]
    Shape { nodes: usize, parents: usize, cpts: usize },
    #[error("node `{0}` has no states")]
    NoStates(String),
    #[error("node `{node}` lists unknown parent index {parent}")]
    UnknownParent { node: String, parent: usize },
    #[error("the parent graph has a cycle through `{0}`")]
    Cycle(String),
    #[error("CPT of `{node}` has {got} entries, expected {expected}")]
    CptSize { node: String, expected: usize, got: usize },
    #[error("CPT of `{node}` row {row} has a negative or non-finite entry")]
    BadEntry { node: String, row: usize },
    #[error("CPT of `{node}` row {row} sums to {sum}")]
    RowSum { node: String, row: usize, sum: f64 },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` has no state `{state}`")]
    UnknownState { node: String, state: String },
    #[error("observations have probability zero")]
    ZeroEvidence,
}

/// A discrete Bayesian network. CPTs are stored flat: one row of
/// `states.len()` entries per parent configuration, parent configurations
/// in mixed radix with the last parent varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNetwork<T> {
    nodes: Vec<NetworkNode>,
    parents: Vec<Vec<usize>>,
    cpts: Vec<Vec<T>>,
    order: Vec<usize>,
}

/// Exact posterior marginals plus the probability of the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<T> {
    pub marginals: Vec<Vec<T>>,
    pub evidence: T,
}

impl<T: Probability> DiscreteNetwork<T> {
    pub fn new(nodes: Vec<NetworkNode>, parents: Vec<Vec<usize>>, cpts: Vec<Vec<T>>) -> Result<Self, NetworkError> {
        let n = nodes.len();
        if parents.len() != n || cpts.len() != n {
            return Err(NetworkError::Shape { nodes: n, parents: parents.len(), cpts: cpts.len() });
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.states.is_empty() {
                return Err(NetworkError::NoStates(node.name.clone()));
            }
            if let Some(&p) = parents[i].iter().find(|&&p| p >= n) {
                return Err(NetworkError::UnknownParent { node: node.name.clone(), parent: p });
            }
        }
        let order = topological_order(&nodes, &parents)?;
        let tol = T::tolerance(1e-12);
        for (i, node) in nodes.iter().enumerate() {
            let k = node.states.len();
            let rows: usize = parents[i].iter().map(|&p| nodes[p].states.len()).product();
            if cpts[i].len() != rows * k {
                return Err(NetworkError::CptSize { node: node.name.clone(), expected: rows * k, got: cpts[i].len() });
            }
            for (row, chunk) in cpts[i].chunks(k).enumerate() {
                if chunk.iter().any(|p| !p.is_finite() || *p < T::zero()) {
                    return Err(NetworkError::BadEntry { node: node.name.clone(), row });
                }
                let sum: T = chunk.iter().copied().sum();
                if (sum - T::one()).abs() > tol {
                    return Err(NetworkError::RowSum {
                        node: node.name.clone(),
                        row,
                        sum: sum.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Ok(DiscreteNetwork { nodes, parents, cpts, order })
    }

    pub fn nodes(&self) -> &[NetworkNode] {
        &self.nodes
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn cpt(&self, node: usize) -> &[T] {
        &self.cpts[node]
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// `p(node = state | parents as in assignment)`.
    pub fn conditional(&self, node: usize, state: usize, assignment: &[usize]) -> T {
        let row = self.parents[node].iter().fold(0, |acc, &p| acc * self.nodes[p].states.len() + assignment[p]);
        self.cpts[node][row * self.nodes[node].states.len() + state]
    }

    /// Resolves `(node name, state name)` pairs to indices.
    pub fn observe(&self, obs: &[(&str, &str)]) -> Result<Vec<(usize, usize)>, NetworkError> {
        obs.iter()
            .map(|(node, state)| {
                let i = self.node_index(node).ok_or_else(|| NetworkError::UnknownNode(node.to_string()))?;
                let s = self.nodes[i]
                    .states
                    .iter()
                    .position(|x| x == state)
                    .ok_or_else(|| NetworkError::UnknownState { node: node.to_string(), state: state.to_string() })?;
                Ok((i, s))
            })
            .collect()
    }
}

fn topological_order(nodes: &[NetworkNode], parents: &[Vec<usize>]) -> Result<Vec<usize>, NetworkError> {
    let n = nodes.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut order = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).rev().collect();
    while let Some(i) = ready.pop() {
        order.push(i);
        for c in (0..n).rev() {
            let edges = parents[c].iter().filter(|&&p| p == i).count();
            if edges > 0 {
                indegree[c] -= edges;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
    }
    match (0..n).find(|&i| indegree[i] > 0) {
        Some(i) => Err(NetworkError::Cycle(nodes[i].name.clone())),
        None => Ok(order),
    }
}

/// Exact inference by depth-first enumeration of every assignment that is
/// consistent with the observations, in topological order so each factor
/// is available as soon as its node is assigned. Zero-probability
/// branches are cut early.
pub fn infer_enumerate<T: Probability>(
    net: &DiscreteNetwork<T>,
    observations: &[(usize, usize)],
) -> Result<Posterior<T>, NetworkError> {
    let n = net.nodes.len();
    let mut fixed = vec![None; n];
    for &(node, state) in observations {
        let info = net.nodes.get(node).ok_or_else(|| NetworkError::UnknownNode(format!("#{node}")))?;
        if state >= info.states.len() {
            return Err(NetworkError::UnknownState { node: info.name.clone(), state: format!("#{state}") });
        }
        fixed[node] = Some(state);
    }
    let mut acc: Vec<Vec<T>> = net.nodes.iter().map(|x| vec![T::zero(); x.states.len()]).collect();
    let mut assignment = vec![0; n];
    let mut total = T::zero();
    walk(net, &fixed, 0, T::one(), &mut assignment, &mut acc, &mut total);
    if total <= T::zero() {
        return Err(NetworkError::ZeroEvidence);
    }
    for row in &mut acc {
        for p in row.iter_mut() {
            *p = *p / total;
        }
    }
    Ok(Posterior { marginals: acc, evidence: total })
}

fn walk<T: Probability>(
    net: &DiscreteNetwork<T>,
    fixed: &[Option<usize>],
    depth: usize,
    weight: T,
    assignment: &mut [usize],
    acc: &mut [Vec<T>],
    total: &mut T,
) {
    if depth == net.order.len() {
        *total = *total + weight;
        for (node, &s) in assignment.iter().enumerate() {
            acc[node][s] = acc[node][s] + weight;
        }
        return;
    }
    let node = net.order[depth];
    let states = match fixed[node] {
        Some(s) => s..s + 1,
        None => 0..net.nodes[node].states.len(),
    };
    for s in states {
        assignment[node] = s;
        let w = weight * net.conditional(node, s, assignment);
        if w > T::zero() {
            walk(net, fixed, depth + 1, w, assignment, acc, total);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> DiscreteNetwork<f64> {
        DiscreteNetwork::new(
            vec![NetworkNode::new("H", &["a", "b"]), NetworkNode::new("E", &["e", "not_e"])],
            vec![vec![], vec![0]],
            vec![vec![0.3, 0.7], vec![0.5, 0.5, 0.1, 0.9]],
        )
        .unwrap()
    }

    #[test]
    fn hand_bayes() {
        let net = two_node();
        let obs = net.observe(&[("E", "e")]).unwrap();
        let post = infer_enumerate(&net, &obs).unwrap();
        assert!((post.marginals[0][0] - 0.15 / 0.22).abs() < 1e-12);
        assert!((post.evidence - 0.22).abs() < 1e-12);
    }

    #[test]
    fn no_observations_give_priors() {
        let post = infer_enumerate(&two_node(), &[]).unwrap();
        assert!((post.marginals[0][0] - 0.3).abs() < 1e-15);
        assert!((post.marginals[1][0] - 0.22).abs() < 1e-15);
    }

    #[test]
    fn zero_evidence() {
        let net = DiscreteNetwork::new(
            vec![NetworkNode::new("H", &["a", "b"]), NetworkNode::new("E", &["e", "f"])],
            vec![vec![], vec![0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0, 0.5, 0.5]],
        )
        .unwrap();
        assert_eq!(infer_enumerate(&net, &[(1, 0)]), Err(NetworkError::ZeroEvidence));
    }

    #[test]
    fn rejects_bad_tables() {
        let nodes = || vec![NetworkNode::new("A", &["x", "y"]), NetworkNode::new("B", &["x", "y"])];
        let e = DiscreteNetwork::<f64>::new(nodes(), vec![vec![1], vec![0]], vec![vec![0.5; 4], vec![0.5; 4]]);
        assert!(matches!(e, Err(NetworkError::Cycle(_))));
        let e = DiscreteNetwork::<f64>::new(nodes(), vec![vec![], vec![0]], vec![vec![0.5, 0.5], vec![0.5; 2]]);
        assert!(matches!(e, Err(NetworkError::CptSize { .. })));
        let e = DiscreteNetwork::<f64>::new(nodes(), vec![vec![], vec![]], vec![vec![0.5, 0.49], vec![0.5; 2]]);
        assert!(matches!(e, Err(NetworkError::RowSum { .. })));
        let e = DiscreteNetwork::<f64>::new(nodes(), vec![vec![], vec![]], vec![vec![1.5, -0.5], vec![0.5; 2]]);
        assert!(matches!(e, Err(NetworkError::BadEntry { .. })));
    }

    #[test]
    fn works_in_f32() {
        let net = DiscreteNetwork::<f32>::new(
            vec![NetworkNode::new("H", &["a", "b"]), NetworkNode::new("E", &["e", "not_e"])],
            vec![vec![], vec![0]],
            vec![vec![0.3, 0.7], vec![0.5, 0.5, 0.1, 0.9]],
        )
        .unwrap();
        let post = infer_enumerate(&net, &[(1, 0)]).unwrap();
        assert!((post.marginals[0][0] - 0.15 / 0.22).abs() < 1e-6);
    }
}
