use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{JointKind, MorphologyError, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeType {
    Base,
    Joint,
    Foot,
}

impl NodeType {
    pub const ALL: [NodeType; 3] = [NodeType::Base, NodeType::Joint, NodeType::Foot];

    pub fn letter(self) -> char {
        match self {
            NodeType::Base => 'B',
            NodeType::Joint => 'J',
            NodeType::Foot => 'F',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'B' => Some(NodeType::Base),
            'J' => Some(NodeType::Joint),
            'F' => Some(NodeType::Foot),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Edge type: ordered pair (source node type, destination node type).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relation {
    pub src: NodeType,
    pub dst: NodeType,
}

impl Relation {
    pub fn new(src: NodeType, dst: NodeType) -> Self {
        Self { src, dst }
    }

    /// Two-letter key such as `BJ`.
    pub fn key(&self) -> String {
        format!("{}{}", self.src.letter(), self.dst.letter())
    }

    pub fn parse(key: &str) -> Option<Self> {
        let mut it = key.chars();
        let src = NodeType::from_letter(it.next()?)?;
        let dst = NodeType::from_letter(it.next()?)?;
        it.next().is_none().then_some(Self { src, dst })
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: usize,
    pub node_type: NodeType,
    /// Root link name for the base, joint name otherwise.
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: Relation,
}

/// Heterogeneous graph compiled from a kinematic tree.
///
/// Node ids follow a depth-first walk from the base in which sibling branches
/// are visited in name order, so joints of one leg are contiguous and legs
/// appear in canonical (name-sorted) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphologyGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub foot_order: Vec<usize>,
    pub joint_order: Vec<usize>,
    parent: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<DumpNode>,
    pub edges: Vec<DumpEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpNode {
    pub id: usize,
    #[serde(rename = "type")]
    pub node_type: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: String,
}

impl MorphologyGraph {
    fn from_tree(nodes: Vec<Node>, parent: Vec<Option<usize>>) -> Self {
        let mut edges = Vec::with_capacity(2 * nodes.len().saturating_sub(1));
        for (child, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                let (tp, tc) = (nodes[p].node_type, nodes[child].node_type);
                edges.push(Edge { src: p, dst: child, relation: Relation::new(tp, tc) });
                edges.push(Edge { src: child, dst: p, relation: Relation::new(tc, tp) });
            }
        }
        let of_type = |t| nodes.iter().filter(|n| n.node_type == t).map(|n| n.id).collect();
        let foot_order = of_type(NodeType::Foot);
        let joint_order = of_type(NodeType::Joint);
        Self { nodes, edges, foot_order, joint_order, parent }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn base(&self) -> usize {
        self.nodes
            .iter()
            .find(|n| n.node_type == NodeType::Base)
            .map(|n| n.id)
            .expect("graph has a base node")
    }

    pub fn node_type(&self, id: usize) -> NodeType {
        self.nodes[id].node_type
    }

    /// Tree parent (toward the base).
    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parent[id]
    }

    pub fn children(&self, id: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&c| self.parent[c] == Some(id)).collect()
    }

    /// Node ids of the given type, in id order.
    pub fn nodes_of_type(&self, t: NodeType) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.node_type == t).map(|n| n.id).collect()
    }

    /// Position of a node among the nodes of its own type.
    pub fn type_index(&self, id: usize) -> usize {
        let t = self.nodes[id].node_type;
        self.nodes[..id].iter().filter(|n| n.node_type == t).count()
    }

    /// Distinct relations present, sorted.
    pub fn relations(&self) -> Vec<Relation> {
        self.edges
            .iter()
            .map(|e| e.relation)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.dst == id).map(|e| e.src)
    }

    /// Hop distances from `from` to every node.
    pub fn distances(&self, from: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            for e in self.edges.iter().filter(|e| e.src == u) {
                if dist[e.dst] == usize::MAX {
                    dist[e.dst] = dist[u] + 1;
                    queue.push_back(e.dst);
                }
            }
        }
        dist
    }

    /// Node ids of the leg ending at foot `foot_pos` (position in `foot_order`),
    /// ordered from the base outward and excluding the base and the foot.
    pub fn leg_joints(&self, foot_pos: usize) -> Vec<usize> {
        let mut chain = Vec::new();
        let mut cur = self.parent[self.foot_order[foot_pos]];
        while let Some(c) = cur {
            if self.nodes[c].node_type != NodeType::Joint {
                break;
            }
            chain.push(c);
            cur = self.parent[c];
        }
        chain.reverse();
        chain
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            nodes: self
                .nodes
                .iter()
                .map(|n| DumpNode { id: n.id, node_type: n.node_type.letter().to_string(), name: n.name.clone() })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| DumpEdge { src: e.src, dst: e.dst, relation: e.relation.key() })
                .collect(),
        }
    }

    /// Rebuilds a graph from its dump. Parent links are recovered from the
    /// first edge of each tree link, which points from parent to child.
    pub fn from_dump(dump: &GraphDump) -> Result<Self, MorphologyError> {
        let bad = |m: String| MorphologyError::BadGraph(m);
        let mut nodes = Vec::with_capacity(dump.nodes.len());
        for (i, n) in dump.nodes.iter().enumerate() {
            if n.id != i {
                return Err(bad(format!("node ids must be 0..n in order, got {} at {i}", n.id)));
            }
            let t = n
                .node_type
                .chars()
                .next()
                .and_then(NodeType::from_letter)
                .ok_or_else(|| bad(format!("unknown node type '{}'", n.node_type)))?;
            nodes.push(Node { id: i, node_type: t, name: n.name.clone() });
        }
        let mut parent = vec![None; nodes.len()];
        for pair in dump.edges.chunks(2) {
            let [down, up] = pair else { return Err(bad("odd number of edges".into())) };
            if down.src != up.dst || down.dst != up.src || down.dst >= nodes.len() || down.src >= nodes.len() {
                return Err(bad("edges must come in parent->child, child->parent pairs".into()));
            }
            parent[down.dst] = Some(down.src);
        }
        let graph = Self::from_tree(nodes, parent);
        if graph.dump() != *dump {
            return Err(bad("dump is not in canonical form".into()));
        }
        let bases = graph.nodes_of_type(NodeType::Base).len();
        if bases != 1 {
            return Err(MorphologyError::AmbiguousBase);
        }
        Ok(graph)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.dump()).expect("graph dump serializes")
    }

    /// SHA-256 of the compact canonical dump, hex encoded.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(&self.dump()).expect("graph dump serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Compiles the morphology graph of a robot.
///
/// The root link becomes the base node, every revolute joint a joint node,
/// and every fixed joint with a leaf child below an actuated joint a foot
/// node. Other fixed joints are collapsed into their parent link, so their
/// descendants attach to the nearest actuated ancestor (or the base).
pub fn build_graph(model: &RobotModel) -> Result<MorphologyGraph, MorphologyError> {
    let roots = model.roots();
    if roots.len() != 1 {
        return Err(MorphologyError::AmbiguousBase);
    }
    let root = roots[0].name.clone();

    // Graph parent of each joint, as a joint index or None for the base.
    fn nearest_actuated<'a>(model: &'a RobotModel, root: &str, mut link: &'a str) -> Option<usize> {
        loop {
            if link == root {
                return None;
            }
            let (idx, pj) = model
                .joints
                .iter()
                .enumerate()
                .find(|(_, j)| j.child_link == link)
                .expect("validated tree");
            if pj.kind == JointKind::Revolute {
                return Some(idx);
            }
            link = &pj.parent_link;
        }
    }

    let mut is_node = Vec::with_capacity(model.joints.len());
    let mut graph_parent = Vec::with_capacity(model.joints.len());
    for j in &model.joints {
        let up = nearest_actuated(model, &root, &j.parent_link);
        graph_parent.push(up);
        is_node.push(match j.kind {
            JointKind::Revolute => true,
            JointKind::Fixed => model.child_joints(&j.child_link).next().is_none() && up.is_some(),
        });
    }
    if !model
        .joints
        .iter()
        .zip(&is_node)
        .any(|(j, &n)| j.kind == JointKind::Fixed && n)
    {
        return Err(MorphologyError::NoFootFound);
    }

    let children_of = |p: Option<usize>| -> Vec<usize> {
        let mut c: Vec<usize> = (0..model.joints.len())
            .filter(|&i| graph_parent[i] == p && is_node[i])
            .collect();
        c.sort_by(|&a, &b| model.joints[a].name.cmp(&model.joints[b].name));
        c
    };

    let mut nodes = vec![Node { id: 0, node_type: NodeType::Base, name: root.clone() }];
    let mut parent = vec![None];
    // (joint index, graph parent node id)
    let mut stack: Vec<(usize, usize)> = children_of(None).into_iter().rev().map(|j| (j, 0)).collect();
    while let Some((j, p)) = stack.pop() {
        let id = nodes.len();
        let joint = &model.joints[j];
        let node_type = match joint.kind {
            JointKind::Revolute => NodeType::Joint,
            JointKind::Fixed => NodeType::Foot,
        };
        nodes.push(Node { id, node_type, name: joint.name.clone() });
        parent.push(Some(p));
        stack.extend(children_of(Some(j)).into_iter().rev().map(|c| (c, id)));
    }
    Ok(MorphologyGraph::from_tree(nodes, parent))
}

/// All node-type-preserving automorphisms of the graph that fix the base.
///
/// Each permutation maps node `i` to `perm[i]`. The identity is always first.
pub fn leg_automorphisms(graph: &MorphologyGraph) -> Vec<Vec<usize>> {
    let n = graph.num_nodes();
    let base = graph.base();
    // Parents precede children in id order, which the search relies on.
    debug_assert!((0..n).all(|i| graph.parent(i).is_none_or(|p| p < i)));
    let degree: Vec<usize> = (0..n).map(|i| graph.neighbors(i).count()).collect();
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    let mut out = Vec::new();

    fn search(
        k: usize,
        graph: &MorphologyGraph,
        degree: &[usize],
        perm: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let n = perm.len();
        if k == n {
            out.push(perm.clone());
            return;
        }
        if perm[k] != usize::MAX {
            search(k + 1, graph, degree, perm, used, out);
            return;
        }
        let target_parent = graph.parent(k).map(|p| perm[p]);
        for c in 0..n {
            if used[c]
                || graph.node_type(c) != graph.node_type(k)
                || degree[c] != degree[k]
                || graph.parent(c) != target_parent
            {
                continue;
            }
            perm[k] = c;
            used[c] = true;
            search(k + 1, graph, degree, perm, used, out);
            used[c] = false;
            perm[k] = usize::MAX;
        }
    }

    perm[base] = base;
    used[base] = true;
    search(0, graph, &degree, &mut perm, &mut used, &mut out);
    out.sort_by_key(|p| p.iter().enumerate().any(|(i, &v)| i != v));
    out
}
