//! Typed wiring: system types, fragment nodes, wire graphs, validation and
//! causal queries (layering, synchronous wire sets, foliation cuts).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fragment::OperatorFragment;

/// A wire type with its Hilbert dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemType {
    name: String,
    dim: usize,
}

impl SystemType {
    pub fn new(name: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimMismatch { expected: 1, got: 0 });
        }
        Ok(SystemType { name: name.into(), dim })
    }

    pub fn qubit() -> Self {
        SystemType { name: "qubit".into(), dim: 2 }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl fmt::Display for SystemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.name, self.dim)
    }
}

/// Name → type map with unique names.
#[derive(Clone, Debug, Default)]
pub struct TypeRegistry {
    types: BTreeMap<String, SystemType>,
}

impl TypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, name: &str, dim: usize) -> Result<SystemType> {
        if let Some(existing) = self.types.get(name) {
            if existing.dim != dim {
                return Err(Error::TypeMismatch {
                    label: name.into(),
                    left: existing.to_string(),
                    right: format!("{name}[{dim}]"),
                });
            }
            return Ok(existing.clone());
        }
        let t = SystemType::new(name, dim)?;
        self.types.insert(name.into(), t.clone());
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Option<&SystemType> {
        self.types.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SystemType> {
        self.types.values()
    }
}

#[derive(Clone, Debug)]
pub enum Payload {
    Symbolic(String),
    Operator(Arc<OperatorFragment>),
}

#[derive(Clone, Debug)]
pub struct FragmentNode {
    pub id: String,
    /// Port `k` (1-based) is `inputs[k - 1]`.
    pub inputs: Vec<SystemType>,
    pub outputs: Vec<SystemType>,
    pub payload: Payload,
}

impl FragmentNode {
    pub fn symbolic(id: impl Into<String>, inputs: Vec<SystemType>, outputs: Vec<SystemType>) -> Self {
        let id = id.into();
        FragmentNode { payload: Payload::Symbolic(id.clone()), id, inputs, outputs }
    }

    /// Port types are read off the operator.
    pub fn operator(id: impl Into<String>, op: impl Into<Arc<OperatorFragment>>) -> Self {
        let op = op.into();
        FragmentNode {
            id: id.into(),
            inputs: op.inputs().iter().map(|p| p.ty.clone()).collect(),
            outputs: op.outputs().iter().map(|p| p.ty.clone()).collect(),
            payload: Payload::Operator(op),
        }
    }

    pub fn operator_payload(&self) -> Option<&Arc<OperatorFragment>> {
        match &self.payload {
            Payload::Operator(op) => Some(op),
            Payload::Symbolic(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub node: String,
    /// 1-based.
    pub port: usize,
}

impl PortRef {
    pub fn new(node: impl Into<String>, port: usize) -> Self {
        PortRef { node: node.into(), port }
    }
}

/// Output port → input port.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wire {
    pub from: PortRef,
    pub to: PortRef,
}

impl fmt::Display for Wire {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.out{} -> {}.in{}", self.from.node, self.from.port, self.to.node, self.to.port)
    }
}

#[derive(Clone, Debug, Default)]
pub struct WireGraph {
    nodes: BTreeMap<String, FragmentNode>,
    wires: Vec<Wire>,
}

impl WireGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: FragmentNode) -> Result<()> {
        if self.nodes.contains_key(&node.id) {
            return Err(Error::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Records a wire without checking it; see [`validate`].
    pub fn connect(&mut self, from: &str, out_port: usize, to: &str, in_port: usize) -> Wire {
        let w = Wire { from: PortRef::new(from, out_port), to: PortRef::new(to, in_port) };
        self.wires.push(w.clone());
        w
    }

    pub fn nodes(&self) -> impl Iterator<Item = &FragmentNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Option<&FragmentNode> {
        self.nodes.get(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn wires(&self) -> &[Wire] {
        &self.wires
    }

    fn output_type(&self, p: &PortRef) -> Option<&SystemType> {
        self.nodes.get(&p.node).and_then(|n| n.outputs.get(p.port.wrapping_sub(1)))
    }

    fn input_type(&self, p: &PortRef) -> Option<&SystemType> {
        self.nodes.get(&p.node).and_then(|n| n.inputs.get(p.port.wrapping_sub(1)))
    }

    /// Node-level successor lists built from wires whose endpoints exist.
    fn successors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut succ: BTreeMap<&str, BTreeSet<&str>> = self.nodes.keys().map(|k| (k.as_str(), BTreeSet::new())).collect();
        for w in &self.wires {
            if self.nodes.contains_key(&w.from.node) && self.nodes.contains_key(&w.to.node) {
                succ.get_mut(w.from.node.as_str()).unwrap().insert(w.to.node.as_str());
            }
        }
        succ
    }

    /// Open input ports in (node, port) order.
    pub fn open_inputs(&self) -> Vec<(PortRef, SystemType)> {
        let used: BTreeSet<&PortRef> = self.wires.iter().map(|w| &w.to).collect();
        self.nodes
            .values()
            .flat_map(|n| n.inputs.iter().enumerate().map(move |(i, t)| (PortRef::new(n.id.clone(), i + 1), t.clone())))
            .filter(|(p, _)| !used.contains(p))
            .collect()
    }

    pub fn open_outputs(&self) -> Vec<(PortRef, SystemType)> {
        let used: BTreeSet<&PortRef> = self.wires.iter().map(|w| &w.from).collect();
        self.nodes
            .values()
            .flat_map(|n| n.outputs.iter().enumerate().map(move |(i, t)| (PortRef::new(n.id.clone(), i + 1), t.clone())))
            .filter(|(p, _)| !used.contains(p))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    UnknownNode { wire: String, node: String },
    NoSuchPort { wire: String, port: PortRef, output: bool },
    TypeMismatch { wire: String, from: SystemType, to: SystemType },
    PortReused { port: PortRef, output: bool },
    ClosedLoop { nodes: Vec<String> },
    PayloadMismatch { node: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownNode { wire, node } => write!(f, "wire {wire}: unknown node `{node}`"),
            Violation::NoSuchPort { wire, port, output } => {
                let dir = if *output { "out" } else { "in" };
                write!(f, "wire {wire}: node `{}` has no port {dir}{}", port.node, port.port)
            }
            Violation::TypeMismatch { wire, from, to } => write!(f, "wire {wire}: type mismatch {from} -> {to}"),
            Violation::PortReused { port, output } => {
                let dir = if *output { "out" } else { "in" };
                write!(f, "port {}.{dir}{} carries more than one wire", port.node, port.port)
            }
            Violation::ClosedLoop { nodes } => write!(f, "closed loop through {}", nodes.join(", ")),
            Violation::PayloadMismatch { node } => write!(f, "node `{node}`: operator does not match declared ports"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    /// Sorted, so the report does not depend on insertion order.
    pub violations: Vec<Violation>,
    pub open_inputs: Vec<(PortRef, SystemType)>,
    pub open_outputs: Vec<(PortRef, SystemType)>,
    /// Legal fragment with no open ports.
    pub is_circuit: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(graph: &WireGraph) -> ValidationReport {
    let mut violations = Vec::new();
    let mut out_use: BTreeMap<&PortRef, usize> = BTreeMap::new();
    let mut in_use: BTreeMap<&PortRef, usize> = BTreeMap::new();

    for w in &graph.wires {
        let ws = w.to_string();
        let mut endpoints_ok = true;
        for node in [&w.from.node, &w.to.node] {
            if !graph.nodes.contains_key(node) {
                violations.push(Violation::UnknownNode { wire: ws.clone(), node: node.clone() });
                endpoints_ok = false;
            }
        }
        if !endpoints_ok {
            continue;
        }
        let from_t = graph.output_type(&w.from);
        let to_t = graph.input_type(&w.to);
        if from_t.is_none() {
            violations.push(Violation::NoSuchPort { wire: ws.clone(), port: w.from.clone(), output: true });
        }
        if to_t.is_none() {
            violations.push(Violation::NoSuchPort { wire: ws.clone(), port: w.to.clone(), output: false });
        }
        if let (Some(a), Some(b)) = (from_t, to_t) {
            if a != b {
                violations.push(Violation::TypeMismatch { wire: ws.clone(), from: a.clone(), to: b.clone() });
            }
        }
        *out_use.entry(&w.from).or_default() += 1;
        *in_use.entry(&w.to).or_default() += 1;
    }
    for (p, n) in out_use {
        if n > 1 {
            violations.push(Violation::PortReused { port: p.clone(), output: true });
        }
    }
    for (p, n) in in_use {
        if n > 1 {
            violations.push(Violation::PortReused { port: p.clone(), output: false });
        }
    }
    for scc in cyclic_components(graph) {
        violations.push(Violation::ClosedLoop { nodes: scc });
    }
    for n in graph.nodes.values() {
        if let Payload::Operator(op) = &n.payload {
            let ins: Vec<&SystemType> = op.inputs().iter().map(|p| &p.ty).collect();
            let outs: Vec<&SystemType> = op.outputs().iter().map(|p| &p.ty).collect();
            if ins != n.inputs.iter().collect::<Vec<_>>() || outs != n.outputs.iter().collect::<Vec<_>>() {
                violations.push(Violation::PayloadMismatch { node: n.id.clone() });
            }
        }
    }
    violations.sort();
    violations.dedup();

    let open_inputs = graph.open_inputs();
    let open_outputs = graph.open_outputs();
    let is_circuit = violations.is_empty() && open_inputs.is_empty() && open_outputs.is_empty();
    ValidationReport { violations, open_inputs, open_outputs, is_circuit }
}

/// Strongly connected components that contain a cycle (Tarjan).
fn cyclic_components(graph: &WireGraph) -> Vec<Vec<String>> {
    struct State<'a> {
        succ: BTreeMap<&'a str, BTreeSet<&'a str>>,
        index: BTreeMap<&'a str, usize>,
        low: BTreeMap<&'a str, usize>,
        stack: Vec<&'a str>,
        on_stack: BTreeSet<&'a str>,
        next: usize,
        out: Vec<Vec<String>>,
    }

    fn visit<'a>(s: &mut State<'a>, v: &'a str) {
        s.index.insert(v, s.next);
        s.low.insert(v, s.next);
        s.next += 1;
        s.stack.push(v);
        s.on_stack.insert(v);
        let succs: Vec<&str> = s.succ[v].iter().copied().collect();
        for w in succs {
            if !s.index.contains_key(w) {
                visit(s, w);
                let lw = s.low[w];
                let lv = s.low.get_mut(v).unwrap();
                *lv = (*lv).min(lw);
            } else if s.on_stack.contains(w) {
                let iw = s.index[w];
                let lv = s.low.get_mut(v).unwrap();
                *lv = (*lv).min(iw);
            }
        }
        if s.low[v] == s.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().unwrap();
                s.on_stack.remove(w);
                comp.push(w.to_string());
                if w == v {
                    break;
                }
            }
            let self_loop = comp.len() == 1 && s.succ[v].contains(v);
            if comp.len() > 1 || self_loop {
                comp.sort();
                s.out.push(comp);
            }
        }
    }

    let mut s = State {
        succ: graph.successors(),
        index: BTreeMap::new(),
        low: BTreeMap::new(),
        stack: Vec::new(),
        on_stack: BTreeSet::new(),
        next: 0,
        out: Vec::new(),
    };
    let keys: Vec<&str> = graph.nodes.keys().map(|k| k.as_str()).collect();
    for v in keys {
        if !s.index.contains_key(v) {
            visit(&mut s, v);
        }
    }
    s.out.sort();
    s.out
}

/// Longest-path layering: every wire goes to a strictly later layer.
pub fn topological_layers(graph: &WireGraph) -> Result<Vec<BTreeSet<String>>> {
    let succ = graph.successors();
    let mut indeg: BTreeMap<&str, usize> = succ.keys().map(|k| (*k, 0)).collect();
    for targets in succ.values() {
        for t in targets {
            *indeg.get_mut(t).unwrap() += 1;
        }
    }
    let mut level: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ready: Vec<&str> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    for r in &ready {
        level.insert(r, 0);
    }
    let mut seen = 0;
    while let Some(v) = ready.pop() {
        seen += 1;
        let lv = level[v];
        for &t in &succ[v] {
            let e = level.entry(t).or_insert(0);
            *e = (*e).max(lv + 1);
            let d = indeg.get_mut(t).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(t);
            }
        }
    }
    if seen != succ.len() {
        return Err(Error::CyclicGraph);
    }
    let depth = level.values().copied().max().map_or(0, |m| m + 1);
    let mut layers = vec![BTreeSet::new(); depth];
    for (v, l) in level {
        layers[l].insert(v.to_string());
    }
    Ok(layers)
}

/// Nodes reachable from `start` by forward tracing (including `start`).
pub fn reachable_from(graph: &WireGraph, start: &str) -> BTreeSet<String> {
    let succ = graph.successors();
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        if !seen.insert(v.to_string()) {
            continue;
        }
        if let Some(ts) = succ.get(v) {
            stack.extend(ts.iter().copied());
        }
    }
    seen
}

/// True iff no wire of the set can be reached by tracing forward from another.
pub fn is_synchronous(graph: &WireGraph, wires: &[Wire]) -> Result<bool> {
    for w in wires {
        if !graph.wires.contains(w) {
            return Err(Error::UnknownWire(w.to_string()));
        }
    }
    for (i, a) in wires.iter().enumerate() {
        // tracing forward from wire a starts at its target node
        let reach = reachable_from(graph, &a.to.node);
        for (j, b) in wires.iter().enumerate() {
            if i != j && reach.contains(&b.from.node) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A synchronous wire set viewed as one composite system.
pub fn composite_type(graph: &WireGraph, wires: &[Wire]) -> Result<SystemType> {
    let mut names = Vec::new();
    let mut dim = 1;
    for w in wires {
        let t = graph.output_type(&w.from).ok_or_else(|| Error::UnknownWire(w.to_string()))?;
        names.push(t.name().to_string());
        dim *= t.dim();
    }
    SystemType::new(names.join("*"), dim)
}

/// Past and future sides of a cut along `wires`, if removing them splits
/// the graph so that every weak component lies strictly on one side.
pub fn foliation_cut(graph: &WireGraph, wires: &[Wire]) -> Result<Option<(BTreeSet<String>, BTreeSet<String>)>> {
    for w in wires {
        if !graph.wires.contains(w) {
            return Err(Error::UnknownWire(w.to_string()));
        }
    }
    let cut: BTreeSet<&Wire> = wires.iter().collect();
    let ids: Vec<&str> = graph.nodes.keys().map(|k| k.as_str()).collect();
    let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let n = p[y];
            p[y] = r;
            y = n;
        }
        r
    }
    for w in &graph.wires {
        if cut.contains(w) {
            continue;
        }
        if let (Some(&a), Some(&b)) = (pos.get(w.from.node.as_str()), pos.get(w.to.node.as_str())) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    let mut past_roots = BTreeSet::new();
    let mut future_roots = BTreeSet::new();
    for w in wires {
        past_roots.insert(find(&mut parent, pos[w.from.node.as_str()]));
        future_roots.insert(find(&mut parent, pos[w.to.node.as_str()]));
    }
    if !past_roots.is_disjoint(&future_roots) {
        return Ok(None);
    }
    let mut past = BTreeSet::new();
    let mut future = BTreeSet::new();
    for (i, id) in ids.iter().enumerate() {
        let r = find(&mut parent, i);
        if past_roots.contains(&r) {
            past.insert(id.to_string());
        } else if future_roots.contains(&r) {
            future.insert(id.to_string());
        } else {
            return Ok(None);
        }
    }
    Ok(Some((past, future)))
}

/// Sorted open input and output types: two fragments with equal structures
/// can be plugged into the same surroundings.
pub fn io_structure(graph: &WireGraph) -> (Vec<SystemType>, Vec<SystemType>) {
    let mut ins: Vec<SystemType> = graph.open_inputs().into_iter().map(|(_, t)| t).collect();
    let mut outs: Vec<SystemType> = graph.open_outputs().into_iter().map(|(_, t)| t).collect();
    ins.sort();
    outs.sort();
    (ins, outs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> SystemType {
        SystemType::new("a", 2).unwrap()
    }

    fn b() -> SystemType {
        SystemType::new("b", 3).unwrap()
    }

    fn node(id: &str, ins: Vec<SystemType>, outs: Vec<SystemType>) -> FragmentNode {
        FragmentNode::symbolic(id, ins, outs)
    }

    fn chain() -> WireGraph {
        let mut g = WireGraph::new();
        g.add_node(node("A", vec![], vec![a()])).unwrap();
        g.add_node(node("B", vec![a()], vec![a()])).unwrap();
        g.add_node(node("C", vec![a()], vec![])).unwrap();
        g.connect("A", 1, "B", 1);
        g.connect("B", 1, "C", 1);
        g
    }

    #[test]
    fn minimal_chain_is_a_circuit() {
        let mut g = WireGraph::new();
        g.add_node(node("A", vec![], vec![a()])).unwrap();
        g.add_node(node("B", vec![a()], vec![])).unwrap();
        g.connect("A", 1, "B", 1);
        let r = validate(&g);
        assert!(r.is_valid());
        assert!(r.is_circuit);
    }

    #[test]
    fn open_output_is_fragment_not_circuit() {
        let mut g = WireGraph::new();
        g.add_node(node("A", vec![], vec![a()])).unwrap();
        g.add_node(node("B", vec![a()], vec![a()])).unwrap();
        g.connect("A", 1, "B", 1);
        let r = validate(&g);
        assert!(r.is_valid());
        assert!(!r.is_circuit);
        assert_eq!(r.open_outputs, vec![(PortRef::new("B", 1), a())]);
    }

    #[test]
    fn type_mismatch_is_reported() {
        let mut g = WireGraph::new();
        g.add_node(node("A", vec![], vec![a()])).unwrap();
        g.add_node(node("B", vec![b()], vec![])).unwrap();
        g.connect("A", 1, "B", 1);
        let r = validate(&g);
        assert!(matches!(r.violations.as_slice(), [Violation::TypeMismatch { .. }]));
    }

    #[test]
    fn three_cycle_is_a_closed_loop() {
        let mut g = WireGraph::new();
        for id in ["A", "B", "C"] {
            g.add_node(node(id, vec![a()], vec![a()])).unwrap();
        }
        g.connect("A", 1, "B", 1);
        g.connect("B", 1, "C", 1);
        g.connect("C", 1, "A", 1);
        let r = validate(&g);
        assert_eq!(r.violations, vec![Violation::ClosedLoop { nodes: vec!["A".into(), "B".into(), "C".into()] }]);
        assert!(matches!(topological_layers(&g), Err(Error::CyclicGraph)));
    }

    #[test]
    fn one_wire_per_port() {
        let mut g = WireGraph::new();
        g.add_node(node("A", vec![], vec![a()])).unwrap();
        g.add_node(node("B", vec![a()], vec![])).unwrap();
        g.add_node(node("C", vec![a()], vec![])).unwrap();
        g.connect("A", 1, "B", 1);
        g.connect("A", 1, "C", 1);
        let r = validate(&g);
        assert_eq!(r.violations, vec![Violation::PortReused { port: PortRef::new("A", 1), output: true }]);
    }

    #[test]
    fn missing_ports_and_nodes() {
        let mut g = WireGraph::new();
        g.add_node(node("A", vec![], vec![a()])).unwrap();
        g.connect("A", 2, "Z", 1);
        let r = validate(&g);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0], Violation::UnknownNode { .. }));
        assert!(g.add_node(node("A", vec![], vec![])).is_err());
    }

    #[test]
    fn chain_layers() {
        let layers = topological_layers(&chain()).unwrap();
        let flat: Vec<Vec<&str>> = layers.iter().map(|l| l.iter().map(|s| s.as_str()).collect()).collect();
        assert_eq!(flat, vec![vec!["A"], vec!["B"], vec!["C"]]);
    }

    #[test]
    fn disjoint_pair_is_one_layer() {
        let mut g = WireGraph::new();
        g.add_node(node("A", vec![], vec![])).unwrap();
        g.add_node(node("B", vec![], vec![])).unwrap();
        let layers = topological_layers(&g).unwrap();
        assert_eq!(layers.len(), 1);
        assert_eq!(layers[0].len(), 2);
    }

    #[test]
    fn synchronous_sets() {
        let g = chain();
        let w = g.wires().to_vec();
        assert!(is_synchronous(&g, &w[..1]).unwrap());
        assert!(!is_synchronous(&g, &w).unwrap());
        let bogus = Wire { from: PortRef::new("X", 1), to: PortRef::new("Y", 1) };
        assert!(matches!(is_synchronous(&g, &[bogus]), Err(Error::UnknownWire(_))));
    }

    #[test]
    fn composite_of_synchronous_wires() {
        let mut g = WireGraph::new();
        g.add_node(node("A", vec![], vec![a(), b()])).unwrap();
        g.add_node(node("B", vec![a(), b()], vec![])).unwrap();
        g.connect("A", 1, "B", 1);
        g.connect("A", 2, "B", 2);
        let ws = g.wires().to_vec();
        assert!(is_synchronous(&g, &ws).unwrap());
        let t = composite_type(&g, &ws).unwrap();
        assert_eq!(t.dim(), 6);
        assert_eq!(t.name(), "a*b");
    }

    #[test]
    fn chain_cut() {
        let g = chain();
        let w = g.wires()[1].clone();
        let (past, future) = foliation_cut(&g, &[w]).unwrap().unwrap();
        assert_eq!(past.into_iter().collect::<Vec<_>>(), vec!["A", "B"]);
        assert_eq!(future.into_iter().collect::<Vec<_>>(), vec!["C"]);
    }

    #[test]
    fn io_structure_is_plug_compatibility() {
        let mut g1 = WireGraph::new();
        g1.add_node(node("X", vec![a()], vec![b()])).unwrap();
        let mut g2 = WireGraph::new();
        g2.add_node(node("P", vec![a()], vec![a()])).unwrap();
        g2.add_node(node("Q", vec![a()], vec![b()])).unwrap();
        g2.connect("P", 1, "Q", 1);
        assert_eq!(io_structure(&g1), io_structure(&g2));
    }
}
