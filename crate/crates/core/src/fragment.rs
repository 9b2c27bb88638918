//! Operator fragments and the circuit trace: wiring contracts matched
//! factors (product, then partial trace), plus Choi forms, link products,
//! channel application and Kraus factorisation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::circuit::{validate, SystemType, WireGraph};
use crate::error::{Error, Result};
use crate::linalg::{
    eigh_matrix, kron, max_abs, partial_trace, partial_transpose, permute_factors, CMatrix, DenseHermitian, Label,
    LabeledSpace, C64,
};

/// Imaginary residue above which a circuit value is rejected.
pub const IMAG_TOL: f64 = 1e-10;
/// Relative cutoff for Choi eigenvalues kept as Kraus terms.
pub const KRAUS_CUTOFF: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Port {
    pub label: Label,
    pub ty: SystemType,
}

impl Port {
    pub fn new(label: impl Into<Label>, ty: SystemType) -> Self {
        Port { label: label.into(), ty }
    }
}

fn default_ports(prefix: &str, types: &[SystemType]) -> Vec<Port> {
    types.iter().enumerate().map(|(k, t)| Port::new(format!("{prefix}{}", k + 1), t.clone())).collect()
}

fn space_of(inputs: &[Port], outputs: &[Port]) -> Result<LabeledSpace> {
    LabeledSpace::new(inputs.iter().chain(outputs).map(|p| (p.label.clone(), p.ty.dim())))
}

/// Input label → output labels it can influence.
type Reach = BTreeMap<Label, BTreeSet<Label>>;

fn all_to_all(inputs: &[Port], outputs: &[Port]) -> Reach {
    let outs: BTreeSet<Label> = outputs.iter().map(|p| p.label.clone()).collect();
    inputs.iter().map(|p| (p.label.clone(), outs.clone())).collect()
}

/// Hermitian operator on its input factors followed by its output factors.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorFragment {
    inputs: Vec<Port>,
    outputs: Vec<Port>,
    op: DenseHermitian,
    reach: Reach,
}

impl OperatorFragment {
    pub fn new(inputs: Vec<Port>, outputs: Vec<Port>, mat: CMatrix) -> Result<Self> {
        let space = space_of(&inputs, &outputs)?;
        let op = DenseHermitian::new(space, mat)?;
        let reach = all_to_all(&inputs, &outputs);
        Ok(OperatorFragment { inputs, outputs, op, reach })
    }

    /// Ports labelled `in1, in2, ...` and `out1, out2, ...`.
    pub fn with_types(ins: &[SystemType], outs: &[SystemType], mat: CMatrix) -> Result<Self> {
        Self::new(default_ports("in", ins), default_ports("out", outs), mat)
    }

    /// Takes an operator whose space already lists inputs then outputs.
    pub fn from_operator(inputs: Vec<Port>, outputs: Vec<Port>, op: DenseHermitian) -> Result<Self> {
        let space = space_of(&inputs, &outputs)?;
        if space != *op.space() {
            return Err(Error::DimMismatch { expected: space.total_dim(), got: op.dim() });
        }
        let reach = all_to_all(&inputs, &outputs);
        Ok(OperatorFragment { inputs, outputs, op, reach })
    }

    pub fn preparation(ty: &SystemType, rho: CMatrix) -> Result<Self> {
        Self::with_types(&[], std::slice::from_ref(ty), rho)
    }

    pub fn effect(ty: &SystemType, e: CMatrix) -> Result<Self> {
        Self::with_types(std::slice::from_ref(ty), &[], e)
    }

    pub fn scalar(x: f64) -> Self {
        OperatorFragment { inputs: vec![], outputs: vec![], op: DenseHermitian::scalar(x), reach: Reach::new() }
    }

    /// SWAP on `in1 ⊗ out1`: the fragment of the identity channel.
    pub fn identity_channel(ty: &SystemType) -> Self {
        let n = ty.dim();
        let mat = CMatrix::from_fn(n * n, n * n, |r, c| {
            let (i, o) = (r / n, r % n);
            let (i2, o2) = (c / n, c % n);
            if i == o2 && o == i2 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self::with_types(std::slice::from_ref(ty), std::slice::from_ref(ty), mat).expect("swap is Hermitian")
    }

    /// The channel `ρ ↦ U ρ U†`.
    pub fn unitary_channel(ins: &[SystemType], outs: &[SystemType], u: &CMatrix) -> Result<Self> {
        operator_from_kraus(std::slice::from_ref(u), ins, outs)
    }

    pub fn inputs(&self) -> &[Port] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Port] {
        &self.outputs
    }

    pub fn op(&self) -> &DenseHermitian {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn input_labels(&self) -> Vec<Label> {
        self.inputs.iter().map(|p| p.label.clone()).collect()
    }

    pub fn output_labels(&self) -> Vec<Label> {
        self.outputs.iter().map(|p| p.label.clone()).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.iter().map(|p| p.ty.dim()).product()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.iter().map(|p| p.ty.dim()).product()
    }

    pub fn is_scalar(&self) -> bool {
        self.inputs.is_empty() && self.outputs.is_empty()
    }

    /// Value of a 0-port fragment.
    pub fn value(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::OpenPorts(self.port_list()));
        }
        let (re, im) = self.op.scalar_value();
        if im.abs() > IMAG_TOL {
            return Err(Error::ImaginaryResidue(im.abs()));
        }
        Ok(re)
    }

    fn port_list(&self) -> String {
        self.inputs.iter().chain(&self.outputs).map(|p| p.label.to_string()).collect::<Vec<_>>().join(", ")
    }

    /// Input and output types in port order.
    pub fn port_types(&self) -> (Vec<SystemType>, Vec<SystemType>) {
        (self.inputs.iter().map(|p| p.ty.clone()).collect(), self.outputs.iter().map(|p| p.ty.clone()).collect())
    }

    pub fn reach(&self) -> &BTreeMap<Label, BTreeSet<Label>> {
        &self.reach
    }

    pub fn scale(&self, k: f64) -> Self {
        OperatorFragment { op: self.op.scale(k), ..self.clone() }
    }

    /// Sum of two fragments with the same port structure (labels of `self` kept).
    pub fn add(&self, other: &OperatorFragment) -> Result<Self> {
        if self.port_types() != other.port_types() {
            return Err(Error::StructureMismatch);
        }
        Ok(OperatorFragment { op: self.op.add(&other.op)?, ..self.clone() })
    }

    /// Replaces the matrix, keeping ports.
    pub fn with_matrix(&self, mat: CMatrix) -> Result<Self> {
        let op = DenseHermitian::new(self.op.space().clone(), mat)?;
        Ok(OperatorFragment { op, ..self.clone() })
    }

    /// Renames ports; labels missing from `map` are kept.
    pub fn relabel(&self, map: &HashMap<Label, Label>) -> Result<Self> {
        let rename = |l: &Label| map.get(l).cloned().unwrap_or_else(|| l.clone());
        let inputs = self.inputs.iter().map(|p| Port { label: rename(&p.label), ty: p.ty.clone() }).collect();
        let outputs = self.outputs.iter().map(|p| Port { label: rename(&p.label), ty: p.ty.clone() }).collect();
        let op = self.op.relabel(map)?;
        let reach = self.reach.iter().map(|(i, os)| (rename(i), os.iter().map(rename).collect())).collect();
        Ok(OperatorFragment { inputs, outputs, op, reach })
    }

    /// Renames ports positionally.
    pub fn relabel_ports(&self, ins: &[Label], outs: &[Label]) -> Result<Self> {
        if ins.len() != self.inputs.len() || outs.len() != self.outputs.len() {
            return Err(Error::DimMismatch { expected: self.inputs.len() + self.outputs.len(), got: ins.len() + outs.len() });
        }
        let map: HashMap<Label, Label> = self
            .inputs
            .iter()
            .zip(ins)
            .chain(self.outputs.iter().zip(outs))
            .map(|(p, l)| (p.label.clone(), l.clone()))
            .collect();
        self.relabel(&map)
    }

    fn find(&self, label: &Label) -> Option<(bool, &Port)> {
        if let Some(p) = self.inputs.iter().find(|p| &p.label == label) {
            return Some((false, p));
        }
        self.outputs.iter().find(|p| &p.label == label).map(|p| (true, p))
    }
}

/// Wires `a` and `b` along `pairs` of (output label, input label), each
/// pair joining an output of one fragment to an input of the other.
pub fn contract(a: &OperatorFragment, b: &OperatorFragment, pairs: &[(Label, Label)]) -> Result<OperatorFragment> {
    // (label in a, label in b) per wire, plus the wires as out → in edges
    let mut matched: Vec<(Label, Label)> = Vec::with_capacity(pairs.len());
    let mut wires: Vec<(Label, Label, bool)> = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        let (ax, by) = (a.find(x), b.find(y));
        let (bx, ay) = (b.find(x), a.find(y));
        let (pa, pb, a_is_source) = match (ax, by, bx, ay) {
            (Some((true, pa)), Some((false, pb)), _, _) => (pa, pb, true),
            (_, _, Some((true, pb)), Some((false, pa))) => (pa, pb, false),
            (None, _, None, _) => return Err(Error::UnknownLabel(x.to_string())),
            (_, None, _, None) => return Err(Error::UnknownLabel(y.to_string())),
            _ => return Err(Error::PortDirection(format!("{x} -> {y}"))),
        };
        if pa.ty != pb.ty {
            return Err(Error::TypeMismatch { label: format!("{x} -> {y}"), left: pa.ty.to_string(), right: pb.ty.to_string() });
        }
        matched.push((pa.label.clone(), pb.label.clone()));
        wires.push((pa.label.clone(), pb.label.clone(), a_is_source));
    }
    let a_s: BTreeSet<&Label> = matched.iter().map(|(l, _)| l).collect();
    let b_s: BTreeSet<&Label> = matched.iter().map(|(_, l)| l).collect();
    if a_s.len() != matched.len() {
        return Err(Error::LabelCollision(matched.iter().map(|(l, _)| l.to_string()).collect::<Vec<_>>().join(", ")));
    }
    if b_s.len() != matched.len() {
        return Err(Error::LabelCollision(matched.iter().map(|(_, l)| l.to_string()).collect::<Vec<_>>().join(", ")));
    }
    let keep_a = |p: &&Port| !a_s.contains(&p.label);
    let keep_b = |p: &&Port| !b_s.contains(&p.label);
    let inputs: Vec<Port> = a.inputs.iter().filter(keep_a).chain(b.inputs.iter().filter(keep_b)).cloned().collect();
    let outputs: Vec<Port> = a.outputs.iter().filter(keep_a).chain(b.outputs.iter().filter(keep_b)).cloned().collect();
    let result_space = space_of(&inputs, &outputs)?;

    let reach = combined_reach(a, b, &wires, &inputs, &outputs)?;

    let a_keep: Vec<Label> = a.op.space().labels().filter(|l| !a_s.contains(l)).cloned().collect();
    let b_keep: Vec<Label> = b.op.space().labels().filter(|l| !b_s.contains(l)).cloned().collect();
    let a_order: Vec<Label> = a_keep.iter().cloned().chain(matched.iter().map(|(l, _)| l.clone())).collect();
    let b_order: Vec<Label> = matched.iter().map(|(_, l)| l.clone()).chain(b_keep.iter().cloned()).collect();
    let ap = permute_factors(&a.op, &a_order)?;
    let bp = permute_factors(&b.op, &b_order)?;
    let dk: usize = a_keep.iter().map(|l| a.op.space().dim_of(l).unwrap()).product();
    let dl: usize = b_keep.iter().map(|l| b.op.space().dim_of(l).unwrap()).product();
    let ds = ap.dim() / dk;
    let (am, bm) = (ap.matrix(), bp.matrix());

    // R[(k,l),(k',l')] = Σ_{s,s'} A[(k,s),(k',s')] · B[(s',l),(s,l')]
    let at = CMatrix::from_fn(dk * dk, ds * ds, |r, c| {
        let (k, k2) = (r / dk, r % dk);
        let (s, s2) = (c / ds, c % ds);
        am[(k * ds + s, k2 * ds + s2)]
    });
    let bt = CMatrix::from_fn(ds * ds, dl * dl, |r, c| {
        let (s, s2) = (r / ds, r % ds);
        let (l, l2) = (c / dl, c % dl);
        bm[(s2 * dl + l, s * dl + l2)]
    });
    let rt = at * bt;
    let n = dk * dl;
    let rmat = CMatrix::from_fn(n, n, |r, c| {
        let (k, l) = (r / dl, r % dl);
        let (k2, l2) = (c / dl, c % dl);
        rt[(k * dk + k2, l * dl + l2)]
    });
    let joint = LabeledSpace::new(a_keep.iter().chain(&b_keep).map(|l| {
        let d = a.op.space().dim_of(l).or_else(|| b.op.space().dim_of(l)).unwrap();
        (l.clone(), d)
    }))?;
    let r = DenseHermitian::from_raw(joint, rmat);
    let order: Vec<Label> = result_space.labels().cloned().collect();
    let op = permute_factors(&r, &order)?;
    Ok(OperatorFragment { inputs, outputs, op, reach })
}

/// Propagates reachability through the new wires; fails on a directed cycle.
fn combined_reach(
    a: &OperatorFragment,
    b: &OperatorFragment,
    wires: &[(Label, Label, bool)],
    inputs: &[Port],
    outputs: &[Port],
) -> Result<Reach> {
    // Port nodes are tagged by side so equal labels on both sides stay distinct.
    type Node = (bool, Label);
    let mut edges: BTreeMap<Node, BTreeSet<Node>> = BTreeMap::new();
    for (side, f) in [(false, a), (true, b)] {
        for (i, outs) in &f.reach {
            let e = edges.entry((side, i.clone())).or_default();
            e.extend(outs.iter().map(|o| (side, o.clone())));
        }
    }
    for (la, lb, a_is_source) in wires {
        let (from, to) = if *a_is_source { ((false, la.clone()), (true, lb.clone())) } else { ((true, lb.clone()), (false, la.clone())) };
        edges.entry(from).or_default().insert(to);
    }
    // Cycle detection by iterative colouring.
    let mut colour: BTreeMap<Node, u8> = BTreeMap::new();
    for start in edges.keys() {
        if colour.contains_key(start) {
            continue;
        }
        let mut stack: Vec<(Node, bool)> = vec![(start.clone(), false)];
        while let Some((v, done)) = stack.pop() {
            if done {
                colour.insert(v, 2);
                continue;
            }
            match colour.get(&v) {
                Some(2) => continue,
                Some(1) => continue,
                _ => {}
            }
            colour.insert(v.clone(), 1);
            stack.push((v.clone(), true));
            if let Some(ns) = edges.get(&v) {
                for n in ns {
                    match colour.get(n) {
                        Some(1) => return Err(Error::CycleCreated),
                        Some(2) => {}
                        _ => stack.push((n.clone(), false)),
                    }
                }
            }
        }
    }
    let a_in: BTreeSet<&Label> = a.inputs.iter().map(|p| &p.label).collect();
    let open_out: BTreeSet<(bool, &Label)> = outputs
        .iter()
        .map(|p| (!a.outputs.iter().any(|q| q.label == p.label), &p.label))
        .collect();
    let mut reach = Reach::new();
    for p in inputs {
        let side = !a_in.contains(&p.label);
        let mut seen: BTreeSet<Node> = BTreeSet::new();
        let mut stack = vec![(side, p.label.clone())];
        while let Some(v) = stack.pop() {
            if !seen.insert(v.clone()) {
                continue;
            }
            if let Some(ns) = edges.get(&v) {
                stack.extend(ns.iter().cloned());
            }
        }
        let outs = seen.into_iter().filter(|(s, l)| open_out.contains(&(*s, l))).map(|(_, l)| l).collect();
        reach.insert(p.label.clone(), outs);
    }
    Ok(reach)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ContractionOrder {
    /// Optimal for up to six nodes, greedy beyond.
    #[default]
    Auto,
    Greedy,
    Optimal,
    /// Node-id order, left to right.
    Naive,
}

/// Exhaustive planning is limited to this many nodes.
pub const OPTIMAL_MAX_NODES: usize = 6;

/// Per-node ports: (dim, node at the other end of the wire, if any).
struct PlanGraph {
    ports: Vec<Vec<(usize, Option<usize>)>>,
}

impl PlanGraph {
    fn open_dim(&self, set: &BTreeSet<usize>) -> usize {
        set.iter()
            .flat_map(|&n| self.ports[n].iter())
            .filter(|(_, partner)| partner.is_none_or(|p| !set.contains(&p)))
            .map(|(d, _)| *d)
            .product()
    }

    fn connected(&self, x: &BTreeSet<usize>, y: &BTreeSet<usize>) -> bool {
        x.iter().any(|&n| self.ports[n].iter().any(|(_, p)| p.is_some_and(|p| y.contains(&p))))
    }
}

/// Merge steps `(i, j)` with `i < j`: cluster `j` is folded into `i` and removed.
fn plan(g: &PlanGraph, order: ContractionOrder) -> Vec<(usize, usize)> {
    let n = g.ports.len();
    let order = match order {
        ContractionOrder::Auto if n <= OPTIMAL_MAX_NODES => ContractionOrder::Optimal,
        ContractionOrder::Auto => ContractionOrder::Greedy,
        ContractionOrder::Optimal if n > OPTIMAL_MAX_NODES => ContractionOrder::Greedy,
        o => o,
    };
    let clusters: Vec<BTreeSet<usize>> = (0..n).map(|k| BTreeSet::from([k])).collect();
    match order {
        ContractionOrder::Naive => (1..n).map(|_| (0, 1)).collect(),
        ContractionOrder::Greedy => greedy(g, clusters),
        _ => {
            let mut best = (usize::MAX, usize::MAX, Vec::new());
            optimal(g, clusters, 0, 0, &mut Vec::new(), &mut best);
            best.2
        }
    }
}

fn greedy(g: &PlanGraph, mut clusters: Vec<BTreeSet<usize>>) -> Vec<(usize, usize)> {
    let mut steps = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(bool, usize, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let linked = g.connected(&clusters[i], &clusters[j]);
                let u: BTreeSet<usize> = clusters[i].union(&clusters[j]).copied().collect();
                let cand = (!linked, g.open_dim(&u), i, j);
                if best.is_none_or(|b| cand < b) {
                    best = Some(cand);
                }
            }
        }
        let (_, _, i, j) = best.unwrap();
        let cj = clusters.remove(j);
        clusters[i].extend(cj);
        steps.push((i, j));
    }
    steps
}

/// Minimises the largest intermediate, then the summed intermediate size.
fn optimal(
    g: &PlanGraph,
    clusters: Vec<BTreeSet<usize>>,
    peak: usize,
    total: usize,
    steps: &mut Vec<(usize, usize)>,
    best: &mut (usize, usize, Vec<(usize, usize)>),
) {
    if (peak, total) >= (best.0, best.1) {
        return;
    }
    if clusters.len() == 1 {
        *best = (peak, total, steps.clone());
        return;
    }
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            let u: BTreeSet<usize> = clusters[i].union(&clusters[j]).copied().collect();
            let d = g.open_dim(&u);
            let mut next = clusters.clone();
            next.remove(j);
            next[i] = u;
            steps.push((i, j));
            optimal(g, next, peak.max(d), total + d * d, steps, best);
            steps.pop();
        }
    }
}

fn port_label(node: &str, dir: &str, k: usize) -> Label {
    Label::new(format!("{node}.{dir}{k}"))
}

/// Node operators relabelled to `{node}.in{k}` / `{node}.out{k}`, in node-id order.
fn labelled_nodes(graph: &WireGraph) -> Result<Vec<(String, OperatorFragment)>> {
    graph
        .nodes()
        .map(|n| {
            let op = n.operator_payload().ok_or_else(|| Error::MissingPayload(n.id.clone()))?;
            let ins: Vec<Label> = (1..=n.inputs.len()).map(|k| port_label(&n.id, "in", k)).collect();
            let outs: Vec<Label> = (1..=n.outputs.len()).map(|k| port_label(&n.id, "out", k)).collect();
            Ok((n.id.clone(), op.relabel_ports(&ins, &outs)?))
        })
        .collect()
}

fn check_circuit(graph: &WireGraph) -> Result<()> {
    let report = validate(graph);
    if !report.is_valid() {
        let msg = report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(Error::InvalidGraph(msg));
    }
    if !report.is_circuit {
        let open: Vec<String> = report
            .open_inputs
            .iter()
            .map(|(p, _)| format!("{}.in{}", p.node, p.port))
            .chain(report.open_outputs.iter().map(|(p, _)| format!("{}.out{}", p.node, p.port)))
            .collect();
        return Err(Error::OpenPorts(open.join(", ")));
    }
    Ok(())
}

/// Contracts every wire of `graph` and returns the resulting fragment,
/// whose open ports are labelled `{node}.in{k}` / `{node}.out{k}`.
pub fn contract_graph(graph: &WireGraph, order: ContractionOrder) -> Result<OperatorFragment> {
    let report = validate(graph);
    if !report.is_valid() {
        let msg = report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(Error::InvalidGraph(msg));
    }
    let nodes = labelled_nodes(graph)?;
    if nodes.is_empty() {
        return Ok(OperatorFragment::scalar(1.0));
    }
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
    let mut ports: Vec<Vec<(usize, Option<usize>)>> = Vec::with_capacity(nodes.len());
    for (id, f) in &nodes {
        let node = graph.node(id).unwrap();
        let mut ps = Vec::new();
        for (k, t) in node.inputs.iter().enumerate() {
            let partner = graph.wires().iter().find(|w| w.to.node == *id && w.to.port == k + 1).map(|w| index[w.from.node.as_str()]);
            ps.push((t.dim(), partner));
        }
        for (k, t) in node.outputs.iter().enumerate() {
            let partner = graph.wires().iter().find(|w| w.from.node == *id && w.from.port == k + 1).map(|w| index[w.to.node.as_str()]);
            ps.push((t.dim(), partner));
        }
        debug_assert_eq!(ps.len(), f.inputs.len() + f.outputs.len());
        ports.push(ps);
    }
    let steps = plan(&PlanGraph { ports }, order);

    let mut members: Vec<BTreeSet<usize>> = (0..nodes.len()).map(|k| BTreeSet::from([k])).collect();
    let mut frags: Vec<OperatorFragment> = nodes.iter().map(|(_, f)| f.clone()).collect();
    for (i, j) in steps {
        let pairs: Vec<(Label, Label)> = graph
            .wires()
            .iter()
            .filter(|w| {
                let (s, t) = (index[w.from.node.as_str()], index[w.to.node.as_str()]);
                (members[i].contains(&s) && members[j].contains(&t)) || (members[j].contains(&s) && members[i].contains(&t))
            })
            .map(|w| (port_label(&w.from.node, "out", w.from.port), port_label(&w.to.node, "in", w.to.port)))
            .collect();
        let fj = frags.remove(j);
        let mj = members.remove(j);
        frags[i] = contract(&frags[i], &fj, &pairs)?;
        members[i].extend(mj);
    }
    Ok(frags.pop().unwrap())
}

/// The circuit trace of a closed circuit.
pub fn eval_circuit(graph: &WireGraph, order: ContractionOrder) -> Result<f64> {
    check_circuit(graph)?;
    contract_graph(graph, order)?.value()
}

/// Single-shot evaluation on the joint space of all wires: embeds every
/// node operator, multiplies them all and takes the full trace.
pub fn eval_circuit_dense(graph: &WireGraph) -> Result<f64> {
    check_circuit(graph)?;
    let nodes = labelled_nodes(graph)?;
    // each wire becomes one factor, named after its output end
    let mut rename: HashMap<Label, Label> = HashMap::new();
    let mut factors: Vec<(Label, usize)> = Vec::new();
    for w in graph.wires() {
        let out = port_label(&w.from.node, "out", w.from.port);
        let inp = port_label(&w.to.node, "in", w.to.port);
        let dim = graph.node(&w.from.node).unwrap().outputs[w.from.port - 1].dim();
        rename.insert(inp, out.clone());
        factors.push((out, dim));
    }
    let joint = LabeledSpace::new(factors.clone())?;
    let n = joint.total_dim();
    let mut prod = CMatrix::identity(n, n);
    let mut scalar = C64::new(1.0, 0.0);
    for (_, f) in nodes {
        let f = f.relabel(&rename)?;
        if f.is_scalar() {
            scalar *= f.matrix()[(0, 0)];
            continue;
        }
        let own: BTreeSet<&Label> = f.op.space().labels().collect();
        let rest: Vec<(Label, usize)> = factors.iter().filter(|(l, _)| !own.contains(l)).cloned().collect();
        let embedded = kron(&f.op, &DenseHermitian::identity(LabeledSpace::new(rest)?))?;
        let order: Vec<Label> = joint.labels().cloned().collect();
        let embedded = permute_factors(&embedded, &order)?;
        prod *= embedded.matrix();
    }
    let z = prod.trace() * scalar;
    if z.im.abs() > IMAG_TOL {
        return Err(Error::ImaginaryResidue(z.im.abs()));
    }
    Ok(z.re)
}

/// Input transpose of a fragment; PSD iff the fragment is completely positive.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiForm {
    inputs: Vec<Port>,
    outputs: Vec<Port>,
    mat: DenseHermitian,
}

impl ChoiForm {
    pub fn inputs(&self) -> &[Port] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Port] {
        &self.outputs
    }

    pub fn op(&self) -> &DenseHermitian {
        &self.mat
    }

    pub fn matrix(&self) -> &CMatrix {
        self.mat.matrix()
    }

    /// Undoes the input transpose.
    pub fn to_fragment(&self) -> Result<OperatorFragment> {
        let labels: Vec<Label> = self.inputs.iter().map(|p| p.label.clone()).collect();
        let op = partial_transpose(&self.mat, &labels, &[])?;
        OperatorFragment::from_operator(self.inputs.clone(), self.outputs.clone(), op)
    }
}

pub fn input_transpose(f: &OperatorFragment) -> ChoiForm {
    let labels = f.input_labels();
    let mat = partial_transpose(&f.op, &labels, &[]).expect("input labels belong to the fragment");
    ChoiForm { inputs: f.inputs.clone(), outputs: f.outputs.clone(), mat }
}

/// `Tr_S[(I ⊗ m^{T_S})(n ⊗ I)]` over the shared labels `S`, built on the
/// full joint space.
pub fn link_product(m: &ChoiForm, n: &ChoiForm, shared: &[Label]) -> Result<ChoiForm> {
    let ms = m.mat.space();
    let ns = n.mat.space();
    for l in shared {
        match (ms.dim_of(l), ns.dim_of(l)) {
            (Some(a), Some(b)) if a == b => {}
            _ => return Err(Error::LabelMismatch(l.to_string())),
        }
        let (pm, pn) = (port_in(&m.inputs, &m.outputs, l), port_in(&n.inputs, &n.outputs, l));
        if pm.is_none() || pn.is_none() || pm.unwrap().ty != pn.unwrap().ty {
            return Err(Error::LabelMismatch(l.to_string()));
        }
    }
    let s: BTreeSet<&Label> = shared.iter().collect();
    let m_rest: Vec<(Label, usize)> = ms.factors().iter().filter(|(l, _)| !s.contains(l)).cloned().collect();
    let n_rest: Vec<(Label, usize)> = ns.factors().iter().filter(|(l, _)| !s.contains(l)).cloned().collect();
    let mt = partial_transpose(&m.mat, shared, &[])?;
    let big_m = kron(&DenseHermitian::identity(LabeledSpace::new(n_rest.clone())?), &mt)?;
    let big_n = kron(&n.mat, &DenseHermitian::identity(LabeledSpace::new(m_rest.clone())?))?;
    let order: Vec<Label> = big_n.space().labels().cloned().collect();
    let big_m = permute_factors(&big_m, &order)?;
    let prod = big_m.matrix() * big_n.matrix();
    let joint = DenseHermitian::from_raw(big_n.space().clone(), prod);
    let reduced = partial_trace(&joint, shared)?;

    let keep = |p: &&Port| !s.contains(&p.label);
    let inputs: Vec<Port> = m.inputs.iter().filter(keep).chain(n.inputs.iter().filter(keep)).cloned().collect();
    let outputs: Vec<Port> = m.outputs.iter().filter(keep).chain(n.outputs.iter().filter(keep)).cloned().collect();
    let order: Vec<Label> = inputs.iter().chain(&outputs).map(|p| p.label.clone()).collect();
    let mat = permute_factors(&reduced, &order)?;
    Ok(ChoiForm { inputs, outputs, mat })
}

fn port_in<'a>(ins: &'a [Port], outs: &'a [Port], l: &Label) -> Option<&'a Port> {
    ins.iter().chain(outs).find(|p| &p.label == l)
}

fn check_dims(expected: &[Port], got: &LabeledSpace) -> Result<()> {
    let want: Vec<usize> = expected.iter().map(|p| p.ty.dim()).collect();
    if want != got.dims() {
        return Err(Error::DimMismatch { expected: want.iter().product(), got: got.total_dim() });
    }
    Ok(())
}

/// `Tr_in[(ρ ⊗ I) B̂]`: the state evolved forward through `f`.
pub fn apply_channel(f: &OperatorFragment, state: &DenseHermitian) -> Result<DenseHermitian> {
    check_dims(&f.inputs, state.space())?;
    let rho = OperatorFragment::from_operator(vec![], f.inputs.clone(), state.with_space(space_of(&[], &f.inputs)?)?)?;
    let pairs: Vec<(Label, Label)> = f.inputs.iter().map(|p| (p.label.clone(), p.label.clone())).collect();
    Ok(contract(&rho, f, &pairs)?.op)
}

/// `Tr_out[(I ⊗ C) B̂]`: the effect evolved backwards through `f`.
pub fn reverse_apply(f: &OperatorFragment, effect: &DenseHermitian) -> Result<DenseHermitian> {
    check_dims(&f.outputs, effect.space())?;
    let e = OperatorFragment::from_operator(f.outputs.clone(), vec![], effect.with_space(space_of(&f.outputs, &[])?)?)?;
    let pairs: Vec<(Label, Label)> = f.outputs.iter().map(|p| (p.label.clone(), p.label.clone())).collect();
    Ok(contract(f, &e, &pairs)?.op)
}

/// Kraus operators (output × input) from the Choi eigendecomposition.
pub fn kraus_decompose(f: &OperatorFragment) -> Result<Vec<CMatrix>> {
    let choi = input_transpose(f);
    let (values, vectors) = eigh_matrix(choi.matrix())?;
    let tol = crate::linalg::psd_tolerance(choi.op());
    if let Some(&min) = values.first() {
        if min < -tol {
            return Err(Error::NotCP(min));
        }
    }
    let trace: f64 = values.iter().sum();
    let (din, dout) = (f.input_dim(), f.output_dim());
    let mut out = Vec::new();
    for (k, &lam) in values.iter().enumerate().rev() {
        if lam <= KRAUS_CUTOFF * trace.max(0.0) || lam <= 0.0 {
            continue;
        }
        let s = lam.sqrt();
        out.push(CMatrix::from_fn(dout, din, |o, i| vectors[(i * dout + o, k)] * s));
    }
    Ok(out)
}

/// Fragment of the map `ρ ↦ Σ E ρ E†`.
pub fn operator_from_kraus(kraus: &[CMatrix], ins: &[SystemType], outs: &[SystemType]) -> Result<OperatorFragment> {
    let din: usize = ins.iter().map(|t| t.dim()).product();
    let dout: usize = outs.iter().map(|t| t.dim()).product();
    let n = din * dout;
    let mut choi = CMatrix::zeros(n, n);
    for (index, e) in kraus.iter().enumerate() {
        if e.nrows() != dout || e.ncols() != din {
            return Err(Error::ShapeMismatch { index, rows: e.nrows(), cols: e.ncols(), expected_rows: dout, expected_cols: din });
        }
        let v: Vec<C64> = (0..n).map(|x| e[(x % dout, x / dout)]).collect();
        for r in 0..n {
            for c in 0..n {
                choi[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    let inputs = default_ports("in", ins);
    let outputs = default_ports("out", outs);
    let space = space_of(&inputs, &outputs)?;
    let c = DenseHermitian::new(space, choi)?;
    let labels: Vec<Label> = inputs.iter().map(|p| p.label.clone()).collect();
    let op = partial_transpose(&c, &labels, &[])?;
    OperatorFragment::from_operator(inputs, outputs, op)
}

/// Dense superoperator matrix `S` with `vec(Φ(ρ)) = S vec(ρ)` (row-major vec).
pub fn superoperator(f: &OperatorFragment) -> Result<CMatrix> {
    let (din, dout) = (f.input_dim(), f.output_dim());
    let mut s = CMatrix::zeros(dout * dout, din * din);
    let in_space = space_of(&[], &f.inputs)?;
    for i in 0..din {
        for j in 0..din {
            // Φ is linear, so feed it Hermitian combinations of |i⟩⟨j|
            let mut re = CMatrix::zeros(din, din);
            re[(i, j)] += C64::new(0.5, 0.0);
            re[(j, i)] += C64::new(0.5, 0.0);
            let mut im = CMatrix::zeros(din, din);
            im[(i, j)] += C64::new(0.0, -0.5);
            im[(j, i)] += C64::new(0.0, 0.5);
            let a = apply_channel(f, &DenseHermitian::new(in_space.clone(), re)?)?;
            let b = apply_channel(f, &DenseHermitian::new(in_space.clone(), im)?)?;
            // |i⟩⟨j| = re + i·im
            let out = a.matrix() + b.matrix() * C64::new(0.0, 1.0);
            for r in 0..dout {
                for c in 0..dout {
                    s[(r * dout + c, i * din + j)] = out[(r, c)];
                }
            }
        }
    }
    Ok(s)
}

/// Largest entrywise deviation between two fragments' matrices.
pub fn fragment_deviation(a: &OperatorFragment, b: &OperatorFragment) -> f64 {
    if a.matrix().shape() != b.matrix().shape() {
        return f64::INFINITY;
    }
    max_abs(&(a.matrix() - b.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::FragmentNode;

    fn q() -> SystemType {
        SystemType::qubit()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn ket_bra(n: usize, i: usize, j: usize) -> CMatrix {
        let mut m = CMatrix::zeros(n, n);
        m[(i, j)] = c(1.0, 0.0);
        m
    }

    fn plus() -> CMatrix {
        CMatrix::from_element(2, 2, c(0.5, 0.0))
    }

    #[test]
    fn prep_into_effect_is_trace() {
        let rho = OperatorFragment::preparation(&q(), plus()).unwrap();
        let e = OperatorFragment::effect(&q(), ket_bra(2, 0, 0)).unwrap();
        let r = contract(&rho, &e, &[("out1".into(), "in1".into())]).unwrap();
        assert!(r.is_scalar());
        assert!((r.value().unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_pairs_is_kron() {
        let a = OperatorFragment::preparation(&q(), plus()).unwrap();
        let b = OperatorFragment::effect(&q(), ket_bra(2, 1, 1)).unwrap();
        let r = contract(&a, &b, &[]).unwrap();
        let expect = b.matrix().kronecker(a.matrix());
        // inputs come first: b's input then a's output
        assert!(max_abs(&(r.matrix() - expect)) < 1e-15);
    }

    #[test]
    fn contract_rejects_type_mismatch_and_direction() {
        let t = SystemType::new("t", 3).unwrap();
        let a = OperatorFragment::preparation(&q(), plus()).unwrap();
        let b = OperatorFragment::effect(&t, CMatrix::identity(3, 3)).unwrap();
        assert!(matches!(contract(&a, &b, &[("out1".into(), "in1".into())]), Err(Error::TypeMismatch { .. })));
        let e = OperatorFragment::effect(&q(), CMatrix::identity(2, 2)).unwrap();
        assert!(matches!(contract(&a, &e, &[("in1".into(), "out1".into())]), Err(Error::PortDirection(_))));
        assert!(matches!(contract(&a, &e, &[("nope".into(), "in1".into())]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn feedback_wire_is_a_cycle() {
        let id = OperatorFragment::identity_channel(&q());
        let other = id.relabel_ports(&["x".into()], &["y".into()]).unwrap();
        let pairs = [(Label::from("out1"), Label::from("x")), (Label::from("y"), Label::from("in1"))];
        assert!(matches!(contract(&id, &other, &pairs), Err(Error::CycleCreated)));
    }

    #[test]
    fn kept_label_collision() {
        let a = OperatorFragment::identity_channel(&q());
        let b = OperatorFragment::identity_channel(&q());
        assert!(matches!(contract(&a, &b, &[]), Err(Error::LabelCollision(_))));
    }

    #[test]
    fn identity_choi_is_unnormalised_bell() {
        let choi = input_transpose(&OperatorFragment::identity_channel(&q()));
        let mut bell = CMatrix::zeros(4, 4);
        for &r in &[0, 3] {
            for &cc in &[0, 3] {
                bell[(r, cc)] = c(1.0, 0.0);
            }
        }
        assert!(max_abs(&(choi.matrix() - bell)) < 1e-15);
        assert_eq!(choi.to_fragment().unwrap(), OperatorFragment::identity_channel(&q()));
    }

    #[test]
    fn no_inputs_transpose_is_noop() {
        let a = OperatorFragment::preparation(&q(), plus()).unwrap();
        assert_eq!(input_transpose(&a).matrix(), a.matrix());
    }

    #[test]
    fn identity_channel_passes_state_and_effect() {
        let id = OperatorFragment::identity_channel(&q());
        let rho = DenseHermitian::new(LabeledSpace::new([("s", 2)]).unwrap(), plus()).unwrap();
        let out = apply_channel(&id, &rho).unwrap();
        assert!(max_abs(&(out.matrix() - plus())) < 1e-15);
        let back = reverse_apply(&id, &rho).unwrap();
        assert!(max_abs(&(back.matrix() - plus())) < 1e-15);
    }

    #[test]
    fn reverse_apply_identity_is_output_trace() {
        let f = operator_from_kraus(&[ket_bra(2, 0, 1), ket_bra(2, 1, 1) * c(0.5, 0.0)], &[q()], &[q()]).unwrap();
        let ident = DenseHermitian::identity(LabeledSpace::new([("o", 2)]).unwrap());
        let lhs = reverse_apply(&f, &ident).unwrap();
        let rhs = partial_trace(f.op(), &f.output_labels()).unwrap();
        assert!(max_abs(&(lhs.matrix() - rhs.matrix())) < 1e-14);
    }

    #[test]
    fn dephasing_kraus_terms_are_diagonal() {
        let f = operator_from_kraus(&[ket_bra(2, 0, 0), ket_bra(2, 1, 1)], &[q()], &[q()]).unwrap();
        let ks = kraus_decompose(&f).unwrap();
        assert_eq!(ks.len(), 2);
        for k in &ks {
            assert!(k[(0, 1)].norm() < 1e-12 && k[(1, 0)].norm() < 1e-12);
        }
        let rho = DenseHermitian::new(LabeledSpace::new([("s", 2)]).unwrap(), plus()).unwrap();
        let out = apply_channel(&f, &rho).unwrap();
        assert!(max_abs(&(out.matrix() - CMatrix::identity(2, 2) * c(0.5, 0.0))) < 1e-14);
    }

    #[test]
    fn identity_kraus_is_single_unitary_term() {
        let ks = kraus_decompose(&OperatorFragment::identity_channel(&q())).unwrap();
        assert_eq!(ks.len(), 1);
        let k = &ks[0];
        let phase = k[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(max_abs(&(k - CMatrix::identity(2, 2) * phase)) < 1e-12);
    }

    #[test]
    fn empty_kraus_is_zero_and_shape_checked() {
        let z = operator_from_kraus(&[], &[q()], &[q()]).unwrap();
        assert_eq!(z.op().max_abs(), 0.0);
        let bad = operator_from_kraus(&[CMatrix::zeros(3, 2)], &[q()], &[q()]);
        assert!(matches!(bad, Err(Error::ShapeMismatch { index: 0, .. })));
    }

    #[test]
    fn not_cp_is_rejected() {
        let swap_t = OperatorFragment::identity_channel(&q());
        let bad = swap_t.scale(-1.0);
        assert!(matches!(kraus_decompose(&bad), Err(Error::NotCP(_))));
    }

    fn chain_graph() -> WireGraph {
        let mut g = WireGraph::new();
        g.add_node(FragmentNode::operator("A", OperatorFragment::preparation(&q(), plus()).unwrap())).unwrap();
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]) * c(0.5f64.sqrt(), 0.0);
        g.add_node(FragmentNode::operator("B", OperatorFragment::unitary_channel(&[q()], &[q()], &h).unwrap())).unwrap();
        g.add_node(FragmentNode::operator("C", OperatorFragment::effect(&q(), ket_bra(2, 0, 0)).unwrap())).unwrap();
        g.connect("A", 1, "B", 1);
        g.connect("B", 1, "C", 1);
        g
    }

    #[test]
    fn hadamard_maps_plus_to_zero() {
        let g = chain_graph();
        for order in [ContractionOrder::Auto, ContractionOrder::Greedy, ContractionOrder::Optimal, ContractionOrder::Naive] {
            assert!((eval_circuit(&g, order).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!((eval_circuit_dense(&g).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn open_ports_are_refused() {
        let mut g = WireGraph::new();
        g.add_node(FragmentNode::operator("A", OperatorFragment::preparation(&q(), plus()).unwrap())).unwrap();
        assert!(matches!(eval_circuit(&g, ContractionOrder::Auto), Err(Error::OpenPorts(_))));
        let mut g = WireGraph::new();
        g.add_node(FragmentNode::symbolic("A", vec![], vec![])).unwrap();
        assert!(matches!(eval_circuit(&g, ContractionOrder::Auto), Err(Error::MissingPayload(_))));
    }

    #[test]
    fn disjoint_circuits_multiply() {
        let mut g = WireGraph::new();
        let e0 = OperatorFragment::effect(&q(), ket_bra(2, 0, 0)).unwrap();
        for k in 0..2 {
            g.add_node(FragmentNode::operator(format!("P{k}"), OperatorFragment::preparation(&q(), plus()).unwrap())).unwrap();
            g.add_node(FragmentNode::operator(format!("E{k}"), e0.clone())).unwrap();
            g.connect(&format!("P{k}"), 1, &format!("E{k}"), 1);
        }
        let v = eval_circuit(&g, ContractionOrder::Greedy).unwrap();
        assert!((v - 0.25).abs() < 1e-14);
    }

    #[test]
    fn link_with_identity_is_unit() {
        let f = operator_from_kraus(&[ket_bra(2, 0, 1), ket_bra(2, 1, 1) * c(0.5, 0.0)], &[q()], &[q()]).unwrap();
        let id = OperatorFragment::identity_channel(&q()).relabel_ports(&["out1".into()], &["z".into()]).unwrap();
        let linked = link_product(&input_transpose(&f), &input_transpose(&id), &["out1".into()]).unwrap();
        let expect = input_transpose(&f);
        assert!(max_abs(&(linked.matrix() - expect.matrix())) < 1e-14);
        assert_eq!(linked.outputs()[0].label, Label::from("z"));
    }
}
