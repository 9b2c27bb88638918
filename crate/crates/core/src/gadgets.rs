//! Fragment factories for the standard constructions: filters,
//! permutations, cnot, the canonical entangled state, Bloch states,
//! teleportation and entanglement swapping, and complete-set synthesis.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use crate::circuit::{FragmentNode, SystemType, WireGraph};
use crate::error::{Error, Result};
use crate::fragment::{
    contract, contract_graph, fragment_deviation, kraus_decompose, operator_from_kraus, ContractionOrder, OperatorFragment,
};
use crate::linalg::{max_abs, CMatrix, Label, C64};
use crate::physicality::{deterministic_effect, is_complete_set, probability_ratio, RATIO_TOL};

/// Tolerance for orthonormality of user-supplied bases.
pub const BASIS_TOL: f64 = 1e-12;
/// Tolerance of the teleportation and swapping verdicts.
pub const DEMO_TOL: f64 = 1e-9;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn outer(a: &[C64], b: &[C64]) -> CMatrix {
    CMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
}

fn check_orthonormal(vs: &[Vec<C64>], n: usize) -> Result<()> {
    for (i, a) in vs.iter().enumerate() {
        if a.len() != n {
            return Err(Error::DimMismatch { expected: n, got: a.len() });
        }
        for (j, b) in vs.iter().enumerate() {
            let target = if i == j { one() } else { zero() };
            if (inner(a, b) - target).norm() > BASIS_TOL {
                return Err(Error::NotOrthonormal);
            }
        }
    }
    Ok(())
}

/// `|k⟩` in dimension `n` (0-based).
pub fn basis_vector(n: usize, k: usize) -> Vec<C64> {
    (0..n).map(|i| if i == k { one() } else { zero() }).collect()
}

/// Orthonormal span of some vectors in a parent system.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    parent: SystemType,
    basis: Vec<Vec<C64>>,
}

impl Subspace {
    pub fn new(parent: SystemType, basis: Vec<Vec<C64>>) -> Result<Self> {
        if basis.is_empty() || basis.len() > parent.dim() {
            return Err(Error::DimMismatch { expected: parent.dim(), got: basis.len() });
        }
        check_orthonormal(&basis, parent.dim())?;
        Ok(Subspace { parent, basis })
    }

    /// Span of computational levels, 1-based as in `|1⟩, |2⟩, ...`.
    pub fn levels(parent: SystemType, levels: &[usize]) -> Result<Self> {
        let n = parent.dim();
        let mut basis = Vec::new();
        for &l in levels {
            if l == 0 || l > n {
                return Err(Error::DimMismatch { expected: n, got: l });
            }
            basis.push(basis_vector(n, l - 1));
        }
        Self::new(parent, basis)
    }

    /// Gram–Schmidt span of arbitrary vectors (dependent ones are dropped).
    pub fn spanned_by(parent: SystemType, vectors: &[Vec<C64>]) -> Result<Self> {
        let basis = gram_schmidt(vectors, 1e-10);
        Self::new(parent, basis)
    }

    pub fn parent(&self) -> &SystemType {
        &self.parent
    }

    pub fn basis(&self) -> &[Vec<C64>] {
        &self.basis
    }

    pub fn projector(&self) -> CMatrix {
        let n = self.parent.dim();
        self.basis.iter().fold(CMatrix::zeros(n, n), |acc, v| acc + outer(v, v))
    }
}

/// Orthonormalises in order, skipping vectors whose residual norm is below `cutoff`.
pub fn gram_schmidt(vectors: &[Vec<C64>], cutoff: f64) -> Vec<Vec<C64>> {
    let mut out: Vec<Vec<C64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &out {
                let c = inner(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let norm = inner(&w, &w).re.sqrt();
        if norm > cutoff {
            out.push(w.into_iter().map(|z| z / norm).collect());
        }
    }
    out
}

/// The channel `ρ ↦ PρP` onto the subspace.
pub fn filter_fragment(s: &Subspace) -> OperatorFragment {
    let t = std::slice::from_ref(&s.parent);
    operator_from_kraus(&[s.projector()], t, t).expect("projector has the parent's shape")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n2 = x * x + y * y + z * z;
        if (n2 - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(n2));
        }
        Ok(BlochPoint { x, y, z })
    }

    pub fn antipode(&self) -> Self {
        BlochPoint { x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn dot(&self, o: &BlochPoint) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// `½(I + x σx + y σy + z σz)`.
    pub fn projector(&self) -> CMatrix {
        let h = 0.5;
        CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(h * (1.0 + self.z), 0.0),
                C64::new(h * self.x, -h * self.y),
                C64::new(h * self.x, h * self.y),
                C64::new(h * (1.0 - self.z), 0.0),
            ],
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Preparation,
    Result,
}

fn with_role(ty: &[SystemType], role: Role, mat: CMatrix) -> OperatorFragment {
    let built = match role {
        Role::Preparation => OperatorFragment::with_types(&[], ty, mat),
        Role::Result => OperatorFragment::with_types(ty, &[], mat),
    };
    built.expect("gadget operators are Hermitian with matching shape")
}

pub fn bloch_state(p: &BlochPoint, role: Role) -> OperatorFragment {
    with_role(&[SystemType::qubit()], role, p.projector())
}

/// `|k⟩⟨k|` (0-based) as a preparation or result.
pub fn basis_state(t: &SystemType, k: usize, role: Role) -> Result<OperatorFragment> {
    if k >= t.dim() {
        return Err(Error::DimMismatch { expected: t.dim(), got: k + 1 });
    }
    let v = basis_vector(t.dim(), k);
    Ok(with_role(std::slice::from_ref(t), role, outer(&v, &v)))
}

/// `(|11⟩ + |22⟩)/√2` on two qubits.
pub fn max_entangled_vector() -> Vec<C64> {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    vec![s, zero(), zero(), s]
}

pub fn max_entangled(role: Role) -> OperatorFragment {
    let v = max_entangled_vector();
    with_role(&[SystemType::qubit(), SystemType::qubit()], role, outer(&v, &v))
}

/// `U = Σ_n e^{iθ[n]} |image[perm(n)]⟩⟨domain[n]|` on the product of `system`.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutationSpec {
    system: Vec<SystemType>,
    domain: Vec<Vec<C64>>,
    image: Vec<Vec<C64>>,
    perm: Vec<usize>,
    phases: Vec<f64>,
}

impl PermutationSpec {
    pub fn new(system: Vec<SystemType>, domain: Vec<Vec<C64>>, image: Vec<Vec<C64>>, perm: Vec<usize>, phases: Option<Vec<f64>>) -> Result<Self> {
        let n: usize = system.iter().map(|t| t.dim()).product();
        if domain.len() != n || image.len() != n {
            return Err(Error::DimMismatch { expected: n, got: domain.len().min(image.len()) });
        }
        check_orthonormal(&domain, n)?;
        check_orthonormal(&image, n)?;
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(Error::NotAPermutation);
            }
            seen[p] = true;
        }
        if perm.len() != n {
            return Err(Error::NotAPermutation);
        }
        let phases = phases.unwrap_or_else(|| vec![0.0; n]);
        if phases.len() != n {
            return Err(Error::DimMismatch { expected: n, got: phases.len() });
        }
        Ok(PermutationSpec { system, domain, image, perm, phases })
    }

    /// A permutation of the computational basis.
    pub fn computational(system: Vec<SystemType>, perm: Vec<usize>) -> Result<Self> {
        let n: usize = system.iter().map(|t| t.dim()).product();
        let basis: Vec<Vec<C64>> = (0..n).map(|k| basis_vector(n, k)).collect();
        Self::new(system, basis.clone(), basis, perm, None)
    }

    pub fn inverse(&self) -> Self {
        let n = self.perm.len();
        let mut inv = vec![0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        PermutationSpec {
            system: self.system.clone(),
            domain: self.image.clone(),
            image: self.domain.clone(),
            phases: (0..n).map(|m| -self.phases[inv[m]]).collect(),
            perm: inv,
        }
    }

    pub fn unitary(&self) -> CMatrix {
        let n = self.perm.len();
        (0..n).fold(CMatrix::zeros(n, n), |acc, k| {
            acc + outer(&self.image[self.perm[k]], &self.domain[k]) * C64::from_polar(1.0, self.phases[k])
        })
    }
}

pub fn permutation_fragment(spec: &PermutationSpec) -> OperatorFragment {
    OperatorFragment::unitary_channel(&spec.system, &spec.system, &spec.unitary()).expect("unitary has matching shape")
}

/// 11→11, 12→12, 21→22, 22→21 with the first qubit as control.
pub fn cnot_spec() -> PermutationSpec {
    PermutationSpec::computational(vec![SystemType::qubit(), SystemType::qubit()], vec![0, 1, 3, 2]).expect("valid permutation")
}

pub fn cnot_fragment() -> OperatorFragment {
    permutation_fragment(&cnot_spec())
}

/// Equatorial qubit state `(|1⟩ + e^{iφ}|2⟩)/√2` as a preparation.
pub fn equatorial_state(phi: f64) -> OperatorFragment {
    bloch_state(&BlochPoint { x: phi.cos(), y: phi.sin(), z: 0.0 }, Role::Preparation)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoVerdict {
    pub verdict: bool,
    /// Angle of the equatorial state used.
    pub b_angle: f64,
    /// Proportionality constant to the reference, when well-conditioned.
    pub ratio: Option<f64>,
    /// Largest entry of `assembled − reference/8`.
    pub deviation: f64,
}

fn node(id: &str, f: OperatorFragment) -> FragmentNode {
    FragmentNode::operator(id, f)
}

/// The open teleportation fragment: input at `P.in1`, output at `M1.out2`.
pub fn teleportation_graph(phi: f64) -> WireGraph {
    let q = SystemType::qubit();
    let mut g = WireGraph::new();
    g.add_node(node("M1", max_entangled(Role::Preparation))).unwrap();
    g.add_node(node("P", cnot_fragment())).unwrap();
    g.add_node(node("B", equatorial_state(phi))).unwrap();
    g.add_node(node("M", max_entangled(Role::Result))).unwrap();
    g.add_node(node("U1", basis_state(&q, 0, Role::Result).unwrap())).unwrap();
    g.connect("M1", 1, "P", 2);
    g.connect("P", 1, "M", 2);
    g.connect("B", 1, "M", 1);
    g.connect("P", 2, "U1", 1);
    g
}

/// The teleportation graph with a preparation `A` on its input.
pub fn teleportation_graph_with_input(phi: f64, a: OperatorFragment) -> WireGraph {
    let mut g = teleportation_graph(phi);
    g.add_node(node("A", a)).unwrap();
    g.connect("A", 1, "P", 1);
    g
}

fn teleport_fragment(phi: f64) -> Result<OperatorFragment> {
    let f = contract_graph(&teleportation_graph(phi), ContractionOrder::Auto)?;
    let map: HashMap<Label, Label> = [("P.in1", "in1"), ("M1.out2", "out1")].into_iter().map(|(a, b)| (Label::from(a), Label::from(b))).collect();
    f.relabel(&map)
}

fn swap_fragment(phi: f64) -> Result<OperatorFragment> {
    let f = contract_graph(&swap_graph(phi), ContractionOrder::Auto)?;
    let map: HashMap<Label, Label> = [("ML.out1", "out1"), ("MR.out2", "out2")].into_iter().map(|(a, b)| (Label::from(a), Label::from(b))).collect();
    f.relabel(&map)
}

/// Relative distance of `f` from the ray through `reference`.
fn proportionality_residual(f: &OperatorFragment, reference: &OperatorFragment) -> f64 {
    let (a, b) = (f.matrix(), reference.matrix());
    let bb = b.norm_squared();
    let k: f64 = b.iter().zip(a.iter()).map(|(x, y)| (x.conj() * y).re).sum::<f64>() / bb;
    (a - b * C64::new(k, 0.0)).norm() / a.norm().max(f64::MIN_POSITIVE)
}

/// Maximises proportionality over the equator: 360-point grid, then
/// golden-section refinement around the best grid point.
fn search_equator(build: impl Fn(f64) -> Result<OperatorFragment>, reference: &OperatorFragment) -> Result<f64> {
    let cost = |phi: f64| -> Result<f64> { Ok(proportionality_residual(&build(phi)?, reference)) };
    let step = TAU / 360.0;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..360 {
        let phi = k as f64 * step;
        let c = cost(phi)?;
        if c < best.0 {
            best = (c, phi);
        }
    }
    let (mut lo, mut hi) = (best.1 - step, best.1 + step);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (cost(x1)?, cost(x2)?);
    for _ in 0..60 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = cost(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = cost(x2)?;
        }
    }
    let phi = (lo + hi) / 2.0;
    Ok(if cost(phi)? <= best.0 { phi.rem_euclid(TAU) } else { best.1 })
}

fn verdict_for(f: &OperatorFragment, reference: &OperatorFragment, phi: f64) -> Result<DemoVerdict> {
    let ratio = probability_ratio(f, reference, RATIO_TOL)?.ratio;
    let deviation = fragment_deviation(f, &reference.scale(0.125));
    Ok(DemoVerdict { verdict: deviation <= DEMO_TOL, b_angle: phi, ratio, deviation })
}

/// Assembles the teleportation fragment, choosing the equatorial state by
/// search, and compares it with `1/8` of the identity channel.
pub fn teleportation_demo() -> Result<(OperatorFragment, DemoVerdict)> {
    let reference = OperatorFragment::identity_channel(&SystemType::qubit());
    let phi = search_equator(teleport_fragment, &reference).map_err(|e| Error::AssemblyError(e.to_string()))?;
    let f = teleport_fragment(phi).map_err(|e| Error::AssemblyError(e.to_string()))?;
    let v = verdict_for(&f, &reference, phi)?;
    Ok((f, v))
}

/// Two canonical entangled states joined by cnot, measured with `M` and `|1⟩`.
pub fn swap_graph(phi: f64) -> WireGraph {
    let q = SystemType::qubit();
    let mut g = WireGraph::new();
    g.add_node(node("ML", max_entangled(Role::Preparation))).unwrap();
    g.add_node(node("MR", max_entangled(Role::Preparation))).unwrap();
    g.add_node(node("Pt", cnot_fragment())).unwrap();
    g.add_node(node("B", equatorial_state(phi))).unwrap();
    g.add_node(node("M", max_entangled(Role::Result))).unwrap();
    g.add_node(node("U1", basis_state(&q, 0, Role::Result).unwrap())).unwrap();
    g.connect("ML", 2, "Pt", 2);
    g.connect("MR", 1, "Pt", 1);
    g.connect("Pt", 1, "M", 2);
    g.connect("B", 1, "M", 1);
    g.connect("Pt", 2, "U1", 1);
    g
}

/// Assembles the swapping preparation and compares it with `1/8` of `M`.
pub fn entanglement_swap_demo() -> Result<(OperatorFragment, DemoVerdict)> {
    let reference = max_entangled(Role::Preparation);
    let phi = search_equator(swap_fragment, &reference).map_err(|e| Error::AssemblyError(e.to_string()))?;
    let f = swap_fragment(phi).map_err(|e| Error::AssemblyError(e.to_string()))?;
    let v = verdict_for(&f, &reference, phi)?;
    Ok((f, v))
}

#[derive(Clone, Debug)]
pub struct SynthesisReport {
    /// Kraus terms per target.
    pub kraus_counts: Vec<usize>,
    /// Columns of `V = Σ E[l,i] ⊗ |l⟩ ⊗ |i⟩`, output ⊗ c ⊗ d ordering.
    pub isometry: CMatrix,
    pub ancilla_dims: (usize, usize),
    /// `max |V†V − I|`.
    pub orthonormality_deviation: f64,
    pub reconstructed: Vec<OperatorFragment>,
    /// Largest entry of reconstructed − target over all targets.
    pub reconstruction_deviation: f64,
}

/// Realises a complete set of targets as one isometry followed by a
/// measurement of ancilla `c` (outcome `l`) and discarding ancilla `d`.
pub fn magic_complete_set(targets: &[OperatorFragment], ins: &[SystemType], outs: &[SystemType]) -> Result<SynthesisReport> {
    if targets.is_empty() || !is_complete_set(targets)? {
        return Err(Error::NotComplete);
    }
    for t in targets {
        if t.port_types() != (ins.to_vec(), outs.to_vec()) {
            return Err(Error::StructureMismatch);
        }
    }
    let kraus: Vec<Vec<CMatrix>> = targets.iter().map(kraus_decompose).collect::<Result<_>>()?;
    let din: usize = ins.iter().map(|t| t.dim()).product();
    let dout: usize = outs.iter().map(|t| t.dim()).product();
    let lc = targets.len();
    let ld = kraus.iter().map(|k| k.len()).max().unwrap_or(1).max(1);
    let mut v = CMatrix::zeros(dout * lc * ld, din);
    for (l, ks) in kraus.iter().enumerate() {
        for (i, e) in ks.iter().enumerate() {
            for o in 0..dout {
                for n in 0..din {
                    v[(((o * lc) + l) * ld + i, n)] = e[(o, n)];
                }
            }
        }
    }
    let gram = v.adjoint() * &v;
    let orthonormality_deviation = max_abs(&(gram - CMatrix::identity(din, din)));
    if orthonormality_deviation > DEMO_TOL {
        return Err(Error::OrthonormalityFailure(orthonormality_deviation));
    }
    let c = SystemType::new("c", lc)?;
    let d = SystemType::new("d", ld)?;
    let wide: Vec<SystemType> = outs.iter().cloned().chain([c.clone(), d.clone()]).collect();
    let channel = operator_from_kraus(std::slice::from_ref(&v), ins, &wide)?;
    let k = outs.len();
    let (lc_label, ld_label) = (Label::new(format!("out{}", k + 1)), Label::new(format!("out{}", k + 2)));
    let mut reconstructed = Vec::with_capacity(lc);
    let mut worst: f64 = 0.0;
    for (l, target) in targets.iter().enumerate() {
        let pick = basis_state(&c, l, Role::Result)?.relabel_ports(std::slice::from_ref(&lc_label), &[])?;
        let discard = deterministic_effect(&d).relabel_ports(std::slice::from_ref(&ld_label), &[])?;
        let step = contract(&channel, &pick, &[(lc_label.clone(), lc_label.clone())])?;
        let r = contract(&step, &discard, &[(ld_label.clone(), ld_label.clone())])?;
        worst = worst.max(fragment_deviation(&r, target));
        reconstructed.push(r);
    }
    Ok(SynthesisReport {
        kraus_counts: kraus.iter().map(|k| k.len()).collect(),
        isometry: v,
        ancilla_dims: (lc, ld),
        orthonormality_deviation,
        reconstructed,
        reconstruction_deviation: worst,
    })
}

/// Circuit-level cross-check for equal input and output dimension: the
/// isometry is completed to a unitary on input ⊗ ancilla (ancilla prepared
/// in `|1⟩`), wired to the outcome effect on `c` and the discard on `d`,
/// and evaluated by graph contraction. Returns the largest deviation.
pub fn magic_circuit_check(report: &SynthesisReport, targets: &[OperatorFragment], ty: &SystemType) -> Result<f64> {
    let n = ty.dim();
    let (lc, ld) = report.ancilla_dims;
    if report.isometry.ncols() != n || report.isometry.nrows() != n * lc * ld {
        return Err(Error::AssemblyError("circuit check needs equal input and output dimension".into()));
    }
    let anc = SystemType::new("anc", lc * ld)?;
    let total = n * lc * ld;
    // columns (n, 0) of the unitary are the isometry columns
    let mut cols: Vec<Vec<C64>> = (0..n).map(|k| report.isometry.column(k).iter().copied().collect()).collect();
    let fixed = cols.len();
    cols.extend((0..total).map(|k| basis_vector(total, k)));
    let full = gram_schmidt(&cols, 1e-8);
    if full.len() != total || max_abs(&(CMatrix::from_fn(total, fixed, |r, c| full[c][r]) - &report.isometry)) > 1e-9 {
        return Err(Error::AssemblyError("isometry could not be completed to a unitary".into()));
    }
    let mut u = CMatrix::zeros(total, total);
    let anc_dim = lc * ld;
    let mut extra = fixed;
    for inp in 0..n {
        for a in 0..anc_dim {
            let col = if a == 0 {
                inp
            } else {
                extra += 1;
                extra - 1
            };
            for r in 0..total {
                u[(r, inp * anc_dim + a)] = full[col][r];
            }
        }
    }
    let c = SystemType::new("c", lc)?;
    let d = SystemType::new("d", ld)?;
    let unitary = OperatorFragment::unitary_channel(&[ty.clone(), anc.clone()], &[ty.clone(), c.clone(), d.clone()], &u)?;
    let mut worst: f64 = 0.0;
    for (l, target) in targets.iter().enumerate() {
        let mut g = WireGraph::new();
        g.add_node(node("R", basis_state(&anc, 0, Role::Preparation)?))?;
        g.add_node(node("W", unitary.clone()))?;
        g.add_node(node("C", basis_state(&c, l, Role::Result)?))?;
        g.add_node(node("D", deterministic_effect(&d)))?;
        g.connect("R", 1, "W", 2);
        g.connect("W", 2, "C", 1);
        g.connect("W", 3, "D", 1);
        let f = contract_graph(&g, ContractionOrder::Auto)?;
        worst = worst.max(fragment_deviation(&f, target));
    }
    Ok(worst)
}
