//! Fiducial families, hopping metrics and duotensors: coefficient arrays
//! over fiducial indices whose legs carry a black/white colour.
//!
//! White input leg: weights on fiducial effects. White output leg: weights
//! on fiducial preparations. Black legs hold the values obtained by capping
//! the leg with fiducial preparations (inputs) or effects (outputs).

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;

use crate::circuit::{SystemType, WireGraph};
use crate::error::{Error, Result};
use crate::fragment::OperatorFragment;
use crate::linalg::{CMatrix, C64};

pub type RMatrix = DMatrix<f64>;

/// Hopping metrics above this condition number are refused.
pub const MAX_CONDITION: f64 = 1e8;
/// Largest imaginary part tolerated in a fiducial trace.
pub const IMAG_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct FiducialFamily {
    system: SystemType,
    names: Vec<String>,
    effects: Vec<CMatrix>,
    preparations: Vec<CMatrix>,
    g: RMatrix,
    g_inv: RMatrix,
    condition: f64,
}

/// Canonical fiducial vectors: `|n⟩`, then for each pair `m < n` the states
/// `(|m⟩+|n⟩)/√2` and `(|m⟩+i|n⟩)/√2`. Names use 1-based levels.
pub fn fiducial_vectors(n: usize) -> Vec<(String, Vec<C64>)> {
    let mut out = Vec::with_capacity(n * n);
    for k in 0..n {
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[k] = C64::new(1.0, 0.0);
        out.push(((k + 1).to_string(), v));
    }
    for m in 0..n {
        for k in m + 1..n {
            let mut x = vec![C64::new(0.0, 0.0); n];
            x[m] = C64::new(FRAC_1_SQRT_2, 0.0);
            x[k] = C64::new(FRAC_1_SQRT_2, 0.0);
            let mut y = x.clone();
            y[k] = C64::new(0.0, FRAC_1_SQRT_2);
            out.push((format!("{}{}x", m + 1, k + 1), x));
            out.push((format!("{}{}y", m + 1, k + 1), y));
        }
    }
    out
}

fn projector(v: &[C64]) -> CMatrix {
    let n = v.len();
    CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

/// `Tr(a b)` with the imaginary residue checked.
fn real_trace_product(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let z: C64 = a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum();
    if z.im.abs() > IMAG_TOL {
        return Err(Error::ImaginaryResidue(z.im.abs()));
    }
    Ok(z.re)
}

fn condition_number(m: &RMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl FiducialFamily {
    /// The canonical family for a type.
    pub fn canonical(system: &SystemType) -> Result<Self> {
        let vs = fiducial_vectors(system.dim());
        let names = vs.iter().map(|(n, _)| n.clone()).collect();
        let projectors: Vec<CMatrix> = vs.iter().map(|(_, v)| projector(v)).collect();
        Self::from_parts(system.clone(), names, projectors.clone(), projectors)
    }

    /// A family from explicit preparation and effect operators.
    pub fn from_parts(system: SystemType, names: Vec<String>, preparations: Vec<CMatrix>, effects: Vec<CMatrix>) -> Result<Self> {
        let k = system.dim() * system.dim();
        if preparations.len() != k || effects.len() != k || names.len() != k {
            return Err(Error::DimMismatch { expected: k, got: preparations.len().min(effects.len()) });
        }
        let mut g = RMatrix::zeros(k, k);
        for (i, p) in preparations.iter().enumerate() {
            for (j, e) in effects.iter().enumerate() {
                g[(i, j)] = real_trace_product(p, e)?;
            }
        }
        let condition = condition_number(&g);
        if condition.is_nan() || condition > MAX_CONDITION {
            return Err(Error::SingularMetric(condition));
        }
        let g_inv = g.clone().lu().try_inverse().ok_or(Error::SingularMetric(condition))?;
        Ok(FiducialFamily { system, names, effects, preparations, g, g_inv, condition })
    }

    pub fn system(&self) -> &SystemType {
        &self.system
    }

    /// `K = N²`.
    pub fn size(&self) -> usize {
        self.effects.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn effects(&self) -> &[CMatrix] {
        &self.effects
    }

    pub fn preparations(&self) -> &[CMatrix] {
        &self.preparations
    }

    /// `g[i][j] = Tr(prep_i · eff_j)`.
    pub fn g(&self) -> &RMatrix {
        &self.g
    }

    pub fn g_inv(&self) -> &RMatrix {
        &self.g_inv
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// The family expressed in new fiducials: old = E·new for effects and
    /// old = P·new for preparations.
    pub fn transformed(&self, t: &FiducialTransform) -> Result<Self> {
        let mix = |m: &RMatrix, ops: &[CMatrix]| -> Vec<CMatrix> {
            (0..ops.len())
                .map(|r| ops.iter().enumerate().fold(CMatrix::zeros(ops[0].nrows(), ops[0].ncols()), |acc, (c, op)| acc + op * C64::new(m[(r, c)], 0.0)))
                .collect()
        };
        let effects = mix(&t.e_inv, &self.effects);
        let preparations = mix(&t.p_inv, &self.preparations);
        let names = self.names.iter().map(|n| format!("{n}'")).collect();
        Self::from_parts(self.system.clone(), names, preparations, effects)
    }
}

/// The canonical family for dimension `n`, on a type named `d{n}`.
pub fn fiducial_family(n: usize) -> Result<FiducialFamily> {
    FiducialFamily::canonical(&SystemType::new(format!("d{n}"), n)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Color {
    Black,
    White,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Leg {
    pub ty: SystemType,
    pub direction: Direction,
    pub color: Color,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Duotensor {
    legs: Vec<Leg>,
    /// Row-major over legs, `K = N²` entries per leg.
    coeffs: Vec<f64>,
}

/// `out[.., r, ..] = Σ_k m[r][k] · data[.., k, ..]` along `axis`.
fn mode_product<T>(data: &[T], shape: &[usize], axis: usize, m: &[T], rows: usize) -> Vec<T>
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<Output = T>,
{
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![T::default(); outer * rows * inner];
    for o in 0..outer {
        for r in 0..rows {
            for k in 0..n {
                let w = m[r * n + k];
                let src = (o * n + k) * inner;
                let dst = (o * rows + r) * inner;
                for i in 0..inner {
                    out[dst + i] = out[dst + i] + w * data[src + i];
                }
            }
        }
    }
    out
}

fn row_major(m: &RMatrix) -> Vec<f64> {
    (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect()
}

fn family_for<'a>(families: &'a [FiducialFamily], ty: &SystemType) -> Result<&'a FiducialFamily> {
    families.iter().find(|f| f.system() == ty).ok_or_else(|| Error::UnknownLabel(ty.to_string()))
}

/// Matrix applied along a leg to change its colour.
fn recolor_matrix(family: &FiducialFamily, direction: Direction, to: Color) -> RMatrix {
    match (direction, to) {
        (Direction::Input, Color::Black) => family.g.clone(),
        (Direction::Output, Color::Black) => family.g.transpose(),
        (Direction::Input, Color::White) => family.g_inv.clone(),
        (Direction::Output, Color::White) => family.g_inv.transpose(),
    }
}

impl Duotensor {
    pub fn new(legs: Vec<Leg>, coeffs: Vec<f64>) -> Result<Self> {
        let size: usize = legs.iter().map(|l| l.ty.dim() * l.ty.dim()).product();
        if coeffs.len() != size {
            return Err(Error::DimMismatch { expected: size, got: coeffs.len() });
        }
        Ok(Duotensor { legs, coeffs })
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn shape(&self) -> Vec<usize> {
        self.legs.iter().map(|l| l.ty.dim() * l.ty.dim()).collect()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        let shape = self.shape();
        let flat = index.iter().zip(&shape).fold(0, |acc, (i, k)| acc * k + i);
        self.coeffs[flat]
    }

    /// The coefficients of a two-leg duotensor as a matrix.
    pub fn as_matrix(&self) -> Option<RMatrix> {
        match self.shape().as_slice() {
            [r, c] => Some(RMatrix::from_row_slice(*r, *c, &self.coeffs)),
            _ => None,
        }
    }

    pub fn max_deviation(&self, other: &Duotensor) -> f64 {
        if self.legs != other.legs {
            return f64::INFINITY;
        }
        self.coeffs.iter().zip(&other.coeffs).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    fn apply(&self, leg: usize, m: &RMatrix) -> Vec<f64> {
        mode_product(&self.coeffs, &self.shape(), leg, &row_major(m), m.nrows())
    }
}

/// Changes the colour of one leg using the hopping metric or its inverse.
pub fn recolor(d: &Duotensor, leg: usize, color: Color, families: &[FiducialFamily]) -> Result<Duotensor> {
    let l = d.legs.get(leg).ok_or(Error::NoSuchLeg(leg))?;
    if l.color == color {
        return Ok(d.clone());
    }
    let family = family_for(families, &l.ty)?;
    let coeffs = d.apply(leg, &recolor_matrix(family, l.direction, color));
    let mut legs = d.legs.clone();
    legs[leg].color = color;
    Ok(Duotensor { legs, coeffs })
}

pub fn recolor_all(d: &Duotensor, colors: &[Color], families: &[FiducialFamily]) -> Result<Duotensor> {
    if colors.len() != d.legs.len() {
        return Err(Error::NoSuchLeg(colors.len()));
    }
    colors.iter().enumerate().try_fold(d.clone(), |acc, (k, &c)| recolor(&acc, k, c, families))
}

/// Legs follow the fragment's ports, inputs first. `colors` has one entry
/// per leg.
pub fn operator_to_duotensor(f: &OperatorFragment, families: &[FiducialFamily], colors: &[Color]) -> Result<Duotensor> {
    let ports: Vec<(&SystemType, Direction)> = f
        .inputs()
        .iter()
        .map(|p| (&p.ty, Direction::Input))
        .chain(f.outputs().iter().map(|p| (&p.ty, Direction::Output)))
        .collect();
    if colors.len() != ports.len() {
        return Err(Error::NoSuchLeg(colors.len()));
    }
    let dims: Vec<usize> = ports.iter().map(|(t, _)| t.dim()).collect();
    let mut data = split_legs(f.matrix(), &dims);
    let mut shape: Vec<usize> = dims.iter().map(|d| d * d).collect();
    let mut legs = Vec::with_capacity(ports.len());
    for (axis, (ty, dir)) in ports.iter().enumerate() {
        let family = family_for(families, ty)?;
        // black value on an input: Tr(op · prep_k); on an output: Tr(op · eff_k)
        let caps = match dir {
            Direction::Input => family.preparations(),
            Direction::Output => family.effects(),
        };
        let n = ty.dim();
        let fmat: Vec<C64> = caps.iter().flat_map(|x| (0..n * n).map(move |rc| x[(rc % n, rc / n)])).collect();
        data = mode_product(&data, &shape, axis, &fmat, caps.len());
        shape[axis] = caps.len();
        legs.push(Leg { ty: (*ty).clone(), direction: *dir, color: Color::Black });
    }
    let worst = data.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    if worst > IMAG_TOL {
        return Err(Error::ImaginaryResidue(worst));
    }
    let black = Duotensor { legs, coeffs: data.into_iter().map(|z| z.re).collect() };
    recolor_all(&black, colors, families)
}

/// Rebuilds the operator (ports `in1.., out1..`) from any colour form.
pub fn duotensor_to_operator(d: &Duotensor, families: &[FiducialFamily]) -> Result<OperatorFragment> {
    let white = recolor_all(d, &vec![Color::White; d.legs.len()], families)?;
    let dims: Vec<usize> = d.legs.iter().map(|l| l.ty.dim()).collect();
    let mut data: Vec<C64> = white.coeffs.iter().map(|&x| C64::new(x, 0.0)).collect();
    let mut shape = white.shape();
    for (axis, leg) in d.legs.iter().enumerate() {
        let family = family_for(families, &leg.ty)?;
        let basis = match leg.direction {
            Direction::Input => family.effects(),
            Direction::Output => family.preparations(),
        };
        let n = leg.ty.dim();
        let k = basis.len();
        // G[(r,c)][k] = X_k[r][c]
        let gmat: Vec<C64> = (0..n * n).flat_map(|rc| basis.iter().map(move |x| x[(rc / n, rc % n)])).collect();
        data = mode_product(&data, &shape, axis, &gmat, n * n);
        shape[axis] = n * n;
        debug_assert_eq!(k, n * n);
    }
    let mat = join_legs(&data, &dims);
    let ins: Vec<SystemType> = d.legs.iter().filter(|l| l.direction == Direction::Input).map(|l| l.ty.clone()).collect();
    let outs: Vec<SystemType> = d.legs.iter().filter(|l| l.direction == Direction::Output).map(|l| l.ty.clone()).collect();
    if d.legs.iter().skip(ins.len()).any(|l| l.direction == Direction::Input) {
        return Err(Error::PortDirection("duotensor legs must list inputs before outputs".into()));
    }
    OperatorFragment::with_types(&ins, &outs, mat)
}

/// Operator entries regrouped as one `(row, col)` axis per factor.
fn split_legs(m: &CMatrix, dims: &[usize]) -> Vec<C64> {
    let total: usize = dims.iter().map(|d| d * d).product();
    let mut out = vec![C64::new(0.0, 0.0); total];
    let n = m.nrows();
    for r in 0..n {
        for c in 0..n {
            out[leg_index(r, c, dims)] = m[(r, c)];
        }
    }
    out
}

fn join_legs(data: &[C64], dims: &[usize]) -> CMatrix {
    let n: usize = dims.iter().product();
    CMatrix::from_fn(n, n, |r, c| data[leg_index(r, c, dims)])
}

fn leg_index(r: usize, c: usize, dims: &[usize]) -> usize {
    let mut flat = 0;
    let (mut rr, mut cc) = (r, c);
    let mut digits = vec![(0, 0); dims.len()];
    for (k, &d) in dims.iter().enumerate().rev() {
        digits[k] = (rr % d, cc % d);
        rr /= d;
        cc /= d;
    }
    for (k, &d) in dims.iter().enumerate() {
        flat = flat * d * d + digits[k].0 * d + digits[k].1;
    }
    flat
}

/// Joins legs of `a` to legs of `b`; each pair links an output to an input
/// and a black leg to a white one. Remaining legs: those of `a`, then `b`.
pub fn contract_duotensors(a: &Duotensor, b: &Duotensor, pairs: &[(usize, usize)]) -> Result<Duotensor> {
    for &(i, j) in pairs {
        let la = a.legs.get(i).ok_or(Error::NoSuchLeg(i))?;
        let lb = b.legs.get(j).ok_or(Error::NoSuchLeg(j))?;
        if la.color == lb.color {
            return Err(Error::ColorMismatch(i, j));
        }
        if la.direction == lb.direction {
            return Err(Error::PortDirection(format!("legs {i} and {j} have the same direction")));
        }
        if la.ty != lb.ty {
            return Err(Error::TypeMismatch { label: format!("legs {i}/{j}"), left: la.ty.to_string(), right: lb.ty.to_string() });
        }
    }
    let (sa, sb) = (a.shape(), b.shape());
    let a_keep: Vec<usize> = (0..sa.len()).filter(|k| !pairs.iter().any(|p| p.0 == *k)).collect();
    let b_keep: Vec<usize> = (0..sb.len()).filter(|k| !pairs.iter().any(|p| p.1 == *k)).collect();
    // A as matrix [kept_a, summed], B as [summed, kept_b] in pair order
    let a_order: Vec<usize> = a_keep.iter().copied().chain(pairs.iter().map(|p| p.0)).collect();
    let b_order: Vec<usize> = pairs.iter().map(|p| p.1).chain(b_keep.iter().copied()).collect();
    let ap = permute_axes(&a.coeffs, &sa, &a_order);
    let bp = permute_axes(&b.coeffs, &sb, &b_order);
    let rows: usize = a_keep.iter().map(|&k| sa[k]).product();
    let inner: usize = pairs.iter().map(|p| sa[p.0]).product();
    let cols: usize = b_keep.iter().map(|&k| sb[k]).product();
    let am = RMatrix::from_row_slice(rows, inner, &ap);
    let bm = RMatrix::from_row_slice(inner, cols, &bp);
    let prod = am * bm;
    let legs: Vec<Leg> = a_keep.iter().map(|&k| a.legs[k].clone()).chain(b_keep.iter().map(|&k| b.legs[k].clone())).collect();
    Ok(Duotensor { legs, coeffs: row_major(&prod) })
}

fn permute_axes(data: &[f64], shape: &[usize], order: &[usize]) -> Vec<f64> {
    let new_shape: Vec<usize> = order.iter().map(|&k| shape[k]).collect();
    let mut strides = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; shape.len()];
    for _ in 0..total {
        out.push(data[digits.iter().zip(order).map(|(d, &k)| d * strides[k]).sum::<usize>()]);
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < new_shape[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    out
}

/// Circuit value by duotensor contraction in standard form: white inputs,
/// black outputs, nodes absorbed in id order.
pub fn eval_circuit_duotensor(graph: &WireGraph, families: &[FiducialFamily]) -> Result<f64> {
    // leg tags: (node, is_output, port)
    let mut acc = Duotensor { legs: vec![], coeffs: vec![1.0] };
    let mut tags: Vec<(String, bool, usize)> = Vec::new();
    for node in graph.nodes() {
        let op = node.operator_payload().ok_or_else(|| Error::MissingPayload(node.id.clone()))?;
        let colors: Vec<Color> = node
            .inputs
            .iter()
            .map(|_| Color::White)
            .chain(node.outputs.iter().map(|_| Color::Black))
            .collect();
        let d = operator_to_duotensor(op, families, &colors)?;
        let node_tags: Vec<(String, bool, usize)> = (1..=node.inputs.len())
            .map(|k| (node.id.clone(), false, k))
            .chain((1..=node.outputs.len()).map(|k| (node.id.clone(), true, k)))
            .collect();
        let mut pairs = Vec::new();
        for w in graph.wires() {
            let from = (w.from.node.clone(), true, w.from.port);
            let to = (w.to.node.clone(), false, w.to.port);
            if let (Some(i), Some(j)) = (tags.iter().position(|t| *t == from), node_tags.iter().position(|t| *t == to)) {
                pairs.push((i, j));
            }
            if let (Some(i), Some(j)) = (tags.iter().position(|t| *t == to), node_tags.iter().position(|t| *t == from)) {
                pairs.push((i, j));
            }
        }
        acc = contract_duotensors(&acc, &d, &pairs)?;
        let keep_a: Vec<_> = tags.iter().enumerate().filter(|(k, _)| !pairs.iter().any(|p| p.0 == *k)).map(|(_, t)| t.clone()).collect();
        let keep_b: Vec<_> = node_tags.iter().enumerate().filter(|(k, _)| !pairs.iter().any(|p| p.1 == *k)).map(|(_, t)| t.clone()).collect();
        tags = keep_a.into_iter().chain(keep_b).collect();
    }
    if !acc.legs.is_empty() {
        return Err(Error::OpenPorts(format!("{} legs", acc.legs.len())));
    }
    Ok(acc.coeffs[0])
}

/// A change of fiducials for one type: old effects `= E ·` new effects,
/// old preparations `= P ·` new preparations (row index old, column new).
#[derive(Clone, Debug)]
pub struct FiducialTransform {
    system: SystemType,
    e: RMatrix,
    p: RMatrix,
    e_inv: RMatrix,
    p_inv: RMatrix,
}

impl FiducialTransform {
    pub fn new(system: SystemType, e: RMatrix, p: RMatrix) -> Result<Self> {
        let k = system.dim() * system.dim();
        for m in [&e, &p] {
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::DimMismatch { expected: k, got: m.nrows() });
            }
        }
        let invert = |m: &RMatrix| -> Result<RMatrix> {
            if condition_number(m) > MAX_CONDITION {
                return Err(Error::SingularTransform);
            }
            m.clone().lu().try_inverse().ok_or(Error::SingularTransform)
        };
        let e_inv = invert(&e)?;
        let p_inv = invert(&p)?;
        Ok(FiducialTransform { system, e, p, e_inv, p_inv })
    }

    pub fn identity(system: SystemType) -> Self {
        let k = system.dim() * system.dim();
        let i = RMatrix::identity(k, k);
        FiducialTransform { system, e: i.clone(), p: i.clone(), e_inv: i.clone(), p_inv: i }
    }

    pub fn inverse(&self) -> Self {
        FiducialTransform {
            system: self.system.clone(),
            e: self.e_inv.clone(),
            p: self.p_inv.clone(),
            e_inv: self.e.clone(),
            p_inv: self.p.clone(),
        }
    }

    pub fn system(&self) -> &SystemType {
        &self.system
    }

    pub fn e(&self) -> &RMatrix {
        &self.e
    }

    pub fn p(&self) -> &RMatrix {
        &self.p
    }
}

/// Re-expresses `d` in the transformed fiducials. White inputs take `Eᵀ`,
/// black outputs `E⁻¹`, black inputs `P⁻¹`, white outputs `Pᵀ`.
pub fn change_fiducials(d: &Duotensor, t: &FiducialTransform) -> Result<Duotensor> {
    let mut out = d.clone();
    for (k, leg) in d.legs.iter().enumerate() {
        if leg.ty != t.system {
            continue;
        }
        let m = match (leg.direction, leg.color) {
            (Direction::Input, Color::White) => t.e.transpose(),
            (Direction::Output, Color::Black) => t.e_inv.clone(),
            (Direction::Input, Color::Black) => t.p_inv.clone(),
            (Direction::Output, Color::White) => t.p.transpose(),
        };
        out.coeffs = out.apply(k, &m);
    }
    Ok(out)
}

/// Per-type families for every type used by a set of fragments.
pub fn canonical_families<'a>(types: impl IntoIterator<Item = &'a SystemType>) -> Result<Vec<FiducialFamily>> {
    let mut seen: BTreeMap<SystemType, FiducialFamily> = BTreeMap::new();
    for t in types {
        if !seen.contains_key(t) {
            seen.insert(t.clone(), FiducialFamily::canonical(t)?);
        }
    }
    Ok(seen.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragment::{contract, OperatorFragment};
    use crate::linalg::max_abs;

    fn q() -> SystemType {
        SystemType::qubit()
    }

    #[test]
    fn n1_family_is_trivial() {
        let f = fiducial_family(1).unwrap();
        assert_eq!(f.size(), 1);
        assert_eq!(f.g()[(0, 0)], 1.0);
    }

    #[test]
    fn n2_metric_from_direct_traces() {
        let f = fiducial_family(2).unwrap();
        let h = 0.5;
        let expect = RMatrix::from_row_slice(4, 4, &[1.0, 0.0, h, h, 0.0, 1.0, h, h, h, h, 1.0, h, h, h, h, 1.0]);
        assert!((f.g() - expect).abs().max() < 1e-12);
        assert_eq!(f.names(), ["1", "2", "12x", "12y"]);
    }

    #[test]
    fn n3_ordering() {
        let f = fiducial_family(3).unwrap();
        assert_eq!(f.names(), ["1", "2", "3", "12x", "12y", "13x", "13y", "23x", "23y"]);
    }

    #[test]
    fn metric_entries_lie_in_unit_interval() {
        for n in 1..=5 {
            let f = fiducial_family(n).unwrap();
            assert!(f.g().iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
            assert!(f.condition_number() < 1e3, "N={n} condition {}", f.condition_number());
        }
    }

    #[test]
    fn identity_channel_black_form_is_metric() {
        let fam = vec![FiducialFamily::canonical(&q()).unwrap()];
        let id = OperatorFragment::identity_channel(&q());
        let black = operator_to_duotensor(&id, &fam, &[Color::Black, Color::Black]).unwrap();
        assert!((black.as_matrix().unwrap() - fam[0].g()).abs().max() < 1e-12);
        let white = operator_to_duotensor(&id, &fam, &[Color::White, Color::White]).unwrap();
        assert!((white.as_matrix().unwrap() - fam[0].g_inv()).abs().max() < 1e-10);
        let mixed = recolor(&white, 1, Color::Black, &fam).unwrap();
        assert!((mixed.as_matrix().unwrap() - RMatrix::identity(4, 4)).abs().max() < 1e-11);
    }

    #[test]
    fn zero_prep_probabilities() {
        let fam = vec![FiducialFamily::canonical(&q()).unwrap()];
        let mut rho = CMatrix::zeros(2, 2);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let p = OperatorFragment::preparation(&q(), rho).unwrap();
        let black = operator_to_duotensor(&p, &fam, &[Color::Black]).unwrap();
        let expect = [1.0, 0.0, 0.5, 0.5];
        for (a, b) in black.coeffs().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_operator_is_zero_in_every_form() {
        let fam = vec![FiducialFamily::canonical(&q()).unwrap()];
        let z = OperatorFragment::with_types(&[q()], &[q()], CMatrix::zeros(4, 4)).unwrap();
        for colors in [[Color::White, Color::White], [Color::Black, Color::White], [Color::Black, Color::Black]] {
            let d = operator_to_duotensor(&z, &fam, &colors).unwrap();
            assert!(d.coeffs().iter().all(|&x| x.abs() < 1e-15));
        }
    }

    #[test]
    fn unit_white_coefficient_is_first_fiducial() {
        let fam = vec![FiducialFamily::canonical(&q()).unwrap()];
        let leg = Leg { ty: q(), direction: Direction::Output, color: Color::White };
        let d = Duotensor::new(vec![leg], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let f = duotensor_to_operator(&d, &fam).unwrap();
        assert!(max_abs(&(f.matrix() - &fam[0].preparations()[0])) < 1e-15);
    }

    #[test]
    fn black_against_white_contraction_is_trace() {
        let fam = vec![FiducialFamily::canonical(&q()).unwrap()];
        let rho = CMatrix::from_row_slice(2, 2, &[C64::new(0.7, 0.0), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::new(0.3, 0.0)]);
        let e = CMatrix::from_row_slice(2, 2, &[C64::new(0.4, 0.0), C64::new(0.0, 0.3), C64::new(0.0, -0.3), C64::new(0.9, 0.0)]);
        let p = OperatorFragment::preparation(&q(), rho).unwrap();
        let r = OperatorFragment::effect(&q(), e).unwrap();
        let direct = contract(&p, &r, &[("out1".into(), "in1".into())]).unwrap().value().unwrap();
        for (cp, cr) in [(Color::White, Color::Black), (Color::Black, Color::White)] {
            let dp = operator_to_duotensor(&p, &fam, &[cp]).unwrap();
            let dr = operator_to_duotensor(&r, &fam, &[cr]).unwrap();
            let v = contract_duotensors(&dp, &dr, &[(0, 0)]).unwrap();
            assert!((v.coeffs()[0] - direct).abs() < 1e-12);
        }
        let dp = operator_to_duotensor(&p, &fam, &[Color::White]).unwrap();
        let dr = operator_to_duotensor(&r, &fam, &[Color::White]).unwrap();
        assert!(matches!(contract_duotensors(&dp, &dr, &[(0, 0)]), Err(Error::ColorMismatch(0, 0))));
    }

    #[test]
    fn singular_transform_is_refused() {
        let z = RMatrix::zeros(4, 4);
        assert!(matches!(FiducialTransform::new(q(), z.clone(), RMatrix::identity(4, 4)), Err(Error::SingularTransform)));
    }

    #[test]
    fn identity_transform_is_noop() {
        let fam = vec![FiducialFamily::canonical(&q()).unwrap()];
        let id = OperatorFragment::identity_channel(&q());
        let d = operator_to_duotensor(&id, &fam, &[Color::White, Color::Black]).unwrap();
        let t = FiducialTransform::identity(q());
        assert_eq!(change_fiducials(&d, &t).unwrap(), d);
    }

    #[test]
    fn missing_leg_is_reported() {
        let fam = vec![FiducialFamily::canonical(&q()).unwrap()];
        let leg = Leg { ty: q(), direction: Direction::Output, color: Color::White };
        let d = Duotensor::new(vec![leg], vec![0.0; 4]).unwrap();
        assert!(matches!(recolor(&d, 3, Color::Black, &fam), Err(Error::NoSuchLeg(3))));
    }
}
