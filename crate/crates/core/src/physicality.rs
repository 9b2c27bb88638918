//! Physicality and complete-set predicates, deterministic effects,
//! probability ratios, and seeded samplers of physical operators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::circuit::SystemType;
use crate::error::{Error, Result};
use crate::fragment::{contract, input_transpose, operator_from_kraus, reverse_apply, OperatorFragment, Port};
use crate::linalg::{eigh_matrix, max_abs, min_eigenvalue, psd_tolerance, CMatrix, DenseHermitian, Label, LabeledSpace, C64, PSD_TOL};

/// Default relative tolerance of [`probability_ratio`].
pub const RATIO_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalityReport {
    pub min_choi_eigenvalue: f64,
    /// Smallest eigenvalue of `I_in − Tr_out f`.
    pub trace_condition_slack: f64,
    pub verdict: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioVerdict {
    pub well_conditioned: bool,
    pub ratio: Option<f64>,
}

fn input_identity(f: &OperatorFragment) -> Result<DenseHermitian> {
    Ok(DenseHermitian::identity(LabeledSpace::new(f.inputs().iter().map(|p| (p.label.clone(), p.ty.dim())))?))
}

fn output_identity(f: &OperatorFragment) -> Result<DenseHermitian> {
    Ok(DenseHermitian::identity(LabeledSpace::new(f.outputs().iter().map(|p| (p.label.clone(), p.ty.dim())))?))
}

/// `Tr_out f`, the operator the fragment induces on its inputs.
pub fn output_traced(f: &OperatorFragment) -> Result<DenseHermitian> {
    reverse_apply(f, &output_identity(f)?)
}

pub fn is_physical(f: &OperatorFragment) -> Result<PhysicalityReport> {
    let choi = input_transpose(f);
    let min_choi = min_eigenvalue(choi.op())?;
    let traced = output_traced(f)?;
    let slack_op = input_identity(f)?.sub(&traced)?;
    let slack = min_eigenvalue(&slack_op)?;
    let verdict = min_choi >= -psd_tolerance(choi.op()) && slack >= -psd_tolerance(&slack_op);
    Ok(PhysicalityReport { min_choi_eigenvalue: min_choi, trace_condition_slack: slack, verdict })
}

/// Every member has a PSD input transpose and the output-traced members
/// sum to the input identity.
pub fn is_complete_set(fs: &[OperatorFragment]) -> Result<bool> {
    let first = fs.first().ok_or(Error::EmptySet)?;
    let structure = first.port_types();
    let mut total = CMatrix::zeros(first.input_dim(), first.input_dim());
    for f in fs {
        if f.port_types() != structure {
            return Err(Error::StructureMismatch);
        }
        let choi = input_transpose(f);
        if min_eigenvalue(choi.op())? < -psd_tolerance(choi.op()) {
            return Ok(false);
        }
        total += output_traced(f)?.matrix();
    }
    let n = total.nrows();
    Ok(max_abs(&(total - CMatrix::identity(n, n))) <= PSD_TOL)
}

/// The result with operator `I_N`: "something happened".
pub fn deterministic_effect(t: &SystemType) -> OperatorFragment {
    OperatorFragment::effect(t, CMatrix::identity(t.dim(), t.dim())).expect("identity is Hermitian")
}

/// `a ≈ k·b` with `k = ⟨b,a⟩/⟨b,b⟩` in the Frobenius pairing.
pub fn probability_ratio(a: &OperatorFragment, b: &OperatorFragment, rel_tol: f64) -> Result<RatioVerdict> {
    if a.port_types() != b.port_types() {
        return Err(Error::StructureMismatch);
    }
    let (am, bm) = (a.matrix(), b.matrix());
    let bb = bm.norm_squared();
    if bb.sqrt() <= 1e-300 || bb.sqrt() <= f64::EPSILON * am.norm() * 1e-6 {
        return Err(Error::ZeroDenominator);
    }
    let ba: C64 = bm.iter().zip(am.iter()).map(|(x, y)| x.conj() * y).sum();
    let k = ba.re / bb;
    let residual = (am - bm * C64::new(k, 0.0)).norm();
    let well = residual <= rel_tol * am.norm();
    Ok(RatioVerdict { well_conditioned: well, ratio: well.then_some(k) })
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

fn dims(types: &[SystemType]) -> usize {
    types.iter().map(|t| t.dim()).product()
}

/// Random Kraus operators with `Σ E†E ≤ I`, largest eigenvalue exactly one.
pub fn sample_kraus(ins: &[SystemType], outs: &[SystemType], rank: usize, seed: u64) -> Result<Vec<CMatrix>> {
    let (din, dout) = (dims(ins), dims(outs));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ks: Vec<CMatrix> = (0..rank.max(1)).map(|_| gaussian_matrix(&mut rng, dout, din)).collect();
    let s = ks.iter().fold(CMatrix::zeros(din, din), |acc, e| acc + e.adjoint() * e);
    let (vals, _) = eigh_matrix(&s)?;
    let top = vals.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let scale = C64::new(1.0 / top.sqrt(), 0.0);
    for e in &mut ks {
        *e *= scale;
    }
    Ok(ks)
}

/// Default Kraus count of the samplers: below `d_in·d_out`, so the Choi
/// form is rank deficient.
pub fn default_rank(ins: &[SystemType], outs: &[SystemType]) -> usize {
    ((dims(ins) * dims(outs)) / 2).max(1)
}

/// A random physical (CP, trace non-increasing) fragment.
pub fn sample_physical(ins: &[SystemType], outs: &[SystemType], seed: u64) -> Result<OperatorFragment> {
    let ks = sample_kraus(ins, outs, default_rank(ins, outs), seed)?;
    operator_from_kraus(&ks, ins, outs)
}

/// Random Kraus operators with `Σ E†E = I`.
pub fn sample_cptp_kraus(ins: &[SystemType], outs: &[SystemType], rank: usize, seed: u64) -> Result<Vec<CMatrix>> {
    let (din, dout) = (dims(ins), dims(outs));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ks: Vec<CMatrix> = (0..rank.max(1)).map(|_| gaussian_matrix(&mut rng, dout, din)).collect();
    let s = ks.iter().fold(CMatrix::zeros(din, din), |acc, e| acc + e.adjoint() * e);
    let (vals, vecs) = eigh_matrix(&s)?;
    if vals.first().is_none_or(|&v| v <= 1e-12) {
        return Err(Error::NotComplete);
    }
    let inv_sqrt = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(din, vals.iter().map(|v| C64::new(1.0 / v.sqrt(), 0.0))));
    let s_inv_half = &vecs * inv_sqrt * vecs.adjoint();
    Ok(ks.into_iter().map(|e| e * &s_inv_half).collect())
}

pub fn sample_cptp(ins: &[SystemType], outs: &[SystemType], seed: u64) -> Result<OperatorFragment> {
    let rank = default_rank(ins, outs).max(din_over_dout(ins, outs));
    operator_from_kraus(&sample_cptp_kraus(ins, outs, rank, seed)?, ins, outs)
}

fn din_over_dout(ins: &[SystemType], outs: &[SystemType]) -> usize {
    dims(ins).div_ceil(dims(outs))
}

/// A random complete set of `l` fragments: the Kraus terms of one random
/// trace-preserving map, dealt round-robin into `l` groups.
pub fn sample_complete_set(ins: &[SystemType], outs: &[SystemType], l: usize, seed: u64) -> Result<Vec<OperatorFragment>> {
    let l = l.max(1);
    let rank = (2 * l).max(din_over_dout(ins, outs));
    let ks = sample_cptp_kraus(ins, outs, rank, seed)?;
    (0..l)
        .map(|g| {
            let group: Vec<CMatrix> = ks.iter().skip(g).step_by(l).cloned().collect();
            operator_from_kraus(&group, ins, outs)
        })
        .collect()
}

/// A random normalised vector.
pub fn random_unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v = gaussian_matrix(rng, n, 1);
    let norm = v.norm();
    v.iter().map(|z| z / norm).collect()
}

/// A random density matrix of the given rank.
pub fn random_state(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMatrix {
    let a = gaussian_matrix(rng, n, rank.max(1));
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

/// A random Hermitian matrix with standard-normal entries.
pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let a = gaussian_matrix(rng, n, n);
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Smallest circuit value of `A · f · C` over random rank-one projectors
/// `A` on inputs ⊗ ancilla and `C` on outputs ⊗ ancilla.
pub fn projector_probe(f: &OperatorFragment, anc_dim: usize, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anc = SystemType::new("ancilla", anc_dim)?;
    let anc_port = Port::new(Label::new("§anc"), anc.clone());
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let a_outs: Vec<Port> = f.inputs().iter().cloned().chain([anc_port.clone()]).collect();
        let c_ins: Vec<Port> = f.outputs().iter().cloned().chain([anc_port.clone()]).collect();
        let va = random_unit_vector(&mut rng, f.input_dim() * anc_dim);
        let vc = random_unit_vector(&mut rng, f.output_dim() * anc_dim);
        let pa = CMatrix::from_fn(va.len(), va.len(), |i, j| va[i] * va[j].conj());
        let pc = CMatrix::from_fn(vc.len(), vc.len(), |i, j| vc[i] * vc[j].conj());
        let a = OperatorFragment::new(vec![], a_outs, pa)?;
        let c = OperatorFragment::new(c_ins, vec![], pc)?;
        let ins: Vec<(Label, Label)> = f.inputs().iter().map(|p| (p.label.clone(), p.label.clone())).collect();
        let af = contract(&a, f, &ins)?;
        let outs: Vec<(Label, Label)> =
            f.outputs().iter().chain([&anc_port]).map(|p| (p.label.clone(), p.label.clone())).collect();
        worst = worst.min(contract(&af, &c, &outs)?.value()?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> SystemType {
        SystemType::qubit()
    }

    fn ket_bra(i: usize, j: usize) -> CMatrix {
        let mut m = CMatrix::zeros(2, 2);
        m[(i, j)] = C64::new(1.0, 0.0);
        m
    }

    #[test]
    fn identity_channel_is_physical_with_zero_slack() {
        let r = is_physical(&OperatorFragment::identity_channel(&q())).unwrap();
        assert!(r.verdict);
        assert!(r.trace_condition_slack.abs() < 1e-12);
    }

    #[test]
    fn doubled_identity_violates_trace_condition() {
        let r = is_physical(&OperatorFragment::identity_channel(&q()).scale(2.0)).unwrap();
        assert!(!r.verdict);
        assert!((r.trace_condition_slack + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampler_is_physical_and_deterministic() {
        for seed in 0..20 {
            let f = sample_physical(&[q()], &[q()], seed).unwrap();
            assert!(is_physical(&f).unwrap().verdict);
            assert_eq!(f, sample_physical(&[q()], &[q()], seed).unwrap());
        }
    }

    #[test]
    fn pvm_is_complete() {
        let e0 = OperatorFragment::effect(&q(), ket_bra(0, 0)).unwrap();
        let e1 = OperatorFragment::effect(&q(), ket_bra(1, 1)).unwrap();
        assert!(is_complete_set(&[e0.clone(), e1]).unwrap());
        assert!(!is_complete_set(std::slice::from_ref(&e0)).unwrap());
        assert!(is_complete_set(&[OperatorFragment::identity_channel(&q())]).unwrap());
        assert!(matches!(is_complete_set(&[e0, OperatorFragment::identity_channel(&q())]), Err(Error::StructureMismatch)));
        assert!(matches!(is_complete_set(&[]), Err(Error::EmptySet)));
    }

    #[test]
    fn kraus_split_is_complete() {
        for seed in 0..5 {
            let set = sample_complete_set(&[q()], &[q()], 3, seed).unwrap();
            assert_eq!(set.len(), 3);
            assert!(is_complete_set(&set).unwrap());
        }
    }

    #[test]
    fn deterministic_effect_closes_to_trace() {
        let t = deterministic_effect(&q());
        assert_eq!(t.matrix(), &CMatrix::identity(2, 2));
        let rho = OperatorFragment::preparation(&q(), ket_bra(0, 0) * C64::new(0.3, 0.0)).unwrap();
        let v = contract(&rho, &t, &[("out1".into(), "in1".into())]).unwrap().value().unwrap();
        assert!((v - 0.3).abs() < 1e-15);
    }

    #[test]
    fn ratio_cases() {
        let f = sample_physical(&[q()], &[q()], 7).unwrap();
        let r = probability_ratio(&f.scale(3.0), &f, RATIO_TOL).unwrap();
        assert!(r.well_conditioned);
        assert!((r.ratio.unwrap() - 3.0).abs() < 1e-12);
        assert!((probability_ratio(&f, &f, RATIO_TOL).unwrap().ratio.unwrap() - 1.0).abs() < 1e-12);
        let a = OperatorFragment::preparation(&q(), ket_bra(0, 0)).unwrap();
        let b = OperatorFragment::preparation(&q(), ket_bra(1, 1)).unwrap();
        assert!(!probability_ratio(&a, &b, RATIO_TOL).unwrap().well_conditioned);
        assert!(matches!(probability_ratio(&a, &b.scale(0.0), RATIO_TOL), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn probe_is_nonnegative_on_physical() {
        let f = sample_physical(&[q()], &[q()], 3).unwrap();
        assert!(projector_probe(&f, 2, 50, 1).unwrap() >= -1e-9);
    }

    #[test]
    fn probe_catches_transpose_map() {
        // the transpose map: its input transpose is SWAP, not PSD
        let swap = OperatorFragment::identity_channel(&q());
        let tmap = OperatorFragment::with_types(&[q()], &[q()], input_transpose(&swap).matrix().clone()).unwrap();
        assert!(!is_physical(&tmap).unwrap().verdict);
        assert!(projector_probe(&tmap, 2, 200, 5).unwrap() < -1e-3);
    }
}
