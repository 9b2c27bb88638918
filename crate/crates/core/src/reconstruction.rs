//! Numeric witnesses for reconstruction-side claims: span dimensions and
//! non-flatness, filter non-flattening, the `K = N^r` monotone
//! multiplicative search, and signature vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::SystemType;
use crate::duotensor::fiducial_vectors;
use crate::error::{Error, Result};
use crate::fragment::apply_channel;
use crate::gadgets::{filter_fragment, gram_schmidt, Subspace};
use crate::linalg::{eigh_matrix, CMatrix, DenseHermitian, LabeledSpace, C64};
use crate::physicality::random_unit_vector;

/// Relative eigenvalue cutoff for support and span ranks.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Filtered states with smaller trace count as blocked.
pub const BLOCKED_TRACE: f64 = 1e-12;
/// Hard cap on the `K(N)` search range.
pub const MAX_RANGE: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpanReport {
    pub input_count: usize,
    /// Dimension of the smallest subspace supporting every state.
    pub support_dim: usize,
    /// Real dimension of the linear span of the states.
    pub span_dim: usize,
    pub nonflat: bool,
}

fn rank_of(m: &CMatrix, scale: f64) -> Result<usize> {
    let (vals, _) = eigh_matrix(m)?;
    let cut = RANK_CUTOFF * scale;
    Ok(vals.iter().filter(|&&v| v > cut).count())
}

pub fn span_report(states: &[DenseHermitian]) -> Result<SpanReport> {
    let first = states.first().ok_or(Error::EmptySet)?;
    let n = first.dim();
    let mut sum = CMatrix::zeros(n, n);
    for s in states {
        if s.dim() != n {
            return Err(Error::DimMismatch { expected: n, got: s.dim() });
        }
        sum += s.matrix();
    }
    let support_dim = rank_of(&sum, sum.trace().re.abs())?;
    let k = states.len();
    let gram = CMatrix::from_fn(k, k, |i, j| C64::new(states[i].hs_inner(&states[j]), 0.0));
    let (gvals, _) = eigh_matrix(&gram)?;
    let top = gvals.last().copied().unwrap_or(0.0).max(0.0);
    let span_dim = gvals.iter().filter(|&&v| v > RANK_CUTOFF * top).count();
    Ok(SpanReport { input_count: k, support_dim, span_dim, nonflat: span_dim == support_dim * support_dim })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterCheck {
    pub before: SpanReport,
    /// `None` when the filter blocks every state.
    pub after: Option<SpanReport>,
    /// `before.nonflat ⇒ after.nonflat`.
    pub verdict: bool,
}

/// Sends every state through the filter onto `s` and compares span reports.
pub fn filter_nonflatten_check(states: &[DenseHermitian], s: &Subspace) -> Result<FilterCheck> {
    let before = span_report(states)?;
    let f = filter_fragment(s);
    let mut passed = Vec::with_capacity(states.len());
    for st in states {
        let out = apply_channel(&f, st)?;
        if out.trace() >= BLOCKED_TRACE {
            passed.push(out);
        }
    }
    let after = if passed.is_empty() { None } else { Some(span_report(&passed)?) };
    let verdict = !before.nonflat || after.is_none_or(|a| a.nonflat);
    Ok(FilterCheck { before, after, verdict })
}

/// Projector onto a named canonical fiducial vector (`"1"`, `"12x"`, ...).
pub fn fiducial_state(n: usize, name: &str) -> Result<DenseHermitian> {
    let (_, v) = fiducial_vectors(n)
        .into_iter()
        .find(|(k, _)| k == name)
        .ok_or_else(|| Error::UnknownLabel(name.to_string()))?;
    DenseHermitian::projector(LabeledSpace::new([("s", n)])?, &v)
}

/// Dimension of the space used by the introductory examples.
pub const PRELUDE_DIM: usize = 4;

/// The introductory sets `A`, `B`, `C` on a 4-level system.
pub fn prelude_set(name: char) -> Result<Vec<DenseHermitian>> {
    let names: &[&str] = match name {
        'A' => &["1", "2", "4", "12x", "12y", "14x", "14y", "24x", "24y"],
        'B' => &["1", "2", "4", "12x", "24y", "14y"],
        'C' => &["1", "2", "12x", "12y"],
        other => return Err(Error::UnknownLabel(other.to_string())),
    };
    names.iter().map(|n| fiducial_state(PRELUDE_DIM, n)).collect()
}

/// Filter `F` onto `span{|1⟩, |2⟩}` and `G` onto `span{|1⟩, |23x⟩}`.
pub fn prelude_filter(name: char) -> Result<Subspace> {
    let parent = SystemType::new("prelude", PRELUDE_DIM)?;
    let vec_of = |n: &str| fiducial_vectors(PRELUDE_DIM).into_iter().find(|(k, _)| k == n).unwrap().1;
    match name {
        'F' => Subspace::new(parent, vec![vec_of("1"), vec_of("2")]),
        'G' => Subspace::new(parent, vec![vec_of("1"), vec_of("23x")]),
        other => Err(Error::UnknownLabel(other.to_string())),
    }
}

fn random_subspace(rng: &mut ChaCha8Rng, parent: &SystemType, k: usize) -> Result<Subspace> {
    loop {
        let vs: Vec<Vec<C64>> = (0..k).map(|_| random_unit_vector(rng, parent.dim())).collect();
        let basis = gram_schmidt(&vs, 1e-6);
        if basis.len() == k {
            return Subspace::new(parent.clone(), basis);
        }
    }
}

/// A random non-flat set: `k² + extra` random pure states inside a random
/// `k`-dimensional subspace.
pub fn random_nonflat_set(rng: &mut ChaCha8Rng, dim: usize) -> Result<Vec<DenseHermitian>> {
    let parent = SystemType::new("p", dim)?;
    let space = LabeledSpace::new([("s", dim)])?;
    loop {
        let k = rng.random_range(1..=dim);
        let sub = random_subspace(rng, &parent, k)?;
        let count = k * k + rng.random_range(0..3);
        let states: Vec<DenseHermitian> = (0..count)
            .map(|_| {
                let c = random_unit_vector(rng, k);
                let v: Vec<C64> = (0..dim).map(|r| (0..k).map(|j| sub.basis()[j][r] * c[j]).sum()).collect();
                DenseHermitian::projector(space.clone(), &v)
            })
            .collect::<Result<_>>()?;
        if span_report(&states)?.nonflat {
            return Ok(states);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteReport {
    pub cases: usize,
    pub passed: usize,
    /// Cases in which the input set was non-flat (all of them, by construction).
    pub nonflat_inputs: usize,
}

/// Random non-flat sets through random filters for each dimension.
pub fn nonflatten_suite(dims: &[usize], sets: usize, filters: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport { cases: 0, passed: 0, nonflat_inputs: 0 };
    for &dim in dims {
        let parent = SystemType::new("p", dim)?;
        for _ in 0..sets {
            let states = random_nonflat_set(&mut rng, dim)?;
            for _ in 0..filters {
                let k = rng.random_range(1..=dim);
                let s = random_subspace(&mut rng, &parent, k)?;
                let check = filter_nonflatten_check(&states, &s)?;
                report.cases += 1;
                report.nonflat_inputs += check.before.nonflat as usize;
                report.passed += check.verdict as usize;
            }
        }
    }
    Ok(report)
}

/// `K(p) = p^r` per prime.
pub type Assignment = Vec<(u64, u32)>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KNReport {
    pub range_n: u64,
    pub max_r: u32,
    pub surviving_functions: Vec<Assignment>,
}

fn primes_up_to(n: u64) -> Vec<u64> {
    let n = n as usize;
    let mut sieve = vec![true; n + 1];
    let mut out = Vec::new();
    for p in 2..=n {
        if sieve[p] {
            out.push(p as u64);
            let mut m = p * p;
            while m <= n {
                sieve[m] = false;
                m += p;
            }
        }
    }
    out
}

/// Factorisations of `1..=n` as (prime index, exponent).
fn factor_table(n: u64, primes: &[u64]) -> Vec<Vec<(usize, u32)>> {
    (0..=n)
        .map(|m| {
            let mut rest = m;
            let mut fs = Vec::new();
            if m < 2 {
                return fs;
            }
            for (i, &p) in primes.iter().enumerate() {
                if p * p > rest {
                    break;
                }
                let mut e = 0;
                while rest % p == 0 {
                    rest /= p;
                    e += 1;
                }
                if e > 0 {
                    fs.push((i, e));
                }
            }
            if rest > 1 {
                fs.push((primes.binary_search(&rest).unwrap(), 1));
            }
            fs
        })
        .collect()
}

/// `K(m) = Π K(p)^e` given per-prime exponents (`r[i]` for `primes[i]`).
fn k_value(m: u64, factors: &[(usize, u32)], primes: &[u64], r: &[u32]) -> Result<u128> {
    let mut k: u128 = 1;
    for &(i, e) in factors {
        let kp = (primes[i] as u128).checked_pow(r[i]).ok_or(Error::Overflow(m))?;
        let pe = kp.checked_pow(e).ok_or(Error::Overflow(m))?;
        k = k.checked_mul(pe).ok_or(Error::Overflow(m))?;
    }
    Ok(k)
}

fn check_range(range_n: u64) -> Result<()> {
    if range_n < 4 {
        return Err(Error::RangeTooSmall(range_n));
    }
    if range_n > MAX_RANGE {
        return Err(Error::RangeTooLarge(range_n));
    }
    Ok(())
}

/// Every assignment `K(p) = p^{r_p}`, `1 ≤ r_p ≤ max_r`, over primes up to
/// `range_n` whose multiplicative extension is strictly increasing on
/// `[1, range_n]`. Depth-first over primes with pruning.
pub fn k_multiplicative_search(range_n: u64, max_r: u32) -> Result<KNReport> {
    check_range(range_n)?;
    let primes = primes_up_to(range_n);
    let factors = factor_table(range_n, &primes);
    // pair (m, m+1) becomes decidable once its largest prime index is assigned
    let mut pairs_at: Vec<Vec<u64>> = vec![Vec::new(); primes.len()];
    for m in 1..range_n {
        let top = factors[m as usize].iter().chain(&factors[m as usize + 1]).map(|f| f.0).max();
        if let Some(t) = top {
            pairs_at[t].push(m);
        }
    }
    let mut survivors = Vec::new();
    let mut r = vec![0u32; primes.len()];
    search(0, max_r, &primes, &factors, &pairs_at, &mut r, &mut survivors)?;
    Ok(KNReport { range_n, max_r, surviving_functions: survivors })
}

fn search(
    depth: usize,
    max_r: u32,
    primes: &[u64],
    factors: &[Vec<(usize, u32)>],
    pairs_at: &[Vec<u64>],
    r: &mut Vec<u32>,
    out: &mut Vec<Assignment>,
) -> Result<()> {
    if depth == primes.len() {
        out.push(primes.iter().copied().zip(r.iter().copied()).collect());
        return Ok(());
    }
    'choice: for rp in 1..=max_r {
        r[depth] = rp;
        for &m in &pairs_at[depth] {
            let a = k_value(m, &factors[m as usize], primes, r)?;
            let b = k_value(m + 1, &factors[m as usize + 1], primes, r)?;
            if b <= a {
                continue 'choice;
            }
        }
        search(depth + 1, max_r, primes, factors, pairs_at, r, out)?;
    }
    r[depth] = 0;
    Ok(())
}

/// First `m ≤ range_n − 1` with `K(m+1) ≤ K(m)`, among consecutive pairs
/// whose prime factors all appear in `assignment`.
pub fn monotonicity_counterexample(range_n: u64, assignment: &[(u64, u32)]) -> Result<Option<u64>> {
    check_range(range_n)?;
    let primes = primes_up_to(range_n);
    let factors = factor_table(range_n, &primes);
    let mut r = vec![0u32; primes.len()];
    let mut known = vec![false; primes.len()];
    for &(p, e) in assignment {
        let i = primes.binary_search(&p).map_err(|_| Error::UnknownLabel(p.to_string()))?;
        r[i] = e;
        known[i] = true;
    }
    for m in 1..range_n {
        let (fa, fb) = (&factors[m as usize], &factors[m as usize + 1]);
        if fa.iter().chain(fb).any(|f| !known[f.0]) {
            continue;
        }
        if k_value(m + 1, fb, &primes, &r)? <= k_value(m, fa, &primes, &r)? {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// Primes up to `n`.
pub fn primes(n: u64) -> Vec<u64> {
    primes_up_to(n)
}

fn binomial(n: u64, k: u64) -> Option<i128> {
    let mut acc: i128 = 1;
    for j in 0..k {
        acc = acc.checked_mul((n - j) as i128)? / (j as i128 + 1);
    }
    Some(acc)
}

/// Solves `N^r = Σ_k x_k · C(N, k)` for `x_1..x_length` by forward
/// substitution at `N = 1..length`.
pub fn signature_vector(r: u32, length: usize) -> Result<Vec<i128>> {
    let mut x: Vec<i128> = Vec::with_capacity(length);
    for n in 1..=length as u64 {
        let target = (n as i128).checked_pow(r).ok_or(Error::Overflow(n))?;
        let mut acc = target;
        for (k, xk) in x.iter().enumerate() {
            let c = binomial(n, k as u64 + 1).ok_or(Error::Overflow(n))?;
            acc = acc.checked_sub(xk.checked_mul(c).ok_or(Error::Overflow(n))?).ok_or(Error::Overflow(n))?;
        }
        // C(n, n) = 1
        x.push(acc);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prelude_counts() {
        let a = span_report(&prelude_set('A').unwrap()).unwrap();
        assert_eq!((a.support_dim, a.span_dim, a.nonflat), (3, 9, true));
        let b = span_report(&prelude_set('B').unwrap()).unwrap();
        assert_eq!((b.support_dim, b.span_dim, b.nonflat), (3, 6, false));
        let c = span_report(&prelude_set('C').unwrap()).unwrap();
        assert_eq!((c.support_dim, c.span_dim, c.nonflat), (2, 4, true));
    }

    #[test]
    fn prelude_filters() {
        let af = filter_nonflatten_check(&prelude_set('A').unwrap(), &prelude_filter('F').unwrap()).unwrap();
        let after = af.after.unwrap();
        assert_eq!((after.input_count, after.support_dim, after.span_dim, after.nonflat), (8, 2, 4, true));
        let cg = filter_nonflatten_check(&prelude_set('C').unwrap(), &prelude_filter('G').unwrap()).unwrap();
        let after = cg.after.unwrap();
        assert_eq!((after.support_dim, after.span_dim, after.nonflat), (2, 4, true));
        assert!(af.verdict && cg.verdict);
    }

    #[test]
    fn single_pure_state_is_nonflat() {
        let r = span_report(&[fiducial_state(3, "13y").unwrap()]).unwrap();
        assert_eq!((r.support_dim, r.span_dim, r.nonflat), (1, 1, true));
        assert!(matches!(span_report(&[]), Err(Error::EmptySet)));
    }

    #[test]
    fn small_search() {
        let r = k_multiplicative_search(4, 1).unwrap();
        assert_eq!(r.surviving_functions, vec![vec![(2, 1), (3, 1)]]);
        assert!(matches!(k_multiplicative_search(3, 1), Err(Error::RangeTooSmall(3))));
        assert!(matches!(k_multiplicative_search(10_001, 1), Err(Error::RangeTooLarge(_))));
    }

    #[test]
    fn mixed_pair_breaks_monotonicity() {
        assert_eq!(monotonicity_counterexample(30, &[(2, 1), (3, 2)]).unwrap(), Some(3));
        assert_eq!(monotonicity_counterexample(30, &[(2, 2), (3, 2)]).unwrap(), None);
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(k_multiplicative_search(10_000, 12), Err(Error::Overflow(_))));
    }

    #[test]
    fn signatures() {
        assert_eq!(signature_vector(1, 4).unwrap(), vec![1, 0, 0, 0]);
        assert_eq!(signature_vector(2, 4).unwrap(), vec![1, 2, 0, 0]);
        assert_eq!(signature_vector(3, 4).unwrap(), vec![1, 6, 6, 0]);
        assert_eq!(signature_vector(4, 6).unwrap(), vec![1, 14, 36, 24, 0, 0]);
    }

    #[test]
    fn blocking_filter_is_vacuous() {
        let parent = SystemType::new("prelude", PRELUDE_DIM).unwrap();
        let s = Subspace::levels(parent, &[3]).unwrap();
        let check = filter_nonflatten_check(&prelude_set('C').unwrap(), &s).unwrap();
        assert!(check.after.is_none());
        assert!(check.verdict);
    }

    #[test]
    fn small_randomised_suite() {
        let r = nonflatten_suite(&[3], 3, 4, 9).unwrap();
        assert_eq!(r.cases, 12);
        assert_eq!(r.passed, 12);
        assert_eq!(r.nonflat_inputs, 12);
    }
}
