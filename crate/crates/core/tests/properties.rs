//! Property tests against independent oracles.

use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use opcirc::circuit::{foliation_cut, topological_layers, FragmentNode, SystemType, WireGraph};
use opcirc::dsl::{parse, pretty_print, Call, CircuitDocument, Directive, Source, Stmt, Arg};
use opcirc::duotensor::{canonical_families, eval_circuit_duotensor};
use opcirc::fragment::{apply_channel, eval_circuit, eval_circuit_dense, operator_from_kraus, ContractionOrder, OperatorFragment};
use opcirc::gadgets::teleportation_graph;
use opcirc::linalg::{max_abs, min_eigenvalue, CMatrix, DenseHermitian, LabeledSpace, C64};
use opcirc::physicality::{random_hermitian, random_state, sample_kraus};
use opcirc::reconstruction::{k_multiplicative_search, primes, signature_vector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn q() -> SystemType {
    SystemType::qubit()
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Closed-form smallest eigenvalue of a 2×2 Hermitian matrix.
    #[test]
    fn min_eigenvalue_matches_closed_form(a in -5.0..5.0f64, d in -5.0..5.0f64, br in -5.0..5.0f64, bi in -5.0..5.0f64) {
        let m = CMatrix::from_row_slice(2, 2, &[c(a, 0.0), c(br, bi), c(br, -bi), c(d, 0.0)]);
        let h = DenseHermitian::new(LabeledSpace::new([("s", 2)]).unwrap(), m).unwrap();
        let oracle = 0.5 * (a + d) - (0.25 * (a - d).powi(2) + br * br + bi * bi).sqrt();
        assert_abs_diff_eq!(min_eigenvalue(&h).unwrap(), oracle, epsilon = 1e-10);
    }

    /// Applying a Kraus-built fragment equals `Σ K ρ K†`.
    #[test]
    fn channel_action_matches_kraus_sum(seed in any::<u64>(), rank in 1usize..4) {
        let t = SystemType::new("t", 3).unwrap();
        let ks = sample_kraus(&[q()], std::slice::from_ref(&t), rank, seed).unwrap();
        let f = operator_from_kraus(&ks, &[q()], &[t]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let rho = random_state(&mut rng, 2, 2);
        let state = DenseHermitian::new(LabeledSpace::new([("in1", 2)]).unwrap(), rho.clone()).unwrap();
        let out = apply_channel(&f, &state).unwrap();
        let oracle = ks.iter().fold(CMatrix::zeros(3, 3), |acc, k| acc + k * &rho * k.adjoint());
        let diff = max_abs(&(out.matrix() - oracle));
        prop_assert!(diff < 1e-12, "diff {diff:e}");
    }

    /// The signature solves `N^r = Σ x_k C(N, k)` at every `N`.
    #[test]
    fn signature_reproduces_powers(r in 1u32..7, n in 1usize..12) {
        let x = signature_vector(r, n).unwrap();
        let mut binom = 1i128;
        let mut total = 0i128;
        for (k, xk) in x.iter().enumerate() {
            binom = binom * (n as i128 - k as i128) / (k as i128 + 1);
            total += xk * binom;
        }
        prop_assert_eq!(total, (n as i128).pow(r));
    }

    /// Contraction orders, the single-shot dense oracle and the duotensor
    /// evaluation agree on a random closed circuit.
    #[test]
    fn evaluation_routes_agree(seed in any::<u64>()) {
        let g = random_circuit(seed);
        let dense = eval_circuit_dense(&g).unwrap();
        for order in [ContractionOrder::Greedy, ContractionOrder::Optimal, ContractionOrder::Naive, ContractionOrder::Auto] {
            let v = eval_circuit(&g, order).unwrap();
            prop_assert!((v - dense).abs() <= 1e-9 * (1.0 + dense.abs()), "{order:?}: {v} vs {dense}");
        }
        let fams = canonical_families([q()].iter()).unwrap();
        let d = eval_circuit_duotensor(&g, &fams).unwrap();
        prop_assert!((d - dense).abs() <= 1e-9 * (1.0 + dense.abs()), "duotensor {d} vs {dense}");
    }

    /// Canonical text is a fixed point of parse followed by print.
    #[test]
    fn pretty_print_round_trips(doc in document()) {
        let text = pretty_print(&doc);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(pretty_print(&back), text);
    }
}

/// S: () → q,q ; C: q,q → q ; D: q → q ; E: q → ().
fn random_circuit(seed: u64) -> WireGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut op = |ins: usize, outs: usize| {
        let n = 1 << (ins + outs);
        OperatorFragment::with_types(&vec![q(); ins], &vec![q(); outs], random_hermitian(&mut rng, n)).unwrap()
    };
    let mut g = WireGraph::new();
    g.add_node(FragmentNode::operator("S", op(0, 2))).unwrap();
    g.add_node(FragmentNode::operator("C", op(2, 1))).unwrap();
    g.add_node(FragmentNode::operator("D", op(1, 1))).unwrap();
    g.add_node(FragmentNode::operator("E", op(1, 0))).unwrap();
    g.connect("S", 1, "C", 1);
    g.connect("S", 2, "C", 2);
    g.connect("C", 1, "D", 1);
    g.connect("D", 1, "E", 1);
    g
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,6}"
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![(-1000i32..1000).prop_map(f64::from), -10.0..10.0f64, Just(0.5), Just(1e-20)]
}

fn arg() -> impl Strategy<Value = Arg> {
    let leaf = prop_oneof![
        number().prop_map(Arg::Num),
        ident().prop_map(Arg::Ident),
        "[a-z0-9 \"\\\\]{0,6}".prop_map(Arg::Str),
        prop::collection::vec(number(), 0..4).prop_map(Arg::List),
    ];
    leaf.prop_recursive(2, 6, 3, |inner| (ident(), prop::collection::vec(inner, 0..3)).prop_map(|(name, args)| Arg::Call(Call { name, args })))
}

fn stmt() -> impl Strategy<Value = Stmt> {
    let types = || prop::collection::vec(ident(), 0..3);
    let source = prop_oneof![
        Just(None),
        "[a-z_0-9]{1,5}".prop_map(|s| Some(Source::Lib(s))),
        (ident(), prop::collection::vec(arg(), 0..3)).prop_map(|(name, args)| Some(Source::Gadget(Call { name, args }))),
    ];
    prop_oneof![
        Just(Stmt::Blank),
        "([a-z][a-z ]{0,10})?[a-z]".prop_map(Stmt::Comment),
        (ident(), 1usize..9).prop_map(|(name, dim)| Stmt::Type { name, dim }),
        "[a-z./_]{1,10}".prop_map(Stmt::Library),
        (ident(), types(), types(), source).prop_map(|(name, inputs, outputs, source)| Stmt::Op { name, inputs, outputs, source }),
        (ident(), ident()).prop_map(|(id, op)| Stmt::Node { id, op }),
        (ident(), 1usize..5, ident(), 1usize..5).prop_map(|(from, out_port, to, in_port)| Stmt::Wire { from, out_port, to, in_port }),
        Just(Stmt::Directive(Directive::Eval)),
        ident().prop_map(|x| Stmt::Directive(Directive::Physical(x))),
        (ident(), ident()).prop_map(|(a, b)| Stmt::Directive(Directive::Ratio(a, b))),
        "[a-z.]{1,8}".prop_map(|p| Stmt::Directive(Directive::Render(p))),
    ]
}

fn document() -> impl Strategy<Value = CircuitDocument> {
    prop::collection::vec(stmt(), 0..12).prop_map(|stmts| CircuitDocument { stmts })
}

/// Enumerates every exponent assignment and keeps the monotone ones.
fn brute_force_survivors(range: u64, max_r: u32) -> Vec<Vec<(u64, u32)>> {
    let ps = primes(range);
    let total = (max_r as usize).pow(ps.len() as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let rs: Vec<u32> = ps
            .iter()
            .map(|_| {
                let e = (c % max_r as usize) as u32 + 1;
                c /= max_r as usize;
                e
            })
            .collect();
        let k = |mut n: u64| -> f64 {
            let mut v = 1.0;
            for (p, r) in ps.iter().zip(&rs) {
                while n.is_multiple_of(*p) {
                    n /= p;
                    v *= (*p as f64).powi(*r as i32);
                }
            }
            v
        };
        if (1..range).all(|n| k(n + 1) > k(n)) {
            out.push(ps.iter().copied().zip(rs).collect());
        }
    }
    out.sort();
    out
}

#[test]
fn search_matches_brute_force() {
    for (range, max_r) in [(4, 3), (10, 3), (13, 2), (20, 2)] {
        let mut found = k_multiplicative_search(range, max_r).unwrap().surviving_functions;
        found.sort();
        assert_eq!(found, brute_force_survivors(range, max_r), "range {range}, r <= {max_r}");
    }
}

#[test]
fn teleport_graph_layers() {
    let layers = topological_layers(&teleportation_graph(0.0)).unwrap();
    let expect: Vec<BTreeSet<String>> = [vec!["B", "M1"], vec!["P"], vec!["M", "U1"]]
        .into_iter()
        .map(|l| l.into_iter().map(String::from).collect())
        .collect();
    assert_eq!(layers, expect);
}

#[test]
fn foliation_separates_past_from_future() {
    let g = teleportation_graph(0.0);
    let cut: Vec<_> = g.wires().iter().filter(|w| w.from.node == "M1" || w.from.node == "B").cloned().collect();
    let (past, future) = foliation_cut(&g, &cut).unwrap().expect("the prepared wires form a cut");
    for w in g.wires() {
        assert!(!(future.contains(&w.from.node) && past.contains(&w.to.node)), "wire {w} runs backwards");
    }
    assert!(past.contains("M1") && past.contains("B"));
    assert!(future.contains("P") && future.contains("M"));
}
