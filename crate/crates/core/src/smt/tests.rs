use std::cell::RefCell;
use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::adversarial::{grid_levels, violation_phase};
use crate::kernels::Matrix;
use crate::network::{Layer, Network};
use crate::sigmoid::sigmoid_lut;

/// Values of the evaluator: booleans and bit-vectors up to 128 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Val {
    B(bool),
    V { w: u32, bits: u128 },
}

fn mask(w: u32) -> u128 {
    if w == 128 {
        u128::MAX
    } else {
        (1u128 << w) - 1
    }
}

fn bv(w: u32, bits: u128) -> Val {
    Val::V { w, bits: bits & mask(w) }
}

fn signed(w: u32, bits: u128) -> i128 {
    if w < 128 && bits >> (w - 1) & 1 == 1 {
        bits as i128 - (1i128 << w)
    } else {
        bits as i128
    }
}

/// Straightforward interpreter for the QF_BV fragment the encoder emits.
struct Script {
    funs: HashMap<String, (Vec<String>, Sexp)>,
    consts: HashMap<String, Val>,
    assertions: Vec<Sexp>,
    cache: RefCell<HashMap<String, Val>>,
}

impl Script {
    fn load(text: &str) -> Script {
        let mut s = Script {
            funs: HashMap::new(),
            consts: HashMap::new(),
            assertions: Vec::new(),
            cache: RefCell::new(HashMap::new()),
        };
        for cmd in parse_all(text).unwrap() {
            let items = cmd.list().unwrap();
            match cmd.head().unwrap() {
                "define-fun" => {
                    let name = items[1].atom().unwrap().to_string();
                    let params = items[2]
                        .list()
                        .unwrap()
                        .iter()
                        .map(|p| p.list().unwrap()[0].atom().unwrap().to_string())
                        .collect();
                    s.funs.insert(name, (params, items[4].clone()));
                }
                "declare-const" => {
                    s.consts.insert(items[1].atom().unwrap().to_string(), Val::B(false));
                }
                "assert" => s.assertions.push(items[1].clone()),
                "set-logic" | "set-option" | "check-sat" | "get-value" => {}
                other => panic!("unexpected command {other}"),
            }
        }
        s
    }

    fn assign(&mut self, name: &str, raw: i32) {
        assert!(self.consts.contains_key(name));
        self.consts.insert(name.to_string(), bv(32, raw as u32 as u128));
        self.cache.borrow_mut().clear();
    }

    fn raw(&self, name: &str) -> i32 {
        match self.eval(&Sexp::Atom(name.into()), &HashMap::new()) {
            Val::V { w: 32, bits } => bits as u32 as i32,
            other => panic!("{other:?}"),
        }
    }

    fn holds(&self) -> Vec<bool> {
        self.assertions
            .iter()
            .map(|a| self.eval(a, &HashMap::new()) == Val::B(true))
            .collect()
    }

    fn eval(&self, e: &Sexp, locals: &HashMap<String, Val>) -> Val {
        match e {
            Sexp::Atom(a) => self.atom(a, locals),
            Sexp::List(items) => self.apply(items, locals),
        }
    }

    fn atom(&self, a: &str, locals: &HashMap<String, Val>) -> Val {
        if a == "true" {
            return Val::B(true);
        }
        if a == "false" {
            return Val::B(false);
        }
        if let Some(h) = a.strip_prefix("#x") {
            return bv(4 * h.len() as u32, u128::from_str_radix(h, 16).unwrap());
        }
        if let Some(b) = a.strip_prefix("#b") {
            return bv(b.len() as u32, u128::from_str_radix(b, 2).unwrap());
        }
        if let Some(v) = locals.get(a) {
            return *v;
        }
        if let Some(v) = self.consts.get(a) {
            return *v;
        }
        if let Some(v) = self.cache.borrow().get(a) {
            return *v;
        }
        let (params, body) = self.funs.get(a).unwrap_or_else(|| panic!("unknown symbol {a}"));
        assert!(params.is_empty());
        let v = self.eval(body, &HashMap::new());
        self.cache.borrow_mut().insert(a.to_string(), v);
        v
    }

    fn apply(&self, items: &[Sexp], locals: &HashMap<String, Val>) -> Val {
        // Indexed operators.
        if let Some(ix) = items[0].list() {
            let name = ix[1].atom().unwrap();
            let nums: Vec<u32> = ix[2..].iter().map(|n| n.atom().unwrap().parse().unwrap()).collect();
            let Val::V { w, bits } = self.eval(&items[1], locals) else { panic!() };
            return match name {
                "extract" => bv(nums[0] - nums[1] + 1, bits >> nums[1]),
                "zero_extend" => bv(w + nums[0], bits),
                "sign_extend" => bv(w + nums[0], signed(w, bits) as u128),
                other => panic!("unknown indexed op {other}"),
            };
        }
        let head = items[0].atom().unwrap();
        match head {
            "_" => {
                let n = items[1].atom().unwrap().strip_prefix("bv").unwrap();
                return bv(items[2].atom().unwrap().parse().unwrap(), n.parse().unwrap());
            }
            "let" => {
                let mut inner = locals.clone();
                for binding in items[1].list().unwrap() {
                    let b = binding.list().unwrap();
                    inner.insert(b[0].atom().unwrap().to_string(), self.eval(&b[1], locals));
                }
                return self.eval(&items[2], &inner);
            }
            "ite" => {
                return match self.eval(&items[1], locals) {
                    Val::B(true) => self.eval(&items[2], locals),
                    Val::B(false) => self.eval(&items[3], locals),
                    other => panic!("{other:?}"),
                };
            }
            _ => {}
        }
        let args: Vec<Val> = items[1..].iter().map(|a| self.eval(a, locals)).collect();
        let bools = || args.iter().map(|a| matches!(a, Val::B(true)));
        match head {
            "and" => return Val::B(bools().all(|b| b)),
            "or" => return Val::B(bools().any(|b| b)),
            "not" => return Val::B(!bools().next().unwrap()),
            "=" => return Val::B(args[0] == args[1]),
            _ => {}
        }
        if let Some((params, body)) = self.funs.get(head) {
            let bound = params.iter().cloned().zip(args).collect();
            return self.eval(body, &bound);
        }
        let (w, x) = match args[0] {
            Val::V { w, bits } => (w, bits),
            other => panic!("{other:?}"),
        };
        let y = match args.get(1) {
            Some(Val::V { w: w2, bits }) => {
                assert_eq!(*w2, w, "width mismatch in {head}");
                *bits
            }
            _ => 0,
        };
        let (sx, sy) = (signed(w, x), signed(w, y));
        let fold = |f: fn(u128, u128) -> u128| {
            args[1..].iter().fold(x, |acc, a| match a {
                Val::V { w: w2, bits } if *w2 == w => f(acc, *bits) & mask(w),
                other => panic!("{other:?} in {head}"),
            })
        };
        match head {
            "bvadd" => bv(w, fold(u128::wrapping_add)),
            "bvmul" => bv(w, fold(u128::wrapping_mul)),
            "bvsub" => bv(w, x.wrapping_sub(y)),
            "bvneg" => bv(w, x.wrapping_neg()),
            "bvashr" => bv(w, (sx >> y.min(w as u128 - 1)) as u128),
            "bvlshr" => bv(w, if y >= w as u128 { 0 } else { x >> y }),
            "bvult" => Val::B(x < y),
            "bvule" => Val::B(x <= y),
            "bvugt" => Val::B(x > y),
            "bvuge" => Val::B(x >= y),
            "bvslt" => Val::B(sx < sy),
            "bvsle" => Val::B(sx <= sy),
            "bvsgt" => Val::B(sx > sy),
            "bvsge" => Val::B(sx >= sy),
            other => panic!("unknown op {other}"),
        }
    }

    fn call(&self, fun: &str, args: &[i32]) -> i32 {
        let text = format!(
            "({fun} {})",
            args.iter().map(|&a| format!("#x{:08x}", a as u32)).collect::<Vec<_>>().join(" ")
        );
        match self.eval(&parse_all(&text).unwrap()[0], &HashMap::new()) {
            Val::V { w: 32, bits } => bits as u32 as i32,
            other => panic!("{other:?}"),
        }
    }
}

fn fx(v: f64) -> Fx {
    Fx::from_f64(v)
}

fn threshold_problem(gamma: f64) -> AdversarialProblem<Fx> {
    let net = Network::new(
        vec![2, 2],
        vec![Layer {
            weights: Matrix::new(2, 2, vec![fx(-10.0), fx(-10.0), fx(10.0), fx(10.0)]).unwrap(),
            bias: vec![fx(10.0), fx(-10.0)],
        }],
        Activation::Sigmoid,
    )
    .unwrap();
    AdversarialProblem::new(net, ImageVec::from_f64(2, 1, &[0.4, 0.4]).unwrap(), 0, gamma)
        .unwrap()
        .with_grid(5, 0.25)
        .unwrap()
}

fn random_problem(rng: &mut ChaCha8Rng) -> AdversarialProblem<Fx> {
    let mut sizes = vec![rng.gen_range(1..=3)];
    for _ in 0..rng.gen_range(1..=2) {
        sizes.push(rng.gen_range(1..=3));
    }
    let activation = if rng.gen_bool(0.5) { Activation::Sigmoid } else { Activation::Relu };
    // Occasional huge weights exercise saturation.
    let weight = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.1) {
            Fx::from_raw(rng.gen())
        } else {
            fx(rng.gen_range(-20.0..20.0))
        }
    };
    let layers = sizes
        .windows(2)
        .map(|w| Layer {
            weights: Matrix::new(w[1], w[0], (0..w[0] * w[1]).map(|_| weight(rng)).collect()).unwrap(),
            bias: (0..w[1]).map(|_| weight(rng)).collect(),
        })
        .collect();
    let net = Network::new(sizes.clone(), layers, activation).unwrap();
    let pixels: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let reference = ImageVec::from_f64(sizes[0], 1, &pixels).unwrap();
    let target = rng.gen_range(0..*sizes.last().unwrap());
    let mut problem = AdversarialProblem::new(net, reference, target, rng.gen_range(0.0..1.5))
        .unwrap()
        .with_grid(rng.gen_range(2..=4), rng.gen_range(0.0..=0.7))
        .unwrap()
        .with_reference_value(rng.gen_range(-1.0..1.0))
        .unwrap();
    if rng.gen_bool(0.5) {
        problem = problem.with_quantifier(Quantifier::ForAll);
    }
    if rng.gen_bool(0.5) {
        problem = problem.with_source(LiteralSource::Potentials);
    }
    problem
}

#[test]
fn smallest_instance_structure() {
    let net = Network::new(
        vec![1, 1],
        vec![Layer {
            weights: Matrix::new(1, 1, vec![fx(2.0)]).unwrap(),
            bias: vec![fx(-1.0)],
        }],
        Activation::Sigmoid,
    )
    .unwrap();
    let problem = AdversarialProblem::new(net, ImageVec::from_f64(1, 1, &[0.5]).unwrap(), 0, 0.25).unwrap();
    let artifact = emit_smt(&problem).unwrap();
    let text = &artifact.text;
    assert_eq!(artifact.logic, "QF_BV");
    assert_eq!(artifact.symbols.pixels, vec!["px_0"]);
    assert_eq!(artifact.symbols.outputs, vec!["y_1_0"]);
    assert_eq!(text.matches("(declare-const").count(), 1);
    assert_eq!(text.matches("(assert (and (bvsle #x00000000").count(), 1);
    assert_eq!(text.matches("(assert (bvule").count(), 1);
    assert_eq!(text.matches("(assert (and (bvslt").count(), 1);
    assert_eq!(text.matches("(assert").count(), 3);
    assert!(text.contains("(set-logic QF_BV)"));
    assert!(text.contains("(set-option :produce-models true)"));
    assert!(text.trim_end().ends_with("(check-sat)\n(get-value (px_0))"));
    // A single output has no competitor.
    assert!(text.contains("(assert (and (bvslt y_1_0 #x00008000) false))"));
}

#[test]
fn text_reparses_and_symbols_round_trip() {
    let problem = threshold_problem(0.5);
    let artifact = emit_smt_with(&problem, &SmtOptions { grid_restriction: true, ..Default::default() }).unwrap();
    let commands = parse_all(&artifact.text).unwrap();
    assert_eq!(commands.first().and_then(Sexp::head), Some("set-logic"));
    assert_eq!(commands.last().and_then(Sexp::head), Some("get-value"));
    let again = SmtArtifact::from_text(problem, artifact.text.clone()).unwrap();
    assert_eq!(again.symbols, artifact.symbols);
    assert_eq!(again.logic, "QF_BV");
}

#[test]
fn arithmetic_helpers_match_fixed_point() {
    let script = Script::load(&emit_smt(&threshold_problem(0.5)).unwrap().text);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut samples: Vec<i32> = vec![i32::MIN, i32::MIN + 1, -1, 0, 1, 32768, -32768, 65536, i32::MAX];
    samples.extend((0..300).map(|_| rng.gen::<i32>()));
    samples.extend((0..300).map(|_| rng.gen_range(-(20 << 16)..(20 << 16))));
    for (i, &a) in samples.iter().enumerate() {
        let b = samples[(i * 7 + 3) % samples.len()];
        let (fa, fb) = (Fx::from_raw(a), Fx::from_raw(b));
        assert_eq!(script.call("fx_mul", &[a, b]), (fa * fb).raw(), "{a} * {b}");
        assert_eq!(script.call("fx_add", &[a, b]), (fa + fb).raw(), "{a} + {b}");
    }
}

#[test]
fn sigmoid_encoding_matches_table() {
    let script = Script::load(&emit_smt(&threshold_problem(0.5)).unwrap().text);
    let mut xs: Vec<i32> = vec![i32::MIN, i32::MAX, DOMAIN_LO_RAW, DOMAIN_HI_RAW, DOMAIN_HI_RAW - 1, 0, -1, 1];
    // Every table point and its neighbourhood, plus random interior points.
    for i in 0..=8192 {
        xs.push(DOMAIN_LO_RAW + i * 256);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    xs.extend((0..3000).map(|_| rng.gen_range(DOMAIN_LO_RAW - 1000..DOMAIN_HI_RAW + 1000)));
    for x in xs {
        assert_eq!(script.call("fx_act", &[x]), sigmoid_lut(Fx::from_raw(x)).raw(), "sigmoid at raw {x}");
    }
}

#[test]
fn formula_agrees_with_engine_on_grid_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..40 {
        let problem = random_problem(&mut rng);
        let artifact = emit_smt_with(&problem, &SmtOptions { grid_restriction: true, ..Default::default() }).unwrap();
        let mut script = Script::load(&artifact.text);
        let levels = grid_levels(problem.reference.pixels(), problem.grid);
        let points: Vec<Vec<Fx>> = (0..30)
            .map(|_| levels.iter().map(|l| l[rng.gen_range(0..l.len())]).collect())
            .collect();
        for point in points {
            for (s, p) in artifact.symbols.pixels.iter().zip(&point) {
                script.assign(s, p.raw());
            }
            let trace = problem.net.forward_values(&point).unwrap();
            for (k, layer) in trace.layers().iter().enumerate() {
                for (r, (u, y)) in layer.potentials.iter().zip(&layer.outputs).enumerate() {
                    assert_eq!(script.raw(&potential_symbol(k + 1, r)), u.raw());
                    assert_eq!(script.raw(&output_symbol(k + 1, r)), y.raw());
                }
            }
            let expected = crate::adversarial::within(
                crate::adversarial::squared_distance(problem.reference.pixels(), &point),
                problem.gamma,
            ) && problem.literal_on_trace(&trace);
            assert_eq!(script.holds().iter().all(|&b| b), expected, "{point:?}");
        }
    }
}

#[test]
fn range_and_grid_restrictions() {
    let problem = threshold_problem(0.5);
    let artifact = emit_smt_with(&problem, &SmtOptions { grid_restriction: true, ..Default::default() }).unwrap();
    let mut script = Script::load(&artifact.text);
    script.assign("px_0", fx(0.525).raw());
    script.assign("px_1", fx(0.525).raw());
    assert!(script.holds().iter().all(|&b| b));
    // Off-grid by one raw unit.
    script.assign("px_1", fx(0.525).raw() + 1);
    assert!(!script.holds().iter().all(|&b| b));
    let plain = emit_smt(&problem).unwrap();
    let mut script = Script::load(&plain.text);
    script.assign("px_0", fx(0.525).raw());
    script.assign("px_1", fx(0.525).raw() + 1);
    assert!(script.holds().iter().all(|&b| b));
    script.assign("px_1", -1);
    assert!(!script.holds()[1]);
    script.assign("px_1", 65537);
    assert!(!script.holds()[1]);
}

#[test]
fn distance_limit_is_exact() {
    // gamma^2 * 2^32 lands on an integer: equality must be admitted.
    let problem = threshold_problem(0.25).with_grid(2, 0.0).unwrap();
    let mut script = Script::load(&emit_smt(&problem).unwrap().text);
    let base = fx(0.4).raw();
    script.assign("px_0", base + 16384);
    script.assign("px_1", base);
    assert!(script.holds()[2]);
    script.assign("px_1", base + 1);
    assert!(!script.holds()[2]);
}

fn transcript(ce: &Counterexample<Fx>) -> String {
    let bindings: Vec<String> = ce
        .image
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, p)| format!("(px_{i} #x{:08x})", p.raw() as u32))
        .collect();
    format!("sat\n({})\n", bindings.join("\n "))
}

#[test]
fn ingest_round_trip() {
    let problem = threshold_problem(0.5);
    let artifact = emit_smt(&problem).unwrap();
    let ce = violation_phase(&problem, 0.5).unwrap().unwrap();
    match ingest_model(&artifact, transcript(&ce).as_bytes()).unwrap() {
        Ingested::Model(got) => {
            assert_eq!(got, ce);
            assert!(validate_counterexample(&problem.net, &got, &problem));
        }
        other => panic!("{other:?}"),
    }
    let alt = format!(
        "sat\n((|px_0| (_ bv{} 32)) (px_1 #b{:032b}))",
        ce.image.pixels()[0].raw(),
        ce.image.pixels()[1].raw() as u32
    );
    assert!(matches!(ingest_model(&artifact, alt.as_bytes()).unwrap(), Ingested::Model(_)));
}

#[test]
fn ingest_no_model_and_errors() {
    let artifact = emit_smt(&threshold_problem(0.5)).unwrap();
    assert_eq!(ingest_model(&artifact, b"unsat\n").unwrap(), Ingested::NoModel(SolverAnswer::Unsat));
    assert_eq!(ingest_model(&artifact, b"unknown").unwrap(), Ingested::NoModel(SolverAnswer::Unknown));
    let missing = ingest_model(&artifact, b"sat\n((px_0 #x00008000))").unwrap_err();
    assert!(matches!(&missing, Error::Ingest(m) if m.contains("px_1")), "{missing}");
    let malformed = ingest_model(&artifact, b"sat\n((px_0 #x0000800) (px_1 #x00008000))").unwrap_err();
    assert!(matches!(&malformed, Error::Ingest(m) if m.contains("px_0")), "{malformed}");
    let outside = ingest_model(&artifact, b"sat\n((px_0 #x00020000) (px_1 #x00008000))").unwrap_err();
    assert!(matches!(&outside, Error::Ingest(m) if m.contains("px_0")));
    // In range but not a counterexample.
    assert!(ingest_model(&artifact, b"sat\n((px_0 #x00006666) (px_1 #x00006666))").is_err());
    assert!(ingest_model(&artifact, b"(error \"line 3: unknown\")").is_err());
    assert!(ingest_model(&artifact, b"").is_err());
    assert!(ingest_model(&artifact, b"sat\n((px_0").is_err());
}

#[test]
fn capacity_cap() {
    let problem = threshold_problem(0.5);
    let small = SmtOptions { max_bytes: 1000, ..Default::default() };
    match emit_smt_with(&problem, &small) {
        Err(Error::Capacity(m)) => assert!(m.contains("1000")),
        other => panic!("{other:?}"),
    }
    let relu = Network::new(
        vec![2, 1],
        vec![Layer { weights: Matrix::new(1, 2, vec![fx(1.0), fx(1.0)]).unwrap(), bias: vec![fx(0.0)] }],
        Activation::Relu,
    )
    .unwrap();
    let p = AdversarialProblem::new(relu, ImageVec::from_f64(2, 1, &[0.1, 0.2]).unwrap(), 0, 0.1).unwrap();
    let size = emit_smt(&p).unwrap().text.len();
    assert!(emit_smt_with(&p, &SmtOptions { max_bytes: size, ..Default::default() }).is_ok());
    assert!(emit_smt_with(&p, &SmtOptions { max_bytes: size - 1, ..Default::default() }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_problems_reparse(seed in any::<u64>()) {
        let problem = random_problem(&mut ChaCha8Rng::seed_from_u64(seed));
        let artifact = emit_smt(&problem).unwrap();
        prop_assert!(parse_all(&artifact.text).is_ok());
        prop_assert_eq!(artifact.symbols.pixels.len(), problem.net.input_dim());
        prop_assert_eq!(artifact.symbols.outputs.len(), problem.net.output_dim());
    }
}
