use eqpalg::ast::*;
use eqpalg::engine::{run, Engine, SchedulerPolicy};
use eqpalg::parser::{parse, pretty_print};
use eqpalg::protocol::{self, EXAMPLES};
use eqpalg::quantum::Complex64;
use proptest::prelude::*;

const QUBITS: [&str; 3] = ["x", "y", "z"];

fn qubit() -> impl Strategy<Value = Name> {
    proptest::sample::select(&QUBITS[..]).prop_map(str::to_string)
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(0u64..1000).prop_map(Expr::Nat), Just(Expr::Var("n".into()))];
    leaf.prop_recursive(2, 4, 2, |inner| {
        (inner.clone(), inner).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b)))
    })
}

fn measure() -> impl Strategy<Value = Measure> {
    qubit().prop_map(|q| Measure {
        observable: COMPUTATIONAL_BASIS.into(),
        qubits: vec![q],
        results: vec!["n".into()],
    })
}

/// Actions that need no binder, so any sequence of them stays well scoped.
fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        (proptest::sample::select(&["I", "X", "Y", "Z", "H"][..]), qubit())
            .prop_map(|(g, q)| Action::Unitary(g.into(), vec![q])),
        (qubit(), qubit())
            .prop_filter("distinct", |(a, b)| a != b)
            .prop_map(|(a, b)| Action::Unitary("CNOT".into(), vec![a, b])),
        qubit().prop_map(|q| Action::Unitary("X".into(), vec!["n".into(), q])),
        measure().prop_map(Action::Measure),
        measure().prop_map(|m| Action::SendMeasure("c".into(), m)),
        expr().prop_map(|e| Action::ClassicalSend("c".into(), e)),
        Just(Action::ClassicalRecv("c".into(), "n".into())),
        qubit().prop_map(|q| Action::QuantumSend("d".into(), q)),
    ]
}

fn term() -> impl Strategy<Value = ProcessTerm> {
    let leaf = prop_oneof![
        Just(ProcessTerm::End),
        Just(ProcessTerm::Nil),
        qubit().prop_map(|q| ProcessTerm::Invoke("Flip".into(), vec![q])),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (proptest::collection::vec(action(), 1..4), inner.clone()).prop_map(|(a, t)| ProcessTerm::actions(a, t)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ProcessTerm::par(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ProcessTerm::par_shared(a, b, "psi")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ProcessTerm::seq(a, b)),
            (inner.clone(), proptest::sample::subsequence(vec!["c", "d"], 1..=2))
                .prop_map(|(t, hidden)| ProcessTerm::restrict(t, hidden)),
            (inner, 0.0f64..std::f64::consts::TAU).prop_map(|(t, phi)| ProcessTerm::block(
                vec![VarDecl::qubit(
                    "u",
                    Some(KetLiteral::Pair(
                        Complex64::new(0.6, 0.0),
                        Complex64::from_polar(0.8, phi)
                    ))
                )],
                t
            )),
        ]
    })
}

fn file_of(body: ProcessTerm) -> SourceFile {
    let mut decls: Vec<VarDecl> = QUBITS
        .iter()
        .map(|q| VarDecl::qubit(q, Some(KetLiteral::Plus)))
        .collect();
    decls.push(VarDecl::integer("n", Some(Expr::Nat(1))));
    SourceFile {
        defs: vec![
            ProcDef {
                name: "Flip".into(),
                params: vec![VarDecl::qubit("a", None)],
                body: ProcessTerm::prefix(Action::Unitary("X".into(), vec!["a".into()]), ProcessTerm::End),
            },
            ProcDef {
                name: "Main".into(),
                params: vec![],
                body: ProcessTerm::block(decls, body),
            },
        ],
        spec: None,
        main: Some("Main".into()),
    }
}

#[test]
fn shipped_examples_round_trip() {
    for (name, src) in EXAMPLES {
        let file = parse(src).unwrap();
        assert_eq!(parse(&pretty_print(&file)).unwrap(), file, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn printed_programs_parse_back(body in term()) {
        let file = file_of(body);
        prop_assert!(well_formed_file(&file).is_ok(), "{:?}", well_formed_file(&file));
        let text = pretty_print(&file);
        let again = parse(&text);
        prop_assert!(again.is_ok(), "{:?}\n{}", again, text);
        prop_assert_eq!(again.unwrap(), file);
    }

    #[test]
    fn runs_replay_exactly(body in term(), seed in any::<u64>()) {
        let file = file_of(body);
        let a = run(&file, SchedulerPolicy::Random, 40, seed);
        let b = run(&file, SchedulerPolicy::Random, 40, seed);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.to_json(), b.to_json());
                prop_assert!(a.replays_on(&Engine::new(&file)));
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "one run failed and the other did not"),
        }
    }

    #[test]
    fn every_step_keeps_context_invariants(body in term(), seed in any::<u64>()) {
        let file = file_of(body);
        if let Ok(trace) = run(&file, SchedulerPolicy::Random, 40, seed) {
            for step in &trace.steps {
                prop_assert!(step.config.ctx.check_invariants().is_ok());
            }
        }
    }

    #[test]
    fn random_teleport_runs_always_deliver(seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let input = protocol::random_qubit(&mut rng);
        let report = protocol::teleport(&input, seed, SchedulerPolicy::Random).unwrap();
        prop_assert!(report.fidelity >= 1.0 - 1e-9);
    }
}
