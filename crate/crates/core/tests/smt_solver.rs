//! Round trips through an external SMT-LIB2 solver. Uses `NNBMC_SMT_SOLVER`
//! if set, otherwise `z3` from `PATH`; without either the tests pass
//! vacuously and say so.

use std::path::PathBuf;
use std::process::Command;

use nnbmc_core::adversarial::{validate_counterexample, AdversarialProblem};
use nnbmc_core::kernels::Matrix;
use nnbmc_core::network::Layer;
use nnbmc_core::smt::{emit_smt, emit_smt_with, ingest_model, Ingested, SmtOptions, SolverAnswer};
use nnbmc_core::{Activation, Fx, ImageVec, Network, Scalar};

fn solver() -> Option<PathBuf> {
    if let Some(s) = std::env::var_os("NNBMC_SMT_SOLVER") {
        return Some(PathBuf::from(s));
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join("z3")).find(|p| p.is_file())
}

fn solve(solver: &PathBuf, text: &str) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("query.smt2");
    std::fs::write(&file, text).unwrap();
    Command::new(solver).arg(&file).output().unwrap().stdout
}

fn threshold_problem(gamma: f64) -> AdversarialProblem<Fx> {
    let fx = Fx::from_f64;
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

#[test]
fn threshold_net_round_trip() {
    let Some(solver) = solver() else {
        eprintln!("no SMT solver found; skipping");
        return;
    };
    let problem = threshold_problem(0.5);
    let artifact = emit_smt(&problem).unwrap();
    match ingest_model(&artifact, &solve(&solver, &artifact.text)).unwrap() {
        Ingested::Model(ce) => {
            assert!(ce.distance <= 0.5);
            assert!(validate_counterexample(&problem.net, &ce, &problem));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn point_ball_is_unsat() {
    let Some(solver) = solver() else {
        eprintln!("no SMT solver found; skipping");
        return;
    };
    let artifact = emit_smt(&threshold_problem(0.0)).unwrap();
    assert_eq!(
        ingest_model(&artifact, &solve(&solver, &artifact.text)).unwrap(),
        Ingested::NoModel(SolverAnswer::Unsat)
    );
}

#[test]
fn continuum_sees_more_than_the_grid() {
    let Some(solver) = solver() else {
        eprintln!("no SMT solver found; skipping");
        return;
    };
    // The nearest flip is about 0.1414 away; the 5-level grid only reaches
    // it at 0.1768.
    let problem = threshold_problem(0.15);
    let free = emit_smt(&problem).unwrap();
    assert!(matches!(ingest_model(&free, &solve(&solver, &free.text)).unwrap(), Ingested::Model(_)));
    let grid = emit_smt_with(&problem, &SmtOptions { grid_restriction: true, ..Default::default() }).unwrap();
    assert_eq!(
        ingest_model(&grid, &solve(&solver, &grid.text)).unwrap(),
        Ingested::NoModel(SolverAnswer::Unsat)
    );
}
