//! The external-solver oracle against scripted stand-in solvers and, when
//! installed, z3.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;
use tempfile::TempDir;
use wordsweep::array::ArrayTables;
use wordsweep::bv::BitVecValue;
use wordsweep::oracle::{
    check, ExternalProcess, ExternalSolverConfig, OracleError, OracleVerdict, Query,
};
use wordsweep::sim::Value;
use wordsweep::term::{Op, Sort, TermGraph};

/// Reads SMT-LIB on stdin line by line. The argument selects the behavior:
/// `zeros` answers sat with an all-zero model, `no-push` rejects `push` and
/// answers unsat, `hang` never answers.
const FAKE_SOLVER: &str = r#"
import re, sys, time
mode = sys.argv[1]
widths = {}
for line in sys.stdin:
    for name, w in re.findall(r"\(declare-const (\|[^|]*\|) \(_ BitVec (\d+)\)\)", line):
        widths[name] = int(w)
    if mode == "hang" and "(check-sat)" in line:
        time.sleep(60)
    if mode == "no-push" and "(push" in line:
        print('(error "push is not supported")', flush=True)
        continue
    if "(check-sat)" in line:
        print("sat" if mode == "zeros" else "unsat", flush=True)
    m = re.search(r"\(get-value \((.*)\)\)", line)
    if m:
        names = re.findall(r"\|[^|]*\|", m.group(1))
        print("(" + " ".join("(%s #b%s)" % (n, "0" * widths[n]) for n in names) + ")", flush=True)
    if "(exit)" in line:
        break
"#;

fn python() -> Option<&'static str> {
    let ok = Command::new("python3")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success());
    ok.then_some("python3")
}

struct Fake {
    _dir: TempDir,
    script: PathBuf,
}

impl Fake {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fake_solver.py");
        std::fs::write(&script, FAKE_SOLVER).unwrap();
        Self { _dir: dir, script }
    }

    fn command(&self, python: &str, mode: &str) -> String {
        format!("{python} {} {mode}", self.script.display())
    }
}

/// `x + 1 = 6` for a 4-bit `x`: satisfiable only by 5.
fn plus_one_query(g: &mut TermGraph) -> (wordsweep::term::TermId, wordsweep::term::TermId) {
    let x = g.mk_var("x", Sort::BitVec(4)).unwrap();
    let one = g.mk_const(BitVecValue::from_u64(1, 4));
    let six = g.mk_const(BitVecValue::from_u64(6, 4));
    let sum = g.mk(Op::Add, &[x, one]).unwrap();
    let goal = g.mk_eq(sum, six).unwrap();
    (g.mk_bool(true), goal)
}

#[test]
fn wrong_models_are_rejected() {
    let Some(py) = python() else { return };
    let fake = Fake::new();
    for incremental in [true, false] {
        let mut g = TermGraph::new();
        let (assumptions, goal) = plus_one_query(&mut g);
        let tables = ArrayTables::new();
        let query = Query::new(&g, &tables, assumptions, goal);
        let config = ExternalSolverConfig {
            incremental,
            ..ExternalSolverConfig::new(fake.command(py, "zeros"))
        };
        let mut oracle = ExternalProcess::new(config);
        match check(&mut oracle, &query) {
            Err(OracleError::InvalidModel { .. }) => {}
            other => {
                panic!("incremental={incremental}: expected an invalid model error, got {other:?}")
            }
        }
    }
}

#[test]
fn rejected_push_falls_back_to_one_process_per_query() {
    let Some(py) = python() else { return };
    let fake = Fake::new();
    let mut g = TermGraph::new();
    let (assumptions, goal) = plus_one_query(&mut g);
    let tables = ArrayTables::new();
    let query = Query::new(&g, &tables, assumptions, goal);
    let mut oracle = ExternalProcess::new(ExternalSolverConfig::new(fake.command(py, "no-push")));
    assert!(oracle.is_incremental());
    assert_eq!(check(&mut oracle, &query).unwrap(), OracleVerdict::Unsat);
    assert!(!oracle.is_incremental());
    assert_eq!(check(&mut oracle, &query).unwrap(), OracleVerdict::Unsat);
}

#[test]
fn timeouts_are_unknown() {
    let Some(py) = python() else { return };
    let fake = Fake::new();
    let mut g = TermGraph::new();
    let (assumptions, goal) = plus_one_query(&mut g);
    let tables = ArrayTables::new();
    let query = Query::new(&g, &tables, assumptions, goal);
    for incremental in [true, false] {
        let config = ExternalSolverConfig {
            timeout: Duration::from_millis(300),
            incremental,
            ..ExternalSolverConfig::new(fake.command(py, "hang"))
        };
        let mut oracle = ExternalProcess::new(config);
        let verdict = check(&mut oracle, &query).unwrap();
        assert!(matches!(verdict, OracleVerdict::Unknown(_)), "{verdict:?}");
    }
}

#[test]
fn missing_solver_is_unknown() {
    let mut g = TermGraph::new();
    let (assumptions, goal) = plus_one_query(&mut g);
    let tables = ArrayTables::new();
    let query = Query::new(&g, &tables, assumptions, goal);
    let mut oracle = ExternalProcess::new(ExternalSolverConfig::new("/nonexistent/solver -in"));
    assert!(matches!(
        check(&mut oracle, &query).unwrap(),
        OracleVerdict::Unknown(_)
    ));
}

fn z3() -> Option<&'static str> {
    let found = ["/usr/local/bin/z3", "/usr/bin/z3"]
        .into_iter()
        .find(|p| Path::new(p).exists());
    found.or_else(|| {
        Command::new("z3")
            .arg("-version")
            .output()
            .is_ok_and(|o| o.status.success())
            .then_some("z3")
    })
}

#[test]
fn z3_decides_small_queries() {
    let Some(z3) = z3() else { return };
    let command = format!("{z3} -in");
    let mut g = TermGraph::new();
    let (assumptions, goal) = plus_one_query(&mut g);
    let x = g.lookup_symbol("x").unwrap();
    let tables = ArrayTables::new();
    let mut oracle = ExternalProcess::new(ExternalSolverConfig::new(command));
    match check(&mut oracle, &Query::new(&g, &tables, assumptions, goal)).unwrap() {
        OracleVerdict::Sat(m) => {
            assert_eq!(m.get(x), Some(&Value::Bv(BitVecValue::from_u64(5, 4))))
        }
        other => panic!("expected sat, got {other:?}"),
    }
    // Same assumptions, so the incremental session is reused.
    let y = g.mk_var("y", Sort::BitVec(4)).unwrap();
    let xy = g.mk(Op::Mul, &[x, y]).unwrap();
    let yx = g.mk(Op::Mul, &[y, x]).unwrap();
    let differ = g.mk_distinct(xy, yx).unwrap();
    assert_eq!(
        check(&mut oracle, &Query::new(&g, &tables, assumptions, differ)).unwrap(),
        OracleVerdict::Unsat
    );
    assert!(oracle.is_incremental());
}

#[test]
fn z3_reads_tables_as_array_constraints() {
    let Some(z3) = z3() else { return };
    let mut g = TermGraph::new();
    let sort = Sort::Array {
        index: 2,
        element: 4,
    };
    let t = g.mk_var("t", sort).unwrap();
    let i = g.mk_var("i", Sort::BitVec(2)).unwrap();
    let entries = (0..4)
        .map(|k| (BitVecValue::from_u64(k, 2), BitVecValue::from_u64(k * 3, 4)))
        .collect();
    let table = wordsweep::array::ConstArrayTable::new(t, 2, 4, entries, None);
    let mut tables = ArrayTables::new();
    tables.insert(t, std::sync::Arc::new(table));
    let read = g.mk(Op::Read, &[t, i]).unwrap();
    let nine = g.mk_const(BitVecValue::from_u64(9, 4));
    let goal = g.mk_eq(read, nine).unwrap();
    let truth = g.mk_bool(true);
    let mut oracle = ExternalProcess::new(ExternalSolverConfig::new(format!("{z3} -in")));
    match check(&mut oracle, &Query::new(&g, &tables, truth, goal)).unwrap() {
        OracleVerdict::Sat(m) => {
            assert_eq!(m.get(i), Some(&Value::Bv(BitVecValue::from_u64(3, 2))))
        }
        other => panic!("expected sat, got {other:?}"),
    }
}
