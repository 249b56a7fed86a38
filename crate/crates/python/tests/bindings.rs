use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module(code: &std::ffi::CStr) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "second_opinion").unwrap();
        second_opinion::register(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("so", m).unwrap();
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn fit_and_influence_from_python() {
    with_module(
        c"
ds = so.Dataset.synthetic(3, 40, 2, [1.0, -1.0], [[0.5, 0], [-0.5, 0], [0, 0.5]], 0.05, 1)
rows, labels, labelers = ds.long_format()
m = so.fit_logistic(rows, labels, lam=1e-3)
assert m.converged and len(m.theta) == 3
engine = so.InfluenceEngine(m, rows, labels, labelers, 3)
vals = engine.influence([0.2, 0.3])
assert set(vals) == {0, 1, 2}
fd = so.finite_difference_influence(rows, labels, labelers, [0.2, 0.3], 0, lam=1e-3)
assert abs(fd - vals[0]) <= 1e-2 * abs(vals[0]) + 1e-6
",
    );
}

#[test]
fn policies_from_python() {
    with_module(
        c"
assert so.influence_always({0: -0.3, 1: 0.1, 2: -0.05}, 1) == 0
assert so.influence_signed({0: -0.01, 1: -0.4}, 1) == 1
assert so.influence_signed({0: 0.0}, 0) is None
assert so.indep_threshold({0: 0.3, 1: 0.45}, 1, 0.5) == 0
assert so.random_baseline([4], 1, 'c', 0) == 4
",
    );
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(
        c"
try:
    so.fit_logistic([[0.0], [1.0]], [0, 1], lam=-1.0)
    raise SystemExit('accepted negative lambda')
except ValueError:
    pass
try:
    so.Dataset.from_csv('/nonexistent/panel.csv', ['a', 'b'])
    raise SystemExit('loaded a missing file')
except OSError:
    pass
",
    );
}
