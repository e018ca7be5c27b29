use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

#[test]
fn module_round_trip() {
    Python::attach(|py| {
        let module = wrap_pymodule!(stratum_py::stratum_module)(py);
        let locals = PyDict::new(py);
        locals.set_item("stratum", module).unwrap();
        py.run(
            c"
labels, m = stratum.generate([0.8, 0.85, 0.9], 0.3, 500, seed=3)
c = stratum.Combiner.train(m, labels, epochs=20)
assert all(w >= 0 for w in c.weights)
assert len(c.predict(m)) == 500
assert stratum.decide('max', [0.2, 0.7]) == (0, 0.7 / (0.7 + 0.8))
try:
    stratum.hybrid_predict(m, 'M3', ['M1'], 1.2)
    raise AssertionError('theta accepted')
except stratum.ConstraintError:
    pass
try:
    stratum.Matrix.load(['/nonexistent/x.csv'], ['x'])
    raise AssertionError('missing file accepted')
except OSError:
    pass
",
            None,
            Some(&locals),
        )
        .unwrap();
    });
}
