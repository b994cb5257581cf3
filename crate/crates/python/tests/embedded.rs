use pyo3::ffi::c_str;
use pyo3::prelude::*;

use cluster_dcg_py::cluster_dcg_py as module;

fn with_module(code: &std::ffi::CStr) {
    pyo3::append_to_inittab!(module);
    Python::initialize();
    Python::attach(|py| {
        if let Err(e) = py.run(code, None, None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn bindings_from_embedded_interpreter() {
    with_module(c_str!(
        r#"
import cluster_dcg_py as d
net = d.Network([2, 2], [(0, 1), (2, 3), (1, 2)])
sc = net.spectral_constants()
assert abs(sc["sigma2_agg"] - 2.0) < 1e-12
assert net.check_assumption(1.0, 1.0)["full"]["rhs"] > 0
obj = d.Objective.random(4, 1, 3, seed=2)
run = d.run_discrete(net, obj, 100, track=[0, 3])
assert run["k"][0] == 1 and run["k"][-1] == 100
assert len(run["gaps"]) == 2
traj = d.integrate(net, obj, 3.0, dt=1e-3, sample_every=500, gamma="zero")
assert traj["v_ex"][0] == 0.0 and traj["v_ey"][0] == 0.0
try:
    d.integrate(net, obj, 3.0, gamma="bogus")
except ValueError:
    pass
else:
    raise AssertionError("bad schedule accepted")
"#
    ));
}
