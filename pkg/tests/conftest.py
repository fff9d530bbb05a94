"""Shared test machinery.

Two pieces live here: the central finite-difference oracle used by every
gradient test, and the reporting hook that prints one PASS/FAIL/SKIP
line per acceptance criterion at the end of the run.

Finite differences use step 1e-5 and compare per parameter array:
max-norm of (analytic - numeric) over max-norm of either, floored at
1e-8, must stay below 1e-4.  The tolerances assume 64-bit floats.
"""

import numpy as np
import pytest


def fd_gradients(loss_fn, arrays, step=1e-5):
    """Central differences of the scalar ``loss_fn()`` with respect to
    each array, perturbing entries in place."""
    grads = []
    for arr in arrays:
        flat = arr.ravel()
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn()
            flat[i] = orig - step
            lo = loss_fn()
            flat[i] = orig
            g[i] = (hi - lo) / (2.0 * step)
        grads.append(g.reshape(arr.shape))
    return grads


def assert_grads_close(analytic, numeric, rel_tol=1e-4, floor=1e-8):
    assert len(analytic) == len(numeric)
    for k, (a, n) in enumerate(zip(analytic, numeric)):
        assert a.shape == n.shape
        denom = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), floor)
        err = np.abs(a - n).max(initial=0.0) / denom
        assert err < rel_tol, f"array {k}: relative gradient error {err:.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# ---------------------------------------------------------------------------
# acceptance-criterion reporting

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(num, name): marks a test as one acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    num, name = marker.args
    if rep.when == "call":
        _RESULTS[num] = (name, "PASS" if rep.passed else "FAIL")
    elif rep.when == "setup" and rep.skipped:
        _RESULTS[num] = (name, "SKIP")
    elif rep.when == "setup" and rep.failed:
        _RESULTS[num] = (name, "FAIL")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_RESULTS):
        name, status = _RESULTS[num]
        terminalreporter.write_line(f"criterion {num} ({name}): {status}")
