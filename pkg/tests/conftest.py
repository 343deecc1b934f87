import numpy as np
import pytest

from featcast.layers import Network, sparse_xent
from featcast.rng import substream

# acceptance tolerance for gradient checks: 1e-4 relative with a 1e-7 floor
GRAD_RTOL = 1e-4
GRAD_ATOL = 1e-7
FD_H = 1e-5


def grads_match(analytic: float, numeric: float) -> bool:
    return abs(analytic - numeric) <= GRAD_ATOL + GRAD_RTOL * max(abs(analytic), abs(numeric))


def check_network_gradients(net: Network, x: np.ndarray, labels: np.ndarray, rng, samples: int = 15):
    """Compare every layer's analytic weight gradients with central differences."""
    net.zero_grad()
    logits = net.forward(x, training=True)
    _, dlogits = sparse_xent(logits, labels)
    net.backward(dlogits)
    failures = []
    for name, w, g in net.params():
        flat, gflat = w.ravel(), g.ravel()
        picks = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + FD_H
            lp, _ = sparse_xent(net.forward(x, True), labels)
            flat[i] = orig - FD_H
            lm, _ = sparse_xent(net.forward(x, True), labels)
            flat[i] = orig
            numeric = (lp - lm) / (2 * FD_H)
            if not grads_match(gflat[i], numeric):
                failures.append((name, int(i), float(gflat[i]), float(numeric)))
    assert not failures, f"gradient mismatches: {failures[:5]}"


@pytest.fixture
def rng():
    return substream(12345, "tests")


_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and "test_criterion" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        if report.when == "call":
            _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"
        elif report.when == "setup" and (report.failed or report.skipped):
            _ACCEPTANCE_RESULTS[name] = "FAIL" if report.failed else "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        label = name.replace("test_criterion_", "criterion ").replace("_", " ")
        terminalreporter.write_line(f"{label}: {_ACCEPTANCE_RESULTS[name]}")
