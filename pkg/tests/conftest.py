import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nwnrc import kernels

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

BACKENDS = ["python"] + (["compiled"] if kernels.HAVE_COMPILED else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def dense_oracle(n_nodes, edges, g, pinned, values):
    """Node voltages from an explicitly assembled dense Laplacian."""
    L = np.zeros((n_nodes, n_nodes))
    for (i, j), gk in zip(edges, g):
        L[i, i] += gk
        L[j, j] += gk
        L[i, j] -= gk
        L[j, i] -= gk
    pinned = list(pinned)
    free = [k for k in range(n_nodes) if k not in pinned]
    v = np.zeros(n_nodes)
    v[pinned] = values
    A = L[np.ix_(free, free)]
    b = -L[np.ix_(free, pinned)] @ np.asarray(values, dtype=float)
    v[free] = np.linalg.solve(A, b)
    return v


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion that ran."""
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}")
