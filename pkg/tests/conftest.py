import numpy as np
import pytest

from pdmp.model import ModelSpec


def relax4_model(mu=4.0, gamma=1e-3):
    """Four relaxation states A_s = -gamma x + W_s, W = (1, -1, 2, -2), uniform jumps."""
    drifts = [f"-{gamma!r}*x + {W}" for W in (1, -1, 2, -2)]
    return ModelSpec.uniform([d.replace("+ -", "- ") for d in drifts], mu)


def telegraph(mu=1.0):
    return ModelSpec(("-x + 1", "-x - 1"), [mu, mu], [[0.0, 1.0], [1.0, 0.0]])


def random_stochastic(rng, S):
    """Column-stochastic matrix; some columns get exact zeros and self-jumps."""
    q = rng.random((S, S)) * (rng.random((S, S)) > 0.3)
    q[rng.integers(S), :] += 1e-3
    return q / q.sum(axis=0)


def naive_upwind_step(F, A, Q, dt, dx, pi):
    """Node-by-node evaluation of the upwind update; independent of the vectorised solver."""
    S, K = F.shape
    out = np.empty_like(F)

    def val(l, k):
        if k < 0:
            return 0.0
        if k >= K:
            return pi[l]
        return F[l, k]

    for l in range(S):
        for k in range(K):
            nu = 1 if A[l, k] < 0 else 0
            transport = -A[l, k] * (val(l, k + nu) - val(l, k + nu - 1)) / dx
            switching = sum(Q[l, s] * F[s, k] for s in range(S))
            out[l, k] = F[l, k] + dt * (transport + switching)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------- acceptance report

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and not report.failed):
        return
    entry = _criteria.setdefault(mark.args[0], {"title": mark.args[1], "ok": True, "notes": []})
    entry["ok"] = entry["ok"] and report.passed
    entry["notes"] += [v for k, v in item.user_properties if k == "observed" and v not in entry["notes"]]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        line = f"criterion {n:>2} {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        if e["notes"]:
            line += "  [" + "; ".join(e["notes"]) + "]"
        terminalreporter.write_line(line)
