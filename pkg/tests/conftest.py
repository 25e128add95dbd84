import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from qcapnet.device_circuit import CTRL, G1, IDLE_GATE, TARG, Circuit, Gate, grid_device, line_device, t_topology  # noqa: E402


@pytest.fixture
def t5():
    return t_topology()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_circuit(device, qubits, depth, rng, cnot_prob=0.5, idle_prob=0.1):
    """Arbitrary valid (not necessarily mirror) circuit over ``qubits``."""
    qubits = tuple(qubits)
    pos = {q: i for i, q in enumerate(qubits)}
    edges = [(a, b) for a, b in sorted(device.edges) if a in pos and b in pos]
    layers = []
    for _ in range(depth):
        layer = [IDLE_GATE if rng.random() < idle_prob else G1[rng.integers(len(G1))] for _ in qubits]
        used = set()
        for k in rng.permutation(len(edges)):
            c, t = edges[k]
            if c in used or t in used or rng.random() > cnot_prob:
                continue
            used.update((c, t))
            layer[pos[c]] = Gate(CTRL, partner=t)
            layer[pos[t]] = Gate(TARG, partner=c)
        layers.append(tuple(layer))
    return Circuit(device, qubits, tuple(layers))


__all__ = ["random_circuit", "grid_device", "line_device"]


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and not report.failed and not report.skipped):
        return
    entry = _CRITERIA.setdefault(mark.args[0], {"ok": True, "details": []})
    if report.failed or report.skipped:
        entry["ok"] = False
    if report.when == "call":
        entry["details"] += [v for k, v in item.user_properties if k == "detail"]
        if hasattr(report, "wasxfail"):
            entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        entry = _CRITERIA[n]
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if entry['ok'] else 'FAIL'}  {detail}".rstrip())
