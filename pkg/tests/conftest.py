from __future__ import annotations

import numpy as np
import pytest

from sppsel import Chain, ModelSpec, PointPattern, Region, Theta


@pytest.fixture
def unit():
    return Region()


@pytest.fixture
def two_sample():
    """Homogeneous chain {lambda0=1, lambda0=2} with one event."""
    pattern = PointPattern(np.array([[0.3, 0.6]]), Region())
    spec = ModelSpec.homogeneous(0)
    chain = Chain.from_samples(spec, [Theta(1.0), Theta(2.0)])
    return pattern, spec, chain


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: (int(k.split()[0]), k)):
        ok, detail = RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} - {detail}")
