import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ornn.bc_method import build_bc_operators, default_basis  # noqa: E402
from ornn.wave1d import bump_profile, constant_profile, lambda_op  # noqa: E402


@pytest.fixture(scope="session")
def box_ops():
    return build_bc_operators(default_basis())


@pytest.fixture(scope="session")
def flat():
    return constant_profile(1.0, 1.0)


@pytest.fixture(scope="session")
def bump():
    return bump_profile(0.3, 0.5, 0.25, 1.0)


@pytest.fixture(scope="session")
def lam_flat(box_ops, flat):
    return lambda_op(flat, basis=box_ops.basis)


@pytest.fixture(scope="session")
def lam_bump(box_ops, bump):
    return lambda_op(bump, basis=box_ops.basis)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[k]
        terminalreporter.write_line("criterion %2d: %s  %s" % (k, "PASS" if ok else "FAIL", detail))
