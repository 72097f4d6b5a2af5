import json
from pathlib import Path

import numpy as np
import pytest

from sdc.pencil import DescriptorSystem

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"

_ACCEPTANCE_LINES = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"
    _ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


def scenario_doc(name: str) -> dict:
    return json.loads((SCENARIOS / name).read_text())


@pytest.fixture
def s2():
    """E = diag(1, 0), A = diag(-1, 1), b = c = (1, 1), no delayed input."""
    return DescriptorSystem(np.diag([1.0, 0.0]), np.diag([-1.0, 1.0]), [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], 1.0)


@pytest.fixture
def s2_class():
    return DescriptorSystem(np.diag([1.0, 0.0]), np.diag([-1.0, 1.0]), [1.0, 1.0], [0.0, 0.0], [4.0, -1.0], 1.0)


# ---------------------------------------------------------------------------
# random constructions shared by the unit and acceptance tests


def well_conditioned(rng, n, cond=10.0):
    """Random matrix with singular values in ``[1, cond]``."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return U @ np.diag(rng.uniform(1.0, cond, n)) @ V.T


def nilpotent(rng, sizes):
    """Block diagonal nilpotent matrix with Jordan blocks of the given sizes,
    mixed by a well-conditioned similarity."""
    n = sum(sizes)
    J = np.zeros((n, n))
    k = 0
    for m in sizes:
        for i in range(m - 1):
            J[k + i, k + i + 1] = 1.0
        k += m
    if n == 0:
        return J
    T = well_conditioned(rng, n, 3.0)
    return T @ J @ np.linalg.inv(T)


def random_regular_pencil(rng, n1, sizes):
    """``E = Q^{-1} diag(I, N) P^{-1}``, ``A = Q^{-1} diag(W, I) P^{-1}``.

    Returns ``(E, A, ell)`` with ``ell`` the nilpotency index of ``N``.
    """
    n2 = sum(sizes)
    n = n1 + n2
    P = well_conditioned(rng, n)
    Q = well_conditioned(rng, n)
    N = nilpotent(rng, sizes)
    W = rng.standard_normal((n1, n1))
    Pi, Qi = np.linalg.inv(P), np.linalg.inv(Q)
    E = Qi @ np.block([[np.eye(n1), np.zeros((n1, n2))], [np.zeros((n2, n1)), N]]) @ Pi
    A = Qi @ np.block([[W, np.zeros((n1, n2))], [np.zeros((n2, n1)), np.eye(n2)]]) @ Pi
    ell = max(sizes) if sizes else 0
    return E, A, ell


def random_singular_pencil(rng, n):
    """Singular pencil from a common kernel, a common cokernel, or an
    embedded ``L1`` Kronecker block pair."""
    kind = rng.integers(0, 3 if n >= 3 else 2)
    E = rng.standard_normal((n, n))
    A = rng.standard_normal((n, n))
    if kind == 0:
        v = rng.standard_normal(n)
        proj = np.eye(n) - np.outer(v, v) / (v @ v)
        return E @ proj, A @ proj
    if kind == 1:
        w = rng.standard_normal(n)
        proj = np.eye(n) - np.outer(w, w) / (w @ w)
        return proj @ E, proj @ A
    # L1 (1x2) and L1^T (2x1) blocks plus a regular remainder
    Es = np.zeros((n, n))
    As = np.zeros((n, n))
    Es[0, 0], As[0, 1] = 1.0, 1.0
    Es[1, 2], As[2, 2] = 1.0, 1.0
    m = n - 3
    if m:
        Es[3:, 3:] = rng.standard_normal((m, m))
        As[3:, 3:] = rng.standard_normal((m, m))
    P = well_conditioned(rng, n)
    Q = well_conditioned(rng, n)
    return Q @ Es @ P, Q @ As @ P


def random_descriptor(rng, n1, sizes, h=1.0, delayed=True):
    E, A, ell = random_regular_pencil(rng, n1, sizes)
    n = E.shape[0]
    d = rng.standard_normal(n) if delayed else np.zeros(n)
    return DescriptorSystem(E, A, rng.standard_normal(n), d, rng.standard_normal(n), h), ell
