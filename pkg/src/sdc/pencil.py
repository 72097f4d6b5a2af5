"""Structural analysis of the matrix pair (E, A).

Regularity, the block-rank solvability criterion, matrix index, Drazin
inverse, impulse-freeness and the Weierstrass decomposition
``Q E P = diag(I, N)``, ``Q A P = diag(W, I)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .errors import IllConditioned, NotRegular, ValidationError
from .polynomial import Polynomial

TOL_RANK = 1e-10
TOL_DECOMP = 1e-8
COND_MAX = 1e8
SHIFT_CANDIDATES = (0.0, 1.0, -1.0, 2.0, -2.0, 0.5, -0.5)


@dataclass(frozen=True)
class DescriptorSystem:
    """``E x' = A x + b u(t) + d u(t - h)``, ``y = c^T x``."""

    E: np.ndarray
    A: np.ndarray
    b: np.ndarray
    d: np.ndarray
    c: np.ndarray
    h: float = 1.0

    def __post_init__(self):
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = E.shape[0]
        if E.shape != (n, n) or A.shape != (n, n):
            raise ValidationError(f"E and A must be square of equal size, got {E.shape} and {A.shape}")
        vecs = {}
        for name in ("b", "d", "c"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (n,):
                raise ValidationError(f"{name} must have length {n}, got {v.shape[0]}")
            vecs[name] = v
        for name, arr in (("E", E), ("A", A), *vecs.items()):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} has non-finite entries")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValidationError("delay h must be positive and finite")
        for name, arr in (("E", E), ("A", A), *vecs.items()):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "h", float(self.h))

    @property
    def n(self) -> int:
        return self.E.shape[0]


@dataclass(frozen=True)
class WeierstrassForm:
    P: np.ndarray
    Q: np.ndarray
    W: np.ndarray
    N: np.ndarray
    alpha1: np.ndarray
    beta1: np.ndarray
    gamma1: np.ndarray
    alpha2: np.ndarray
    beta2: np.ndarray
    gamma2: np.ndarray
    n1: int
    n2: int
    ell: int
    shift: float = 0.0
    residuals: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def Wbar(self) -> np.ndarray:
        return linalg.block_diag(self.W, self.N) if self.n else np.zeros((0, 0))

    @property
    def gamma(self) -> np.ndarray:
        return np.concatenate([self.gamma1, self.gamma2])

    @property
    def w_invertible(self) -> bool:
        if self.n1 == 0:
            return True
        return bool(np.linalg.svd(self.W, compute_uv=False)[-1] > TOL_RANK * max(1.0, np.linalg.norm(self.W, 2)))

    def to_weierstrass(self, v):
        """Split ``Q v`` into its slow and fast blocks."""
        w = self.Q @ np.asarray(v, dtype=float)
        return w[: self.n1], w[self.n1 :]


class Regularity(NamedTuple):
    regular: bool
    M: Polynomial


def numerical_rank(M, tol: float = TOL_RANK, scale: float | None = None) -> int:
    """Count singular values above ``tol * scale`` (``scale`` defaults to sigma_max)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    ref = sv[0] if scale is None else scale
    return int(np.sum(sv > tol * ref))


def _det_scale(E, A, n):
    return max(np.linalg.norm(E, 2), np.linalg.norm(A, 2)) ** n


def check_regularity(sys: DescriptorSystem, tol: float = TOL_RANK) -> Regularity:
    """Interpolate ``det(sE - A)`` from ``n + 1`` Chebyshev samples.

    The pencil is regular iff some coefficient exceeds ``tol`` relative to
    ``max(|E|, |A|)**n``; coefficients below that level are trimmed.
    """
    E, A, n = sys.E, sys.A, sys.n
    scale = _det_scale(E, A, n)
    if scale == 0.0:
        return Regularity(False, Polynomial())
    # sample radius follows the ratio of the two matrices so s E and A are comparable
    ne, na = np.linalg.norm(E, 2), np.linalg.norm(A, 2)
    radius = 1.0 if ne == 0.0 else max(1.0, na / ne)
    k = np.arange(n + 1)
    nodes = radius * np.cos((2 * k + 1) * np.pi / (2 * (n + 1)))
    dets = np.array([np.linalg.det(s * E - A) for s in nodes])
    V = np.vander(nodes, n + 1, increasing=True)
    coeffs = np.linalg.solve(V, dets)
    thresh = tol * scale
    big = np.nonzero(np.abs(coeffs) > thresh)[0]
    if big.size == 0:
        return Regularity(False, Polynomial())
    coeffs = coeffs[: big[-1] + 1].copy()
    coeffs[np.abs(coeffs) <= thresh] = 0.0
    return Regularity(True, Polynomial(coeffs, trim_tol=0.0))


def solvability_matrix(E, A) -> np.ndarray:
    """The ``(n+1) n x n^2`` lower block-bidiagonal matrix with ``E`` on the
    diagonal and ``A`` below it."""
    E, A = np.asarray(E, dtype=float), np.asarray(A, dtype=float)
    n = E.shape[0]
    S = np.zeros(((n + 1) * n, n * n))
    for j in range(n):
        S[j * n : (j + 1) * n, j * n : (j + 1) * n] = E
        S[(j + 1) * n : (j + 2) * n, j * n : (j + 1) * n] = A
    return S


def solvability_rank_test(sys: DescriptorSystem, tol: float = TOL_RANK) -> bool:
    n = sys.n
    return numerical_rank(solvability_matrix(sys.E, sys.A), tol) == n * n


def index_of(E, tol: float = TOL_RANK) -> int:
    """Smallest ``k`` with ``rank(E^k) == rank(E^(k+1))`` (``E^0 = I``).

    The rank of ``E^k`` is measured against ``sigma_max(E)^k`` so that
    round-off in high powers of a nilpotent part is not mistaken for rank.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    n = E.shape[0]
    if n == 0:
        return 0
    smax = np.linalg.norm(E, 2)
    ranks = [n]
    Ek = np.eye(n)
    for k in range(1, n + 2):
        Ek = Ek @ E
        ranks.append(numerical_rank(Ek, tol, smax**k) if smax > 0 else 0)
        if ranks[-1] == ranks[-2]:
            return k - 1
    return n


def nilpotency_index(N, tol: float = TOL_RANK) -> int:
    """Index of a nilpotent block whose natural scale is one (it sits next to
    an identity block in the pencil)."""
    N = np.atleast_2d(np.asarray(N, dtype=float))
    n = N.shape[0]
    if n == 0:
        return 0
    Nk = np.eye(n)
    for k in range(1, n + 1):
        Nk = Nk @ N
        if numerical_rank(Nk, tol, 1.0) == 0:
            return k
    return n


def _ordered_schur_split(M, n_big):
    """Real Schur form with the ``n_big`` largest-modulus eigenvalues leading."""
    n = M.shape[0]
    if n_big in (0, n):
        T, U = linalg.schur(M, output="real")
        return T, U
    ev = np.sort(np.abs(linalg.eigvals(M)))[::-1]
    thresh = 0.5 * (ev[n_big - 1] + ev[n_big])
    T, U, sdim = linalg.schur(M, output="real", sort=lambda re, im: np.hypot(re, im) > thresh)
    if sdim != n_big:
        raise IllConditioned(f"eigenvalue split produced {sdim} leading values, expected {n_big}")
    return T, U


def _block_diagonalize(T, U, k):
    """``V`` with ``V^{-1} (U T U^T) V = diag(T11, T22)``."""
    n = T.shape[0]
    if k in (0, n):
        return U.copy(), T[:k, :k], T[k:, k:]
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    X = linalg.solve_sylvester(T11, -T22, -T12)
    V = U @ np.block([[np.eye(k), X], [np.zeros((n - k, k)), np.eye(n - k)]])
    return V, T11, T22


def drazin_inverse(E, tol: float = TOL_RANK) -> np.ndarray:
    """Drazin inverse through the core-nilpotent splitting ``E = V diag(C, N) V^{-1}``."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    n = E.shape[0]
    if n == 0:
        return E.copy()
    k = index_of(E, tol)
    if k == 0:
        return np.linalg.inv(E)
    smax = np.linalg.norm(E, 2)
    core = numerical_rank(np.linalg.matrix_power(E, k), tol, smax**k) if smax > 0 else 0
    if core == 0:
        return np.zeros_like(E)
    T, U = _ordered_schur_split(E, core)
    V, C, _ = _block_diagonalize(T, U, core)
    D = np.zeros_like(E)
    D[:core, :core] = np.linalg.inv(C)
    return V @ D @ np.linalg.inv(V)


def weierstrass_decompose(sys: DescriptorSystem, tol: float = TOL_DECOMP, tol_rank: float = TOL_RANK,
                          cond_max: float = COND_MAX) -> WeierstrassForm:
    """Weierstrass canonical form of a regular pencil.

    With ``c`` a shift where ``cE - A`` is best conditioned, the matrix
    ``(cE - A)^{-1} E`` has the finite pencil eigenvalues at ``1/(c - lambda)``
    and the infinite ones at zero.  An ordered real Schur form separates the
    two groups, a Sylvester solve block-diagonalizes, and the blocks are
    rescaled to ``diag(I, N)`` / ``diag(W, I)``.
    """
    reg = check_regularity(sys, tol_rank)
    if not reg.regular:
        raise NotRegular("pencil (E, A) is singular; no Weierstrass form exists")
    E, A, n = sys.E, sys.A, sys.n
    n1 = int(reg.M.degree)
    n2 = n - n1

    dets = [abs(np.linalg.det(c * E - A)) for c in SHIFT_CANDIDATES]
    shift = SHIFT_CANDIDATES[int(np.argmax(dets))]
    K = shift * E - A
    Kinv = np.linalg.inv(K)
    Ehat = Kinv @ E

    T, U = _ordered_schur_split(Ehat, n1)
    V, T11, T22 = _block_diagonalize(T, U, n1)
    Vinv = np.linalg.inv(V)
    Q0 = Vinv @ Kinv
    if n1:
        T11inv = np.linalg.inv(T11)
        W = shift * np.eye(n1) - T11inv
    else:
        T11inv = np.zeros((0, 0))
        W = np.zeros((0, 0))
    if n2:
        G = np.linalg.inv(shift * T22 - np.eye(n2))
        N = G @ T22
    else:
        G = np.zeros((0, 0))
        N = np.zeros((0, 0))
    Q = linalg.block_diag(T11inv, G) @ Q0 if n else Q0
    Pm = V

    ell = nilpotency_index(N, tol_rank) if n2 else 0
    if n2 and ell <= 1:
        N = np.zeros((n2, n2))

    for name, M in (("P", Pm), ("Q", Q)):
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > cond_max:
            raise IllConditioned(f"cond({name}) = {cond:.3g} exceeds {cond_max:.3g}")

    I1 = np.eye(n1)
    I2 = np.eye(n2)
    resE = np.linalg.norm(Q @ E @ Pm - linalg.block_diag(I1, N), "fro")
    resA = np.linalg.norm(Q @ A @ Pm - linalg.block_diag(W, I2), "fro")
    limE = tol * (1.0 + np.linalg.norm(E, "fro"))
    limA = tol * (1.0 + np.linalg.norm(A, "fro"))
    if resE > limE or resA > limA:
        raise IllConditioned(f"decomposition residuals {resE:.3g}, {resA:.3g} exceed tolerance")

    alpha = Q @ sys.b
    beta = Q @ sys.d
    gamma = Pm.T @ sys.c
    return WeierstrassForm(
        P=Pm,
        Q=Q,
        W=W,
        N=N,
        alpha1=alpha[:n1],
        beta1=beta[:n1],
        gamma1=gamma[:n1],
        alpha2=alpha[n1:],
        beta2=beta[n1:],
        gamma2=gamma[n1:],
        n1=n1,
        n2=n2,
        ell=ell,
        shift=float(shift),
        residuals={"E": float(resE), "A": float(resA)},
    )


def pencil_index(sys: DescriptorSystem, tol: float = TOL_RANK) -> int:
    """Index of the pencil, computed as ``index_of((cE - A)^{-1} E)``.

    Coincides with ``index_of(E)`` whenever ``E`` and ``A`` are brought to
    canonical form by a similarity (``Q = P^{-1}``), e.g. ``A = I``.
    """
    dets = [abs(np.linalg.det(c * sys.E - sys.A)) for c in SHIFT_CANDIDATES]
    shift = SHIFT_CANDIDATES[int(np.argmax(dets))]
    return index_of(np.linalg.solve(shift * sys.E - sys.A, sys.E), tol)


def is_impulse_free(sys: DescriptorSystem, tol: float = TOL_RANK) -> bool:
    """``rank(E) == deg det(sE - A)``; cross-checked against ``ell <= 1``."""
    reg = check_regularity(sys, tol)
    if not reg.regular:
        raise NotRegular("impulse-freeness is defined for regular pencils only")
    by_rank = numerical_rank(sys.E, tol) == reg.M.degree
    by_index = pencil_index(sys, tol) <= 1
    if by_rank != by_index:
        raise IllConditioned(
            "rank test and nilpotent-block test disagree on impulse-freeness; pencil is near a boundary"
        )
    return by_rank
