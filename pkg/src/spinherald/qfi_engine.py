"""Quantum Fisher information on the nematic generator ``G = Q_xx - Q_yy``.

States of interest are diagonal mixtures of extremal Dicke states,
``rho = sum_S p_S |S,-S><S,-S|`` (or the ``|S,+S>`` family). Only ``G``'s
action on that family is needed: the diagonal ``<G^2>_S`` and the cross
elements ``<S,-S|G|S+2,-S-2>``; every other pair vanishes because ``G``
shifts the magnetization by exactly +-2. With ``F_S = 4 <G^2>_S`` the mixed
QFI reduces to

    F(rho) = sum_S p_S F_S - 16 sum_S p_S p_{S+2} / (p_S + p_{S+2}) |G_{S,S+2}|^2,

which is the eigen-sum formula with the kernel of ``rho`` summed in closed
form.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sps

from .fock_basis import (
    CollectiveState,
    SymmetricBasis,
    build_basis,
    highest_weight_state,
    lowest_weight_amplitudes,
    lowest_weight_state,
)
from .spin_decomposition import decompose

ORIENTATIONS = ("lowest", "highest")
_NORM_TOL = 1e-12


def qfi_pure(state: CollectiveState, G) -> float:
    """``4 (<G^2> - <G>^2)`` for a normalized pure state."""
    psi = state.amplitudes
    if G.shape != (len(psi), len(psi)):
        raise ValueError(f"generator shape {G.shape} does not match state dimension {len(psi)}")
    g_psi = G @ psi
    mean = np.vdot(psi, g_psi).real
    second = np.vdot(g_psi, g_psi).real
    return max(4.0 * (second - mean * mean), 0.0)


@dataclass(frozen=True)
class ExtremalTable:
    """``F_S`` and ``G_{S,S+2}`` for every ``S`` of the parity of ``N``.

    Arrays are indexed by ``S`` (length ``N+1``); opposite-parity entries are 0.
    ``cross[S]`` holds ``<S,-S|G|S+2,-(S+2)>``.
    """

    N: int
    qfi: np.ndarray
    cross: np.ndarray


@lru_cache(maxsize=512)
def extremal_table(N: int) -> ExtremalTable:
    """Closed-form G matrix elements on the pair-construction amplitudes.

    On ``|S,-S>`` with support ``(j, N-S-2j, S+j)``, ``b+^dag b-`` carries
    ``sqrt((j+1)(S+j))`` and ``b-^dag b+`` carries ``sqrt(j(S+j+1))``.
    """
    qfi = np.zeros(N + 1)
    cross = np.zeros(N + 1)
    amps = {S: lowest_weight_amplitudes(N, S) for S in range(N % 2, N + 1, 2)}
    for S, a in amps.items():
        j = np.arange(len(a), dtype=float)
        qfi[S] = 16.0 * np.sum(a * a * ((j + 1) * (S + j) + j * (S + j + 1)))
        if S + 2 <= N:
            b = amps[S + 2]
            jj = np.arange(len(b), dtype=float)
            cross[S] = 2.0 * np.sum(a[1:] * b * np.sqrt((jj + 1) * (S + 2 + jj)))
    qfi.flags.writeable = False
    cross.flags.writeable = False
    return ExtremalTable(N, qfi, cross)


def extremal_qfi(N: int, S: int) -> float:
    """QFI of the pure state ``|S,-S>`` (equal to that of ``|S,+S>``)."""
    if (N - S) % 2 or not 0 <= S <= N:
        raise ValueError(f"no extremal state with S={S} for N={N}")
    return float(extremal_table(N).qfi[S])


@dataclass(frozen=True)
class DiagonalSpinMixture:
    """``sum_S p_S |S,-+S><S,-+S|`` with weights indexed by ``S = 0..N``."""

    N: int
    weights: np.ndarray
    orientation: str = "lowest"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.N + 1,):
            raise ValueError(f"weights must have length N+1={self.N + 1}")
        if np.any(w < 0):
            raise ValueError("mixture weights must be nonnegative")
        if abs(w.sum() - 1.0) > _NORM_TOL:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        object.__setattr__(self, "weights", w)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    @classmethod
    def pure(cls, N: int, S: int, orientation: str = "lowest") -> "DiagonalSpinMixture":
        w = np.zeros(N + 1)
        w[S] = 1.0
        return cls(N, w, orientation)

    def density_matrix(self, basis: SymmetricBasis | None = None) -> np.ndarray:
        """Dense ``rho`` in the symmetric basis (small N only)."""
        basis = basis or build_basis(self.N)
        make = lowest_weight_state if self.orientation == "lowest" else highest_weight_state
        rho = np.zeros((basis.dim, basis.dim), dtype=complex)
        for S in self.support:
            psi = make(basis, int(S)).amplitudes
            rho += self.weights[S] * np.outer(psi, psi.conj())
        return rho


def _pair_sum(p: np.ndarray, cross: np.ndarray) -> float:
    lo, hi = p[:-2], p[2:]
    total = lo + hi
    mask = (lo > 0) & (hi > 0)
    return float(np.sum(16.0 * lo[mask] * hi[mask] / total[mask] * cross[:-2][mask] ** 2))


def qfi_mixed_diagonal(mixture: DiagonalSpinMixture, G=None) -> float:
    """Mixed-state QFI of a diagonal extremal mixture.

    With ``G=None`` the generator is ``Q_xx - Q_yy`` and the cached closed-form
    table is used. Any other hermitian generator (sparse or dense, on the
    symmetric basis of ``mixture.N``) is handled by building the support
    states explicitly.
    """
    p = mixture.weights
    if G is None:
        table = extremal_table(mixture.N)
        bad = (p > 0) & ((np.arange(mixture.N + 1) - mixture.N) % 2 == 1)
        if np.any(bad):
            raise ValueError("mixture has weight on spin lengths absent from the symmetric space")
        value = float(np.dot(p, table.qfi)) - _pair_sum(p, table.cross)
        return max(value, 0.0)

    basis = build_basis(mixture.N)
    make = lowest_weight_state if mixture.orientation == "lowest" else highest_weight_state
    support = [int(S) for S in mixture.support]
    vecs = np.array([make(basis, S).amplitudes for S in support]).T
    g_vecs = G @ vecs
    if sps.issparse(g_vecs):
        g_vecs = g_vecs.toarray()
    g_sq = np.einsum("ij,ij->j", g_vecs.conj(), g_vecs).real
    gm = vecs.conj().T @ g_vecs
    w = p[support]
    # support-kernel terms in closed form, support-support terms from the eigen-sum
    value = 4.0 * np.sum(w * (g_sq - np.sum(np.abs(gm) ** 2, axis=0)))
    wi, wj = w[:, None], w[None, :]
    value += 2.0 * np.sum((wi - wj) ** 2 / (wi + wj) * np.abs(gm) ** 2)
    return max(float(value), 0.0)


def average_qfi_ideal(N: int) -> float:
    """Population-weighted mean of ``F(|S,-S>)`` over the initial spin-length distribution."""
    return float(np.dot(decompose(N).populations, extremal_table(N).qfi))


@dataclass(frozen=True)
class PowerLawFit:
    prefactor: float
    exponent: float
    residual: float
    n_points: int

    def __call__(self, N):
        return self.prefactor * np.asarray(N, dtype=float) ** self.exponent


def fit_power_law(points) -> PowerLawFit:
    """Least squares of ``log(value) = log(a) + b log(N)``; residual is the RMS in log space."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least 3 (N, value) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs strictly positive N and values")
    A = np.column_stack([np.ones_like(x), np.log(x)])
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    resid = np.log(y) - A @ coef
    return PowerLawFit(float(np.exp(coef[0])), float(coef[1]), float(np.sqrt(np.mean(resid**2))), len(x))
