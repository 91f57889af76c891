"""Permutation-symmetric Hilbert space of N spin-1 atoms.

Basis states are occupation triples ``(n_plus, n_zero, n_minus)`` counting the
atoms in ``m = +1, 0, -1``. Collective one-body operators are written in mode
form, ``sum_ab q_ab b_a^dag b_b``, and stored as ``scipy.sparse`` CSR matrices.

Mode index convention used throughout: 0 -> m=+1, 1 -> m=0, 2 -> m=-1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.sparse as sps

MAX_ATOMS = 2000

AXES = ("x", "y", "z")


class BasisSizeError(ValueError):
    """Requested atom number is outside the supported range."""


class OccupationTriple(NamedTuple):
    n_plus: int
    n_zero: int
    n_minus: int


# single spin-1 matrices in the (+1, 0, -1) ordering
_SP1 = np.sqrt(2.0) * np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=complex)
_SM1 = _SP1.conj().T
SPIN1 = {
    "x": (_SP1 + _SM1) / 2,
    "y": (_SP1 - _SM1) / 2j,
    "z": np.diag([1.0, 0.0, -1.0]).astype(complex),
}


@dataclass(frozen=True)
class SymmetricBasis:
    """Canonical lexicographic enumeration of occupation triples for ``N`` atoms."""

    N: int
    n_plus: np.ndarray = field(repr=False)
    n_zero: np.ndarray = field(repr=False)

    @property
    def n_minus(self) -> np.ndarray:
        return self.N - self.n_plus - self.n_zero

    @property
    def dim(self) -> int:
        return len(self.n_plus)

    def __len__(self) -> int:
        return self.dim

    @property
    def states(self) -> list[OccupationTriple]:
        return [
            OccupationTriple(int(p), int(z), int(m))
            for p, z, m in zip(self.n_plus, self.n_zero, self.n_minus)
        ]

    @cached_property
    def magnetization(self) -> np.ndarray:
        return self.n_plus - self.n_minus

    def index(self, n_plus, n_zero, n_minus=None):
        """Dense index of a triple (vectorized over array arguments).

        ``n_minus`` is only used for validation.
        """
        p = np.asarray(n_plus)
        z = np.asarray(n_zero)
        if n_minus is not None and np.any(p + z + np.asarray(n_minus) != self.N):
            raise ValueError("occupations do not sum to N")
        if np.any(p < 0) or np.any(z < 0) or np.any(p + z > self.N):
            raise KeyError(f"triple outside the N={self.N} basis")
        # block for n_plus = p starts after sum_{q<p} (N - q + 1) entries
        offset = p * (self.N + 1) - p * (p - 1) // 2
        idx = offset + z
        return int(idx) if idx.ndim == 0 else idx

    def triple(self, i: int) -> OccupationTriple:
        return OccupationTriple(int(self.n_plus[i]), int(self.n_zero[i]), int(self.N - self.n_plus[i] - self.n_zero[i]))


def build_basis(N: int, max_atoms: int = MAX_ATOMS) -> SymmetricBasis:
    """Enumerate the ``(N+1)(N+2)/2`` symmetric basis states, sorted by (n_plus, n_zero)."""
    if int(N) != N or N < 1:
        raise BasisSizeError(f"atom number must be a positive integer, got {N!r}")
    if N > max_atoms:
        raise BasisSizeError(f"N={N} exceeds the configured ceiling of {max_atoms}")
    N = int(N)
    counts = N + 1 - np.arange(N + 1)
    n_plus = np.repeat(np.arange(N + 1), counts)
    starts = np.cumsum(counts) - counts
    n_zero = np.arange(len(n_plus)) - np.repeat(starts, counts)
    return SymmetricBasis(N, n_plus.astype(np.int64), n_zero.astype(np.int64))


def _occupations(basis: SymmetricBasis) -> np.ndarray:
    return np.stack([basis.n_plus, basis.n_zero, basis.n_minus])


def one_body_operator(basis: SymmetricBasis, q: np.ndarray) -> sps.csr_matrix:
    """Collective operator ``sum_ab q[a, b] b_a^dag b_b`` on the symmetric space."""
    q = np.asarray(q, dtype=complex)
    if q.shape != (3, 3):
        raise ValueError("single-atom matrix must be 3x3")
    occ = _occupations(basis)
    rows, cols, vals = [], [], []
    cols_all = np.arange(basis.dim)
    for a in range(3):
        for b in range(3):
            if q[a, b] == 0:
                continue
            if a == b:
                rows.append(cols_all)
                cols.append(cols_all)
                vals.append(q[a, a] * occ[a])
                continue
            mask = occ[b] > 0
            new = occ[:, mask].copy()
            amp = np.sqrt(new[b] * (new[a] + 1.0))
            new[b] -= 1
            new[a] += 1
            rows.append(basis.index(new[0], new[1]))
            cols.append(cols_all[mask])
            vals.append(q[a, b] * amp)
    if not rows:
        return sps.csr_matrix((basis.dim, basis.dim), dtype=complex)
    op = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim),
    ).tocsr()
    op.sum_duplicates()
    op.eliminate_zeros()
    return op


def collective_spin_ops(basis: SymmetricBasis) -> tuple[sps.csr_matrix, sps.csr_matrix, sps.csr_matrix]:
    """Return ``(Sz, S+, S-)`` with ``S+ = sqrt(2) (b+^dag b0 + b0^dag b-)``."""
    sz = one_body_operator(basis, SPIN1["z"])
    sp = one_body_operator(basis, _SP1)
    sm = sp.conj().T.tocsr()
    return sz, sp, sm


def quadrupole_op(basis: SymmetricBasis, i: str, j: str) -> sps.csr_matrix:
    """Nematic tensor component ``Q_ij = sum_atoms (S_i S_j + S_j S_i) - 4/3 delta_ij``."""
    if i not in AXES or j not in AXES:
        raise ValueError(f"axis labels must be in {AXES}, got {(i, j)!r}")
    q = SPIN1[i] @ SPIN1[j] + SPIN1[j] @ SPIN1[i]
    if i == j:
        q = q - (4.0 / 3.0) * np.eye(3)
    return one_body_operator(basis, q)


def generator_G(basis: SymmetricBasis) -> sps.csr_matrix:
    """``Q_xx - Q_yy = 2 (b+^dag b- + b-^dag b+)``, built directly in mode form."""
    q = np.zeros((3, 3), dtype=complex)
    q[0, 2] = q[2, 0] = 2.0
    return one_body_operator(basis, q)


def total_spin_squared(basis: SymmetricBasis) -> sps.csr_matrix:
    sz, sp, sm = collective_spin_ops(basis)
    s2 = sz @ sz + 0.5 * (sp @ sm + sm @ sp)
    s2.sum_duplicates()
    s2.eliminate_zeros()
    return s2.tocsr()


@dataclass(frozen=True)
class CollectiveState:
    basis: SymmetricBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError("amplitude vector does not match basis dimension")
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized (norm={norm!r})")

    def expect(self, op) -> complex:
        return np.vdot(self.amplitudes, op @ self.amplitudes)


def mirror(state: CollectiveState) -> CollectiveState:
    """Relabel m -> -m (swap the n_plus and n_minus occupations)."""
    b = state.basis
    target = b.index(b.n_minus, b.n_zero)
    amps = np.zeros_like(state.amplitudes)
    amps[target] = state.amplitudes
    return CollectiveState(b, amps)


def _check_spin_length(N: int, S: int) -> None:
    if int(S) != S or S < 0:
        raise ValueError(f"spin length must be a nonnegative integer, got {S!r}")
    if S > N:
        raise ValueError(f"spin length S={S} exceeds N={N}")
    if (N - S) % 2:
        # symmetric N-boson space carries S = N, N-2, ... only
        raise ValueError(f"no symmetric state with S={S} for N={N} (N - S must be even)")


def lowest_weight_amplitudes(N: int, S: int) -> np.ndarray:
    """Real amplitudes ``a_j`` of ``|S,-S>`` on the triples ``(j, N-S-2j, S+j)``.

    Obtained from ``(b0^dag^2 - 2 b+^dag b-^dag)^k (b-^dag)^S |vac>`` with
    ``k = (N-S)/2``, expanded binomially and normalized in log space. The
    ``j = 0`` amplitude is positive.
    """
    _check_spin_length(N, S)
    k = (N - S) // 2
    j = np.arange(k, dtype=float)
    # successive-term ratio |a_{j+1}/a_j|; cumulated in log space to stay finite
    log_ratio = 0.5 * np.log(2 * (k - j) * (S + j + 1) / ((2 * (k - j) - 1) * (j + 1)))
    log_mag = np.concatenate([[0.0], np.cumsum(log_ratio)])
    log_mag -= log_mag.max()
    mag = np.exp(log_mag)
    amps = np.where(np.arange(k + 1) % 2 == 0, mag, -mag)
    return amps / np.linalg.norm(amps)


def lowest_weight_state(basis: SymmetricBasis, S: int, method: str = "pairs") -> CollectiveState:
    """Extremal Dicke state ``|S,-S>``.

    ``method="pairs"`` uses the singlet-pair construction (any N);
    ``method="nullspace"`` takes the kernel of ``S-`` inside the ``M=-S``
    sector with a dense SVD and is meant for small N only.
    """
    N = basis.N
    _check_spin_length(N, S)
    psi = np.zeros(basis.dim, dtype=complex)
    if method == "pairs":
        a = lowest_weight_amplitudes(N, S)
        j = np.arange(len(a))
        psi[basis.index(j, N - S - 2 * j)] = a
    elif method == "nullspace":
        _, _, sm = collective_spin_ops(basis)
        sector = np.flatnonzero(basis.magnetization == -S)
        block = sm[:, sector].toarray()
        _, sv, vh = np.linalg.svd(block)
        vec = vh[-1].conj()
        if len(sv) == len(sector) and sv[-1] > 1e-8:
            raise ValueError(f"S- has no kernel in the M={-S} sector")
        # sector indices are sorted, so vec[0] sits on the lexicographically first triple
        first = np.flatnonzero(np.abs(vec) > 1e-12)[0]
        vec = vec * (abs(vec[first]) / vec[first])
        psi[sector] = vec / np.linalg.norm(vec)
    else:
        raise ValueError(f"unknown method {method!r}")
    return CollectiveState(basis, psi)


def highest_weight_state(basis: SymmetricBasis, S: int, method: str = "pairs") -> CollectiveState:
    """Extremal Dicke state ``|S,+S>``: m -> -m mirror of ``|S,-S>``."""
    return mirror(lowest_weight_state(basis, S, method=method))


def product_state_m0(basis: SymmetricBasis) -> CollectiveState:
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index(0, basis.N)] = 1.0
    return CollectiveState(basis, psi)


def dump_operator(op: sps.spmatrix, path, header: str = "# row col re im") -> None:
    """Write a sparse operator as a plain-text (row, col, re, im) list."""
    coo = sps.coo_matrix(op)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"{header} dim={coo.shape[0]}\n")
        for k in order:
            v = complex(coo.data[k])
            fh.write(f"{coo.row[k]} {coo.col[k]} {v.real!r} {v.imag!r}\n")


def dump_basis(basis: SymmetricBasis, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# index n_plus n_zero n_minus N={basis.N}\n")
        for i, t in enumerate(basis.states):
            fh.write(f"{i} {t.n_plus} {t.n_zero} {t.n_minus}\n")
