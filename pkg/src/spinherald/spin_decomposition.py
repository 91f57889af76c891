"""Spin-length content of the all-``m=0`` product state.

``|m=0>^N = sum_S c_S |S,0>``, built one atom at a time from the coupling rule

    |S,0> (x) |1,0> = sqrt((S+1)/(2S+1)) |S+1,0> - sqrt(S/(2S+1)) |S-1,0>.

Each coupling path ends in its own (orthogonal) coupled state, so the squared
coefficients are what accumulate from step to step: population flows
``S -> S+1`` with weight ``(S+1)/(2S+1)`` and ``S -> S-1`` with ``S/(2S+1)``.
Every path to a given ``S`` takes exactly ``(N-S)/2`` downward steps, so all of
them carry the sign ``(-1)**((N-S)/2)``; that is the sign reported for ``c_S``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

_DRIFT_TOL = 1e-13


@dataclass(frozen=True)
class SpinLengthDistribution:
    """Populations ``|c_S|^2`` for ``S = 0..N``; the opposite parity is exactly zero."""

    N: int
    populations: np.ndarray

    @property
    def amplitudes(self) -> np.ndarray:
        """Signed ``c_S`` in the sequential-coupling phase convention."""
        S = self.spin_lengths
        sign = np.where(((self.N - S) // 2) % 2 == 0, 1.0, -1.0)
        return sign * np.sqrt(self.populations)

    @property
    def spin_lengths(self) -> np.ndarray:
        return np.arange(self.N + 1)

    @property
    def support(self) -> np.ndarray:
        """Spin lengths with the parity of N."""
        return np.arange(self.N % 2, self.N + 1, 2)

    def __getitem__(self, S: int) -> float:
        return float(self.amplitudes[S])


def racah_step(dist: SpinLengthDistribution) -> SpinLengthDistribution:
    """Couple one more atom in ``m=0`` onto the running superposition."""
    p = dist.populations
    S = np.arange(len(p), dtype=float)
    new = np.zeros(len(p) + 1)
    new[1:] += p * (S + 1) / (2 * S + 1)
    new[:-2] += p[1:] * S[1:] / (2 * S[1:] + 1)
    total = float(new.sum())
    if abs(total - 1.0) > _DRIFT_TOL:
        new /= total
    return SpinLengthDistribution(dist.N + 1, new)


def decompose(N: int) -> SpinLengthDistribution:
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    dist = SpinLengthDistribution(1, np.array([0.0, 1.0]))
    for _ in range(int(N) - 1):
        dist = racah_step(dist)
    return dist


def tail_mass(dist: SpinLengthDistribution, S_cut: int) -> float:
    """Total population strictly above ``S_cut``."""
    if not 0 <= S_cut <= dist.N:
        raise ValueError(f"S_cut must lie in [0, {dist.N}], got {S_cut}")
    return float(np.sum(dist.populations[S_cut + 1 :]))


def most_probable_S(dist: SpinLengthDistribution) -> int:
    # argmax returns the first maximum, i.e. the smaller S on ties
    return int(np.argmax(dist.populations))


def write_csv(dist: SpinLengthDistribution, path) -> None:
    """Columns ``S, c_S, population``; only S of matching parity are written."""
    c = dist.amplitudes
    with open(path, "w", newline="") as fh:
        fh.write(f"# spinherald decompose v1 N={dist.N}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["S", "c_S", "population"])
        for S in dist.support:
            w.writerow([int(S), repr(float(c[S])), repr(float(dist.populations[S]))])
