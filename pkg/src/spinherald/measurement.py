"""Photon-counting heralding with a finite-efficiency detector.

The first pulse (TC) empties ``|S,0>`` into ``|S,-S>`` and emits ``S``
photons; every later pulse alternates anti-TC / TC and moves the spin
between ``|S,-S>`` and ``|S,+S>``, emitting ``2S`` photons. Each emitted
photon is registered independently with probability ``eta``, so a pulse of
``m`` photons yields a ``Binomial(m, eta)`` count. Arrival times and dark
counts carry no weight.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from .qfi_engine import DiagonalSpinMixture, extremal_table, qfi_mixed_diagonal
from .spin_decomposition import SpinLengthDistribution, decompose

TC = "tc"
ANTI_TC = "anti-tc"


class InconsistentRecordError(ValueError):
    """No spin length is compatible with the photon-count record."""


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"detector efficiency must lie in [0, 1], got {self.efficiency}")

    def log_likelihood(self, detected, emitted) -> np.ndarray:
        """``log P(detected | emitted)``; ``-inf`` where impossible."""
        return binom.logpmf(detected, emitted, self.efficiency)

    def likelihood(self, detected, emitted) -> np.ndarray:
        return binom.pmf(detected, emitted, self.efficiency)


def pulse_direction(index: int) -> str:
    return TC if index % 2 == 0 else ANTI_TC


def photons_emitted(index: int, S):
    """Photons in pulse ``index`` for spin length ``S`` (``S`` first, then ``2S``)."""
    return S if index == 0 else 2 * np.asarray(S)


@dataclass(frozen=True)
class PulseRecord:
    pulse_index: int
    direction: str
    detected_count: int

    def __post_init__(self):
        if self.direction != pulse_direction(self.pulse_index):
            raise ValueError(f"pulse {self.pulse_index} must be {pulse_direction(self.pulse_index)}")
        if self.detected_count < 0:
            raise ValueError("detected count must be nonnegative")


@dataclass(frozen=True)
class PosteriorState:
    N: int
    weights: np.ndarray
    history: tuple[PulseRecord, ...] = ()
    S_min: int = 0

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    @property
    def orientation(self) -> str:
        # after a TC pulse the spin sits at |S,-S>, after anti-TC at |S,+S>
        if not self.history:
            raise ValueError("no pulse recorded yet")
        return "lowest" if self.history[-1].direction == TC else "highest"

    def entropy(self) -> float:
        p = self.weights[self.weights > 0]
        return float(-np.sum(p * np.log(p)))


def _normalize_log(log_w: np.ndarray) -> np.ndarray:
    top = np.max(log_w)
    if not np.isfinite(top):
        raise InconsistentRecordError("all spin lengths have zero likelihood for this record")
    w = np.exp(log_w - top)
    return w / w.sum()


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


def posterior_first_pulse(dist: SpinLengthDistribution, n: int, det: DetectorModel) -> PosteriorState:
    """``p(S|n)`` proportional to ``|c_S|^2 C(S,n) eta^n (1-eta)^(S-n)``."""
    if not 0 <= n <= dist.N:
        raise InconsistentRecordError(f"first-pulse count {n} outside [0, {dist.N}]")
    S = dist.spin_lengths
    w = _normalize_log(_log(dist.populations) + det.log_likelihood(n, S))
    return PosteriorState(dist.N, w, (PulseRecord(0, TC, int(n)),), int(n))


def posterior_update_subsequent(post: PosteriorState, n_i: int, det: DetectorModel) -> PosteriorState:
    """Bayes update for a ``2S``-photon pulse: likelihood ``C(2S,n) eta^n (1-eta)^(2S-n)``."""
    if not post.history:
        raise ValueError("first pulse must be recorded with posterior_first_pulse")
    if not 0 <= n_i <= 2 * post.N:
        raise InconsistentRecordError(f"count {n_i} outside [0, {2 * post.N}]")
    k = len(post.history)
    S = np.arange(post.N + 1)
    w = _normalize_log(_log(post.weights) + det.log_likelihood(n_i, 2 * S))
    record = PulseRecord(k, pulse_direction(k), int(n_i))
    return PosteriorState(post.N, w, post.history + (record,), max(post.S_min, math.ceil(n_i / 2)))


def posterior_from_counts(dist: SpinLengthDistribution, counts, det: DetectorModel) -> PosteriorState:
    counts = list(counts)
    if not counts:
        raise ValueError("need at least one count")
    post = posterior_first_pulse(dist, counts[0], det)
    for n in counts[1:]:
        post = posterior_update_subsequent(post, n, det)
    return post


def heralded_mixture(post: PosteriorState) -> DiagonalSpinMixture:
    return DiagonalSpinMixture(post.N, post.weights, post.orientation)


def detection_distribution(dist: SpinLengthDistribution, det: DetectorModel) -> np.ndarray:
    """``p(n)`` for ``n = 0..N`` on the first pulse."""
    S = dist.spin_lengths
    lik = det.likelihood(S[:, None], S[None, :])  # [n, S]
    return lik @ dist.populations


def detection_prob(dist: SpinLengthDistribution, n: int, det: DetectorModel) -> float:
    if not 0 <= n <= dist.N:
        raise ValueError(f"count {n} outside [0, {dist.N}]")
    S = dist.spin_lengths
    return float(np.dot(det.likelihood(n, S), dist.populations))


def _mixed_qfi_rows(post: np.ndarray, qfi: np.ndarray, cross: np.ndarray) -> np.ndarray:
    """Closed-form mixed QFI for each row of a posterior matrix."""
    lo, hi = post[:, :-2], post[:, 2:]
    total = lo + hi
    with np.errstate(invalid="ignore", divide="ignore"):
        pair = np.where(total > 0, lo * hi / total, 0.0)
    return np.maximum(post @ qfi - 16.0 * pair @ (cross[:-2] ** 2), 0.0)


def first_pulse_table(N: int, det: DetectorModel) -> tuple[np.ndarray, np.ndarray]:
    """``(p(n), F(rho_n))`` for every first-pulse count ``n = 0..N``.

    Counts with ``p(n) = 0`` get ``F = 0``.
    """
    dist = decompose(N)
    S = dist.spin_lengths
    joint = det.likelihood(S[:, None], S[None, :]) * dist.populations[None, :]
    p_n = joint.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(p_n[:, None] > 0, joint / p_n[:, None], 0.0)
    table = extremal_table(N)
    return p_n, _mixed_qfi_rows(post, table.qfi, table.cross)


def average_qfi_imperfect(N: int, det: DetectorModel) -> float:
    p_n, f_n = first_pulse_table(N, det)
    return float(np.dot(p_n, f_n))


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    """Independent stream for one Monte Carlo run, fixed by ``(seed, run_index)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_index,)))


@dataclass(frozen=True)
class HeraldingRun:
    true_S: int
    records: tuple[PulseRecord, ...]
    posterior: PosteriorState
    qfi_trace: np.ndarray = field(repr=False)  # heralded QFI after each pulse


def sample_heralding_run(
    N: int,
    det: DetectorModel,
    num_pulses: int,
    seed: int,
    run_index: int = 0,
    true_S: int | None = None,
) -> HeraldingRun:
    """Draw ``S`` from ``|c_S|^2`` (unless pinned) and a binomial count per pulse."""
    if num_pulses < 1:
        raise ValueError("num_pulses must be at least 1")
    rng = run_rng(seed, run_index)
    dist = decompose(N)
    if true_S is None:
        true_S = int(rng.choice(N + 1, p=dist.populations))
    elif dist.populations[true_S] == 0:
        raise ValueError(f"S={true_S} carries no weight for N={N}")
    post = None
    qfis = np.empty(num_pulses)
    for k in range(num_pulses):
        n = int(rng.binomial(photons_emitted(k, true_S), det.efficiency))
        post = posterior_first_pulse(dist, n, det) if k == 0 else posterior_update_subsequent(post, n, det)
        qfis[k] = qfi_mixed_diagonal(heralded_mixture(post))
    return HeraldingRun(int(true_S), post.history, post, qfis)


def sample_runs(
    N: int,
    det: DetectorModel,
    num_pulses: int,
    samples: int,
    seed: int,
    threads: int = 1,
    true_S: int | None = None,
) -> list[HeraldingRun]:
    """Independent seeded runs, returned in run-index order whatever ``threads`` is."""
    def one(i):
        return sample_heralding_run(N, det, num_pulses, seed, run_index=i, true_S=true_S)

    if threads <= 1:
        return [one(i) for i in range(samples)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(samples)))


def sample_mean_qfi(runs: list[HeraldingRun]) -> np.ndarray:
    """Mean heralded QFI after 1, 2, ... pulses."""
    return np.mean([r.qfi_trace for r in runs], axis=0)
