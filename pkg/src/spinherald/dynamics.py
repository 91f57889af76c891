"""Dissipative Tavis-Cummings dynamics of a single spin-S sector.

The TC coupling ``lambda (a S+ + a^dag S-)`` and the anti-TC coupling
``lambda (a S- + a^dag S+)`` never change the spin length, so the simulation
lives on the ``(2S+1)(n_max+1)`` space ``|S,M> (x) |n>``. The cavity field
decays at rate ``kappa`` through the jump operator ``sqrt(2 kappa) a``.
``omega`` and ``omega_0`` are taken as zero.

Both couplings conserve a charge, ``n + M`` (TC) or ``n - M`` (anti-TC), and a
photon jump lowers it by one. Starting from a charge eigenstate, the density
matrix therefore stays block diagonal in the charge, and only those blocks are
integrated. The same blocks make the trajectory propagation cheap.

Internally times are in units of ``1/kappa`` when ``kappa = 1``; nothing here
assumes it, but the CLI and the physical-parameter layer use that convention.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

TC = "tc"
ANTI_TC = "anti-tc"
STRONG_REGIME_FACTOR = 5.0
LEAKAGE_TOL = 1e-6


class TruncationError(RuntimeError):
    """Cavity Fock truncation is too small for the requested evolution."""


class IntegrationError(RuntimeError):
    pass


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory parameters of the cavity-assisted Raman scheme (angular frequencies, rad/s)."""

    g: float
    kappa: float
    delta: float
    omega_minus_rabi: float
    omega_plus_rabi: float = 0.0
    N: int = 1
    omega_c: float = 0.0
    omega_minus: float = 0.0
    omega_plus: float = 0.0
    omega_z: float = 0.0

    def __post_init__(self):
        if self.delta == 0:
            raise ValueError("detuning must be nonzero")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        vals = [getattr(self, f) for f in self.__dataclass_fields__]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("all parameters must be finite")


@dataclass(frozen=True)
class EffectiveModelParams:
    omega: float
    omega0: float
    lambda_plus: float
    lambda_minus: float
    kappa: float


def effective_params(phys: PhysicalParams) -> EffectiveModelParams:
    d = phys.delta
    omega = phys.omega_c - (phys.omega_minus + phys.omega_plus) / 2 + phys.N * phys.g**2 / (3 * d)
    omega0 = (
        phys.omega_z
        - (phys.omega_minus - phys.omega_plus) / 2
        + (phys.omega_minus_rabi**2 - phys.omega_plus_rabi**2) / (24 * d)
    )
    scale = phys.g / (12 * math.sqrt(2) * d)
    return EffectiveModelParams(
        omega=omega,
        omega0=omega0,
        lambda_plus=scale * phys.omega_plus_rabi,
        lambda_minus=scale * phys.omega_minus_rabi,
        kappa=phys.kappa,
    )


@dataclass(frozen=True)
class PulseEstimate:
    duration: float
    regime: str  # "weak" or "strong"


def pulse_duration_estimate(S: float, coupling: float, kappa: float, strong_factor: float = STRONG_REGIME_FACTOR) -> PulseEstimate:
    """``kappa / (S lambda^2)`` while ``sqrt(S) lambda <= kappa/2``, else ``strong_factor / kappa``."""
    if S < 1 or coupling <= 0 or kappa <= 0:
        raise ValueError("need S >= 1, coupling > 0 and kappa > 0")
    if math.sqrt(S) * coupling <= kappa / 2:
        return PulseEstimate(kappa / (S * coupling**2), "weak")
    return PulseEstimate(strong_factor / kappa, "strong")


# ---------------------------------------------------------------- ladder space


def _spin_ladder(S: int):
    """``(Sz, S+)`` on ``M = -S..S`` (index ``M + S``)."""
    M = np.arange(-S, S + 1, dtype=float)
    sz = sps.diags(M)
    # S+ |M> = sqrt(S(S+1) - M(M+1)) |M+1>
    sp = sps.diags(np.sqrt(S * (S + 1) - M[:-1] * (M[:-1] + 1)), -1, shape=(2 * S + 1, 2 * S + 1))
    return sz.tocsr(), sp.tocsr()


@dataclass(frozen=True)
class LadderSpace:
    S: int
    n_max: int

    @property
    def dim(self) -> int:
        return (2 * self.S + 1) * (self.n_max + 1)

    @property
    def M(self) -> np.ndarray:
        return np.repeat(np.arange(-self.S, self.S + 1), self.n_max + 1)

    @property
    def n(self) -> np.ndarray:
        return np.tile(np.arange(self.n_max + 1), 2 * self.S + 1)

    def index(self, M: int, n: int) -> int:
        if abs(M) > self.S or not 0 <= n <= self.n_max:
            raise ValueError(f"(M={M}, n={n}) outside the ladder space")
        return (M + self.S) * (self.n_max + 1) + n

    def operators(self):
        """``a, Sz, S+, S-`` as CSR matrices on the product space."""
        sz, sp = _spin_ladder(self.S)
        nc = self.n_max + 1
        a_c = sps.diags(np.sqrt(np.arange(1, nc, dtype=float)), 1, shape=(nc, nc))
        eye_s = sps.identity(2 * self.S + 1)
        eye_c = sps.identity(nc)
        a = sps.kron(eye_s, a_c).tocsr()
        return a, sps.kron(sz, eye_c).tocsr(), sps.kron(sp, eye_c).tocsr(), sps.kron(sp.T, eye_c).tocsr()


@dataclass(frozen=True)
class LadderCavityState:
    """Ket (1-D) or density matrix (2-D) on a :class:`LadderSpace`."""

    space: LadderSpace
    data: np.ndarray

    @classmethod
    def basis_state(cls, S: int, M: int, n: int, n_max: int) -> "LadderCavityState":
        space = LadderSpace(S, n_max)
        psi = np.zeros(space.dim, dtype=complex)
        psi[space.index(M, n)] = 1.0
        return cls(space, psi)

    @property
    def is_ket(self) -> bool:
        return self.data.ndim == 1

    def density(self) -> np.ndarray:
        if self.is_ket:
            return np.outer(self.data, self.data.conj())
        return self.data

    def fidelity(self, ket: np.ndarray) -> float:
        if self.is_ket:
            psi = self.data / np.linalg.norm(self.data)
            return float(abs(np.vdot(ket, psi)) ** 2)
        return float(np.vdot(ket, self.data @ ket).real)

    def photon_number(self) -> float:
        rho = self.density()
        return float(np.dot(self.space.n, np.diag(rho).real) / np.trace(rho).real)

    def leakage(self) -> float:
        """Population in the top Fock level."""
        rho = self.density()
        top = self.space.n == self.space.n_max
        return float(np.sum(np.diag(rho).real[top]) / np.trace(rho).real)


# ---------------------------------------------------------------- generator


@dataclass
class TCGenerator:
    """Hamiltonian, jump operator and Liouvillian of the dissipative (anti-)TC model.

    ``liouvillian`` acts on column-stacked ``vec(rho)``.
    """

    space: LadderSpace
    coupling: float
    kappa: float
    direction: str
    hamiltonian: sps.csr_matrix
    jump: sps.csr_matrix
    liouvillian: sps.csr_matrix
    charge: np.ndarray
    _sector_cache: dict = field(default_factory=dict, repr=False)

    @property
    def S(self) -> int:
        return self.space.S

    @property
    def effective_hamiltonian(self) -> sps.csr_matrix:
        return (self.hamiltonian - 0.5j * (self.jump.conj().T @ self.jump)).tocsr()

    def target_state(self) -> np.ndarray:
        """``|S,-S>|0>`` for TC, ``|S,+S>|0>`` for anti-TC."""
        psi = np.zeros(self.space.dim, dtype=complex)
        M = -self.S if self.direction == TC else self.S
        psi[self.space.index(M, 0)] = 1.0
        return psi

    def trace_defect(self) -> float:
        """``max |vec(I)^T L|``: zero for a trace-preserving generator."""
        d = self.space.dim
        eye = np.eye(d).reshape(-1, order="F")
        return float(np.max(np.abs(self.liouvillian.T @ eye)))


def default_n_max(S: int, coupling: float, kappa: float, direction: str) -> int:
    """Charge bound on the photon number, tightened in the weak-coupling regime."""
    bound = S if direction == TC else 2 * S
    if S == 0:
        return 1
    weak_cap = math.ceil((kappa / (math.sqrt(S) * coupling)) ** 2) + 8
    return max(1, min(bound, weak_cap))


def _superop(h: sps.spmatrix, c: sps.spmatrix) -> sps.csr_matrix:
    d = h.shape[0]
    eye = sps.identity(d, format="csr")
    cdc = (c.conj().T @ c).tocsr()
    L = -1j * (sps.kron(eye, h) - sps.kron(h.T, eye))
    L = L + sps.kron(c.conj(), c) - 0.5 * sps.kron(eye, cdc) - 0.5 * sps.kron(cdc.T, eye)
    return L.tocsr()


def build_tc_liouvillian(
    S: int,
    coupling: float,
    kappa: float = 1.0,
    n_max: int | None = None,
    direction: str = TC,
) -> TCGenerator:
    if direction not in (TC, ANTI_TC):
        raise ValueError(f"direction must be {TC!r} or {ANTI_TC!r}")
    if S < 0 or int(S) != S:
        raise ValueError("spin length must be a nonnegative integer")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    S = int(S)
    if n_max is None:
        n_max = default_n_max(S, coupling, kappa, direction) if coupling > 0 else 1
    if n_max < 1:
        raise TruncationError("n_max must be at least 1")
    space = LadderSpace(S, n_max)
    a, sz, sp, sm = space.operators()
    if direction == TC:
        h = coupling * (a @ sp + a.T @ sm)
        charge = space.n + space.M
    else:
        h = coupling * (a @ sm + a.T @ sp)
        charge = space.n - space.M
    c = math.sqrt(2 * kappa) * a
    return TCGenerator(space, coupling, kappa, direction, h.tocsr(), c.tocsr(), _superop(h, c), charge)


# ---------------------------------------------------------------- master equation


@dataclass(frozen=True)
class EvolutionResult:
    times: np.ndarray
    photon_number: np.ndarray  # <a^dag a>(t)
    emitted: np.ndarray  # integral of 2 kappa <a^dag a>
    fidelity: np.ndarray  # overlap with the generator's target state
    trace_error: float
    leakage: float
    final_state: LadderCavityState


def reachable_photons(gen: TCGenerator, rho: np.ndarray) -> int:
    """Largest photon number the conserved charge allows from ``rho``'s support."""
    occupied = np.flatnonzero(np.abs(np.diag(rho)) > 0)
    return int(np.max(gen.charge[occupied])) + gen.S


def _charge_diagonal(gen: TCGenerator) -> np.ndarray:
    """vec indices (column stacking) of coherences between equal-charge states."""
    q = gen.charge
    d = len(q)
    rows = np.tile(np.arange(d), d)
    cols = np.repeat(np.arange(d), d)
    return np.flatnonzero(q[rows] == q[cols])


def evolve_to_steady_state(
    gen: TCGenerator,
    initial: LadderCavityState,
    t_final: float,
    checkpoints: int | np.ndarray = 201,
    rtol: float = 1e-8,
    atol: float = 1e-11,
    method: str = "RK45",
) -> EvolutionResult:
    """Integrate the master equation and the emitted photon number ``int 2 kappa <a^dag a> dt``."""
    if initial.space != gen.space:
        raise ValueError("initial state lives on a different ladder space")
    d = gen.space.dim
    rho0 = initial.density().astype(complex)
    rho0 = rho0 / np.trace(rho0)
    vec0 = rho0.reshape(-1, order="F")

    keep = _charge_diagonal(gen)
    if np.allclose(np.delete(vec0, keep), 0.0, atol=1e-14):
        L = gen.liouvillian[keep][:, keep]
    else:
        keep = np.arange(d * d)
        L = gen.liouvillian
    diag_pos = np.arange(d) * (d + 1)
    # weights of the emission rate 2 kappa sum_i n_i rho_ii on the reduced vector
    weight = np.zeros(d * d)
    weight[diag_pos] = (gen.jump.conj().T @ gen.jump).diagonal().real
    w = weight[keep]

    aug = sps.bmat([[L, None], [sps.csr_matrix(w[None, :]), sps.csr_matrix((1, 1))]], format="csr")
    y0 = np.concatenate([vec0[keep], [0.0]]).astype(complex)

    times = np.linspace(0.0, t_final, checkpoints) if np.ndim(checkpoints) == 0 else np.asarray(checkpoints, float)
    sol = solve_ivp(lambda t, y: aug @ y, (0.0, float(times[-1])), y0, method=method, t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(sol.message)

    emitted = sol.y[-1].real
    pos = np.searchsorted(keep, diag_pos)
    pops = sol.y[pos].real
    trace = pops.sum(axis=0)
    n_diag = gen.space.n
    photon = n_diag @ pops / trace
    t_idx = np.flatnonzero(gen.target_state())[0]
    fidelity = pops[t_idx] / trace
    leakage = 0.0
    if gen.space.n_max < reachable_photons(gen, rho0):
        top = n_diag == gen.space.n_max
        leakage = float(np.max(pops[top].sum(axis=0) / trace))
        if leakage > LEAKAGE_TOL:
            warnings.warn(f"cavity truncation leakage {leakage:.2e} exceeds {LEAKAGE_TOL:g}", RuntimeWarning)
    final_vec = np.zeros(d * d, dtype=complex)
    final_vec[keep] = sol.y[:-1, -1]
    final = LadderCavityState(gen.space, final_vec.reshape(d, d, order="F"))
    return EvolutionResult(times, photon, emitted, fidelity, float(np.max(np.abs(trace - 1.0))), leakage, final)


def emission_time(result: EvolutionResult, photons: float) -> float:
    """First time the cumulative emission reaches ``photons`` (linear interpolation)."""
    e = result.emitted
    hit = np.flatnonzero(e >= photons)
    if len(hit) == 0:
        raise ValueError(f"emission never reaches {photons} within the integrated window")
    k = hit[0]
    if k == 0:
        return float(result.times[0])
    t0, t1 = result.times[k - 1], result.times[k]
    return float(t0 + (photons - e[k - 1]) * (t1 - t0) / (e[k] - e[k - 1]))


# ---------------------------------------------------------------- trajectories


@dataclass(frozen=True)
class TrajectoryRecord:
    jump_times: tuple[float, ...]
    final_state: LadderCavityState
    seed: int
    completed: bool
    checkpoint_times: np.ndarray = field(default=None, repr=False)
    photon_number: np.ndarray = field(default=None, repr=False)

    @property
    def jump_count(self) -> int:
        return len(self.jump_times)


class _SectorPropagator:
    """No-jump evolution ``exp(-i H_eff t)`` restricted to one index block."""

    def __init__(self, h_eff: np.ndarray):
        self.h = h_eff
        lam, vec = np.linalg.eig(h_eff)
        self.use_eig = np.linalg.cond(vec) < 1e8
        if self.use_eig:
            self.lam, self.vec, self.inv = lam, vec, np.linalg.inv(vec)

    def __call__(self, psi: np.ndarray, t: float) -> np.ndarray:
        if self.use_eig:
            return self.vec @ (np.exp(-1j * self.lam * t) * (self.inv @ psi))
        return sla.expm(-1j * self.h * t) @ psi


def _blocks(gen: TCGenerator, psi: np.ndarray) -> np.ndarray | None:
    support = np.flatnonzero(np.abs(psi) > 0)
    q = np.unique(gen.charge[support])
    return None if len(q) != 1 else np.flatnonzero(gen.charge == q[0])


def _propagator(gen: TCGenerator, idx: np.ndarray) -> _SectorPropagator:
    key = (idx[0], len(idx))
    if key not in gen._sector_cache:
        h = gen.effective_hamiltonian[idx][:, idx].toarray()
        gen._sector_cache[key] = _SectorPropagator(h)
    return gen._sector_cache[key]


def monte_carlo_trajectory(
    gen: TCGenerator,
    initial: LadderCavityState,
    t_final: float,
    seed: int | np.random.Generator,
    checkpoints: np.ndarray | None = None,
) -> TrajectoryRecord:
    """Photon-counting unraveling by the waiting-time (norm threshold) method.

    Between jumps the unnormalized state follows ``exp(-i H_eff t)``; its
    squared norm decreases monotonically, so each jump time is the root of
    ``|psi(t)|^2 = r`` with ``r ~ U(0,1)``. Jumps apply ``a`` and renormalize.
    """
    if not initial.is_ket:
        raise ValueError("trajectories need a pure initial state")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    seed_label = seed if isinstance(seed, (int, np.integer)) else -1
    psi = initial.data.astype(complex) / np.linalg.norm(initial.data)
    jump = gen.jump
    n_op = gen.space.n
    cps = np.asarray([] if checkpoints is None else checkpoints, float)
    photon = np.full(len(cps), np.nan)
    next_cp = 0

    def restrict(state):
        idx = _blocks(gen, state)
        if idx is None:
            idx = np.arange(gen.space.dim)
        return idx, _propagator(gen, idx), state[idx]

    idx, prop, local = restrict(psi)
    t = 0.0
    jumps = []
    while True:
        r = rng.random()
        remaining = t_final - t

        def excess(tau):
            return np.vdot(v := prop(local, tau), v).real - r

        t_jump = brentq(excess, 0.0, remaining, xtol=1e-12) if excess(remaining) < 0 else None
        horizon = t + (t_jump if t_jump is not None else remaining)
        while next_cp < len(cps) and cps[next_cp] <= horizon:
            v = prop(local, cps[next_cp] - t)
            photon[next_cp] = np.dot(n_op[idx], np.abs(v) ** 2) / np.vdot(v, v).real
            next_cp += 1
        if t_jump is None:
            local = prop(local, remaining)
            t = t_final
            break
        full = np.zeros(gen.space.dim, dtype=complex)
        full[idx] = prop(local, t_jump)
        full = jump @ full
        full /= np.linalg.norm(full)
        t += t_jump
        jumps.append(t)
        idx, prop, local = restrict(full)

    final = np.zeros(gen.space.dim, dtype=complex)
    final[idx] = local / np.linalg.norm(local)
    # emission still pending after t_final: 1 - |exp(-i H_eff T) psi|^2 for long T
    pending = 1.0 - np.linalg.norm(prop(final[idx], 1e3 * max(t_final, 1.0))) ** 2
    completed = pending < 1e-6
    if not completed:
        warnings.warn(
            f"trajectory stopped at t_final={t_final} with emission probability {pending:.2e} still pending",
            RuntimeWarning,
        )
    return TrajectoryRecord(tuple(jumps), LadderCavityState(gen.space, final), seed_label, completed, cps, photon)


def run_trajectories(gen: TCGenerator, initial: LadderCavityState, t_final: float, count: int, seed: int, checkpoints=None) -> list[TrajectoryRecord]:
    """``count`` trajectories; trajectory ``k`` uses the stream ``(seed, k)``."""
    out = []
    for k in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        rec = monte_carlo_trajectory(gen, initial, t_final, rng, checkpoints)
        out.append(TrajectoryRecord(rec.jump_times, rec.final_state, k, rec.completed, rec.checkpoint_times, rec.photon_number))
    return out
