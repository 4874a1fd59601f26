"""Brickwork random-circuit engine on a 1D qudit ring.

One time step is a single staggered layer of n/2 two-site gates; layer 1
pairs sites (0,1),(2,3),... and parities alternate, so odd layers include
the wrap-around pair (n-1, 0).  Gates are drawn fresh per layer per trial,
either Haar on U(q^2) or, for qubits, block-diagonal gates that commute
with the pair's total charge (Haar phases on the 1-dim charge blocks and
a Haar U(2) on the middle block).

Each trial owns a counter-based stream keyed by (master_seed, ensemble,
trial index), so any trial is reproducible in isolation and ensembles can
be processed in chunks of any size with bit-identical results.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ResourceLimitError
from .fluxstats import FluctuationSeries
from .haar import stream_rng
from .qstate import StateVector, basis_state, batched_observables, batched_region_eigenvalues

STATE_DIM_GUARD = 2**24

HAAR = "haar"
U1 = "u1_conserving"
ENSEMBLES = (HAAR, U1)

HOMOGENEOUS = "homogeneous_half_filling"
STEP = "step_function"


@dataclass(frozen=True)
class CircuitConfig:
    """Full description of one brickwork ensemble at fixed geometry and depth."""

    n: int
    q: int = 2
    depth: int = 0
    ensemble: str = HAAR
    initial_state: str = "zeros"
    master_seed: int = 0
    boundary: str = "periodic"

    def __post_init__(self):
        if self.n < 4 or self.n % 2 != 0:
            raise InputError(f"n must be even and >= 4, got {self.n}")
        if self.q < 2:
            raise InputError(f"q must be >= 2, got {self.q}")
        if self.depth < 0:
            raise InputError(f"depth must be >= 0, got {self.depth}")
        if self.boundary != "periodic":
            raise InputError("only periodic boundaries are supported")
        if self.ensemble not in ENSEMBLES:
            raise InputError(f"unknown ensemble {self.ensemble!r}")
        if self.ensemble == U1 and self.q != 2:
            raise InputError("u1_conserving requires q = 2")
        if self.q**self.n > STATE_DIM_GUARD:
            raise ResourceLimitError(
                f"state dimension q^n = {self.q**self.n} exceeds guard {STATE_DIM_GUARD}"
            )

    @property
    def dim(self) -> int:
        return self.q**self.n

    def config_hash(self) -> str:
        text = (
            f"n={self.n};q={self.q};depth={self.depth};ensemble={self.ensemble};"
            f"initial={self.initial_state};seed={self.master_seed};boundary={self.boundary}"
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def layer_pairs(n: int, parity: int) -> list:
    """Site pairs of one staggered layer; parity 0 starts at site 0."""
    if parity not in (0, 1):
        raise InputError(f"parity must be 0 or 1, got {parity}")
    return [(i % n, (i + 1) % n) for i in range(parity, n, 2)]


@dataclass(frozen=True)
class GateLayer:
    """One staggered layer: parity plus its n/2 two-site unitaries."""

    parity: int
    gates: np.ndarray  # (n/2, q^2, q^2)

    def __post_init__(self):
        g = np.asarray(self.gates, dtype=np.complex128)
        eye = np.eye(g.shape[-1])
        for u in g:
            if np.max(np.abs(u.conj().T @ u - eye)) > 1e-10:
                raise InputError("gate not unitary within 1e-10")
        object.__setattr__(self, "gates", g)


def apply_two_site_gate(state: StateVector, gate, site_i: int, site_j: int) -> StateVector:
    """Apply a q^2-dim unitary to the adjacent pair (site_i, site_j = site_i+1 mod n)."""
    n, q = state.n, state.q
    if site_j != (site_i + 1) % n:
        raise InputError(f"sites ({site_i}, {site_j}) are not adjacent on the ring")
    gate = np.asarray(gate, dtype=np.complex128)
    if gate.shape != (q * q, q * q):
        raise InputError(f"gate must be {q*q}x{q*q}, got {gate.shape}")
    if np.max(np.abs(gate.conj().T @ gate - np.eye(q * q))) > 1e-10:
        raise InputError("gate not unitary within 1e-10")
    t = np.moveaxis(state.tensor(), (site_i, site_j), (0, 1)).reshape(q * q, -1)
    t = (gate @ t).reshape((q, q) + (q,) * (n - 2))
    t = np.moveaxis(t, (0, 1), (site_i, site_j))
    return StateVector(n=n, q=q, amps=t.reshape(-1))


def _apply_layer_batched(states: np.ndarray, gates: np.ndarray, n: int, q: int, parity: int):
    """Apply one staggered layer to (batch, q^n) states; gates is (batch, n/2, q^2, q^2)."""
    q2 = q * q
    for g_idx, (i, j) in enumerate(layer_pairs(n, parity)):
        gate = gates[:, g_idx]
        if j == (i + 1):
            left = q**i
            right = q ** (n - i - 2)
            psi = states.reshape(-1, left, q2, right)
            states = np.einsum("bgs,blsr->blgr", gate, psi).reshape(-1, q**n)
        else:  # wrap pair (n-1, 0)
            g4 = gate.reshape(-1, q, q, q, q)
            psi = states.reshape(-1, q, q ** (n - 2), q)
            states = np.einsum("bwxyz,bzmy->bxmw", g4, psi).reshape(-1, q**n)
    return states


def sample_u1_gate(rng: np.random.Generator) -> np.ndarray:
    """Two-qubit gate commuting with the pair's total charge.

    Block-diagonal over charge sectors {|00>}, {|01>,|10>}, {|11>}: Haar
    phases on the corners and a Haar U(2) on the middle block.
    """
    z = rng.standard_normal((2, 2, 2))
    phases = rng.uniform(0.0, 2.0 * np.pi, 2)
    return _assemble_u1_gates(
        (z[..., 0] + 1j * z[..., 1])[None, ...] / math.sqrt(2.0), phases[None, ...]
    )[0]


def _assemble_u1_gates(mid_ginibre: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Batched charge-conserving gates from middle-block Ginibres and corner phases."""
    qm, r = np.linalg.qr(mid_ginibre)
    diag = np.einsum("...ii->...i", r)
    mid = qm * (diag / np.abs(diag))[..., None, :]
    batch = mid.shape[:-2]
    gates = np.zeros(batch + (4, 4), dtype=np.complex128)
    gates[..., 0, 0] = np.exp(1j * phases[..., 0])
    gates[..., 3, 3] = np.exp(1j * phases[..., 1])
    gates[..., 1:3, 1:3] = mid
    return gates


def pair_charge_operator() -> np.ndarray:
    """sigma^z_1 + sigma^z_2 on a qubit pair, ordered |00>,|01>,|10>,|11>."""
    return np.diag([2.0, 0.0, 0.0, -2.0])


def make_charge_initial_state(n: int, pattern: str) -> StateVector:
    """Half-filling computational product state, alternating or step profile."""
    if n % 2 != 0:
        raise InputError(f"n must be even, got {n}")
    if pattern == HOMOGENEOUS:
        digits = [1 - (i % 2) for i in range(n)]
    elif pattern == STEP:
        digits = [1] * (n // 2) + [0] * (n // 2)
    else:
        raise InputError(f"unknown charge pattern {pattern!r}")
    return basis_state(n, 2, digits)


def initial_digits(config: CircuitConfig) -> list:
    if config.initial_state == "zeros":
        return [0] * config.n
    if config.initial_state in (HOMOGENEOUS, STEP):
        if config.q != 2:
            raise InputError("charge patterns require q = 2")
        if config.initial_state == HOMOGENEOUS:
            return [1 - (i % 2) for i in range(config.n)]
        return [1] * (config.n // 2) + [0] * (config.n // 2)
    digits = [int(ch) for ch in config.initial_state]
    if len(digits) != config.n or any(not 0 <= d < config.q for d in digits):
        raise InputError(f"bad initial state descriptor {config.initial_state!r}")
    return digits


def charge_mask(n: int, total_charge: int) -> np.ndarray:
    """Boolean mask over 2^n basis states with popcount != total_charge."""
    if not 0 <= total_charge <= n:
        raise InputError(f"total charge must lie in [0, {n}]")
    idx = np.arange(2**n, dtype=np.uint64)
    pop = np.zeros(2**n, dtype=np.int64)
    for b in range(n):
        pop += ((idx >> np.uint64(b)) & np.uint64(1)).astype(np.int64)
    return pop != total_charge


def recorded_times(depth: int, record_every: int) -> list:
    """Layer indices recorded: 0, every record_every-th layer, and the last."""
    if record_every < 1:
        raise InputError(f"record_every must be >= 1, got {record_every}")
    times = [0]
    times += [t for t in range(1, depth + 1) if t % record_every == 0]
    if depth > 0 and times[-1] != depth:
        times.append(depth)
    return times


def _trial_gates(config: CircuitConfig, trial: int) -> np.ndarray:
    """All gates for one trial, shape (depth, n/2, q^2, q^2); fixed draw order."""
    rng = stream_rng(config.master_seed, "rqc", config.ensemble, trial)
    gpl = config.n // 2
    if config.ensemble == HAAR:
        q2 = config.q**2
        z = rng.standard_normal((config.depth, gpl, q2, q2, 2))
        g = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)
        qm, r = np.linalg.qr(g)
        diag = np.einsum("...ii->...i", r)
        return qm * (diag / np.abs(diag))[..., None, :]
    z = rng.standard_normal((config.depth, gpl, 2, 2, 2))
    phases = rng.uniform(0.0, 2.0 * np.pi, (config.depth, gpl, 2))
    return _assemble_u1_gates((z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0), phases)


@dataclass
class ObservableChunk:
    """Per-trial observables for one contiguous block of trials."""

    trial_start: int
    times: np.ndarray
    entropy: np.ndarray  # (trials, n_times, n_regions)
    dist_mm: np.ndarray
    purity: np.ndarray
    oos_weight: np.ndarray = None  # (trials, n_times) for u1 runs


def run_chunk(
    config: CircuitConfig,
    trial_start: int,
    n_trials: int,
    observables,
    record_every: int = 1,
    track_charge: bool = False,
) -> ObservableChunk:
    """Evolve a block of trials and record observables at the recorded layers."""
    n, q = config.n, config.q
    for region in observables:
        region.validate_for(n)
    digits = initial_digits(config)
    amps0 = np.zeros(config.dim, dtype=np.complex128)
    idx0 = 0
    for d in digits:
        idx0 = idx0 * q + d
    amps0[idx0] = 1.0
    states = np.tile(amps0, (n_trials, 1))

    times = recorded_times(config.depth, record_every)
    n_t, n_r = len(times), len(observables)
    ent = np.empty((n_trials, n_t, n_r))
    dist = np.empty((n_trials, n_t, n_r))
    pur = np.empty((n_trials, n_t, n_r))
    oos = np.zeros((n_trials, n_t)) if track_charge else None
    mask = None
    if track_charge:
        if config.ensemble != U1:
            raise InputError("charge tracking requires the u1_conserving ensemble")
        mask = charge_mask(n, sum(digits))

    gates = np.stack(
        [_trial_gates(config, trial_start + k) for k in range(n_trials)]
    ) if config.depth > 0 else None

    cursor = 0

    def record(t):
        nonlocal cursor
        for r_idx, region in enumerate(observables):
            eigs = batched_region_eigenvalues(states, n, q, region.sites)
            s, dm, p = batched_observables(eigs)
            ent[:, cursor, r_idx] = s
            dist[:, cursor, r_idx] = dm
            pur[:, cursor, r_idx] = p
        if track_charge:
            oos[:, cursor] = (np.abs(states[:, mask]) ** 2).sum(axis=1)
        cursor += 1

    time_set = set(times)
    if 0 in time_set:
        record(0)
    for layer in range(config.depth):
        states = _apply_layer_batched(states, gates[:, layer], n, q, layer % 2)
        if (layer + 1) in time_set:
            record(layer + 1)

    return ObservableChunk(
        trial_start=trial_start,
        times=np.array(times, dtype=float),
        entropy=ent,
        dist_mm=dist,
        purity=pur,
        oos_weight=oos,
    )


def run_brickwork(
    config: CircuitConfig, trial: int, observables, record_every: int = 1
) -> list:
    """Evolve one trial and return one FluctuationSeries per observed region."""
    chunk = run_chunk(config, trial, 1, list(observables), record_every)
    out = []
    for r_idx, region in enumerate(observables):
        out.append(
            FluctuationSeries(
                times=chunk.times,
                entropy=chunk.entropy[0, :, r_idx],
                dist_mm=chunk.dist_mm[0, :, r_idx],
                purity=chunk.purity[0, :, r_idx],
                trial_id=trial,
                config_hash=config.config_hash(),
                region_sites=region.sites,
                region_dim=config.q ** len(region.sites),
            )
        )
    return out


def iter_chunks(
    config: CircuitConfig,
    trials: int,
    observables,
    record_every: int = 1,
    chunk_size: int = 256,
    track_charge: bool = False,
):
    """Yield ObservableChunks covering trials [0, trials) in fixed-size blocks.

    Chunk boundaries depend only on (trials, chunk_size), never on worker
    topology, so merged statistics are bit-identical for any scheduling.
    """
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    observables = list(observables)
    for start in range(0, trials, chunk_size):
        size = min(chunk_size, trials - start)
        yield run_chunk(config, start, size, observables, record_every, track_charge)
