"""Pure-state representation, partial trace, and entropy/distance kernels.

Conventions fixed here and shared by every engine:

* site 0 is the slowest-varying index of the amplitude vector (big-endian),
* entropies are in nats (natural log); convert to bits at the reporting layer,
* the 1-norm distance is the unhalved sum of singular values, the convention
  under which the Pinsker and Schatten reductions below hold with their
  printed constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalValidityError

NORM_TOL = 1e-10
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIG_FLOOR = -1e-9
EIG_ZERO = 1e-12


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state of `n` qudits with local dimension `q`."""

    n: int
    q: int
    amps: np.ndarray

    def __post_init__(self):
        if self.n < 1 or self.q < 2:
            raise InputError(f"need n >= 1 and q >= 2, got n={self.n}, q={self.q}")
        amps = np.asarray(self.amps, dtype=np.complex128)
        if amps.shape != (self.q**self.n,):
            raise InputError(
                f"amplitude vector has length {amps.shape}, expected q^n = {self.q**self.n}"
            )
        nrm2 = float(np.vdot(amps, amps).real)
        if abs(nrm2 - 1.0) > NORM_TOL:
            raise InputError(f"state not normalized: |amps|^2 = {nrm2!r}")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @property
    def dim(self) -> int:
        return self.q**self.n

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per site, site 0 first."""
        return self.amps.reshape((self.q,) * self.n)


def product_state(n: int, q: int, local_kets) -> StateVector:
    """Tensor product of per-site kets (each a length-q vector)."""
    amps = np.array([1.0 + 0j])
    for ket in local_kets:
        amps = np.kron(amps, np.asarray(ket, dtype=np.complex128))
    return StateVector(n=n, q=q, amps=amps)


def basis_state(n: int, q: int, digits) -> StateVector:
    """Computational basis state |d_0 d_1 ... d_{n-1}> (site 0 slowest)."""
    digits = list(digits)
    if len(digits) != n or any(not (0 <= d < q) for d in digits):
        raise InputError(f"digits must be n={n} values in [0, {q})")
    idx = 0
    for d in digits:
        idx = idx * q + d
    amps = np.zeros(q**n, dtype=np.complex128)
    amps[idx] = 1.0
    return StateVector(n=n, q=q, amps=amps)


@dataclass(frozen=True)
class Subregion:
    """Ordered subset of sites; `contiguous` means a cyclic interval on the ring."""

    sites: tuple
    contiguous: bool = False

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        if len(set(sites)) != len(sites):
            raise InputError(f"duplicate site indices in {sites}")
        if any(s < 0 for s in sites):
            raise InputError(f"negative site index in {sites}")
        object.__setattr__(self, "sites", sites)

    @classmethod
    def interval(cls, start: int, length: int, n: int) -> "Subregion":
        """Cyclic interval of `length` sites beginning at `start` on an n-ring."""
        if not (1 <= length <= n):
            raise InputError(f"interval length {length} not in [1, {n}]")
        return cls(tuple((start + k) % n for k in range(length)), contiguous=True)

    def validate_for(self, n: int) -> None:
        if any(s >= n for s in self.sites):
            raise InputError(f"site index out of range for n={n}: {self.sites}")
        if self.contiguous:
            k = len(self.sites)
            expect = tuple((self.sites[0] + j) % n for j in range(k))
            if self.sites != expect:
                raise InputError(f"sites {self.sites} are not a cyclic interval on n={n}")

    def complement(self, n: int) -> "Subregion":
        inside = set(self.sites)
        return Subregion(tuple(s for s in range(n) if s not in inside))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite (to round-off) matrix."""

    entries: np.ndarray
    eigenvalues: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError(f"density matrix must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise NumericalValidityError("matrix not Hermitian within 1e-10")
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > TRACE_TOL:
            raise NumericalValidityError(f"trace {tr!r} differs from 1 beyond 1e-10")
        eig = np.linalg.eigvalsh(m) if self.eigenvalues is None else np.asarray(self.eigenvalues)
        if eig[0] < EIG_FLOOR:
            raise NumericalValidityError(f"negative eigenvalue {eig[0]!r} below -1e-9")
        m = m.copy()
        m.setflags(write=False)
        eig = eig.copy()
        eig.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=np.complex128) / dim, eigenvalues=np.full(dim, 1.0 / dim))


def _region_matrix(state: StateVector, region: Subregion) -> np.ndarray:
    """Reshape |psi> into a d_A x d_B matrix M with the region's sites leading.

    The reduced state is M M^dagger, which costs O(d * d_A) instead of
    forming the full projector.
    """
    region.validate_for(state.n)
    keep = list(region.sites)
    if not keep:
        raise InputError("region must contain at least one site")
    if len(keep) == state.n:
        raise InputError("region must leave a nonempty complement")
    rest = [s for s in range(state.n) if s not in set(keep)]
    da = state.q ** len(keep)
    if keep == list(range(len(keep))):
        # leading block needs no permutation
        return state.amps.reshape(da, -1)
    tensor = state.tensor()
    return np.transpose(tensor, keep + rest).reshape(da, -1)


def partial_trace(state: StateVector, region: Subregion) -> DensityMatrix:
    """Reduced density matrix of `region`, tracing out its complement."""
    m = _region_matrix(state, region)
    return DensityMatrix(m @ m.conj().T)


def reduced_eigenvalues(state: StateVector, region: Subregion) -> np.ndarray:
    """Spectrum of the reduced state, ascending (squared Schmidt values)."""
    m = _region_matrix(state, region)
    if m.shape[0] <= m.shape[1]:
        return np.linalg.eigvalsh(m @ m.conj().T)
    sv = np.linalg.svd(m, compute_uv=False)
    eig = np.zeros(m.shape[0])
    eig[: sv.shape[0]] = sv**2
    return np.sort(eig)


def entropy_from_eigenvalues(eig: np.ndarray) -> float:
    """Shannon entropy of a spectrum in nats; values <= 1e-12 contribute 0."""
    eig = np.asarray(eig, dtype=float)
    if eig.min() < EIG_FLOOR:
        raise NumericalValidityError(f"negative eigenvalue {eig.min()!r} below -1e-9")
    lam = eig[eig > EIG_ZERO]
    return float(-np.sum(lam * np.log(lam)))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """S(rho) = -tr(rho ln rho) in nats."""
    return entropy_from_eigenvalues(rho.eigenvalues)


def purity(rho: DensityMatrix) -> float:
    """tr(rho^2), computed as the squared Frobenius norm (rho is Hermitian)."""
    return float(np.sum(np.abs(rho.entries) ** 2).real)


def renyi2_entropy(rho: DensityMatrix) -> float:
    """S_2 = -ln tr(rho^2)."""
    return -float(np.log(purity(rho)))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Unhalved 1-norm ||a - b||_1 = sum of singular values of the difference."""
    if a.dim != b.dim:
        raise InputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.entries - b.entries
    return float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def distance_to_maximally_mixed(rho: DensityMatrix) -> float:
    return float(np.sum(np.abs(rho.eigenvalues - 1.0 / rho.dim)))


def observables_from_eigenvalues(eig: np.ndarray) -> tuple:
    """(entropy, distance to 1/d, purity) from one reduced spectrum."""
    eig = np.asarray(eig, dtype=float)
    s = entropy_from_eigenvalues(eig)
    dist = float(np.sum(np.abs(eig - 1.0 / eig.shape[0])))
    pur = float(np.sum(eig**2))
    return s, dist, pur


def subsystem_entropy_series_point(state: StateVector, region: Subregion) -> tuple:
    """All three per-step observables from a single partial trace."""
    return observables_from_eigenvalues(reduced_eigenvalues(state, region))


def batched_region_eigenvalues(states: np.ndarray, n: int, q: int, sites) -> np.ndarray:
    """Reduced-state spectra for a (batch, q^n) array of pure states.

    Returns shape (batch, q^len(sites)); sites follow the listed order.
    """
    batch = states.shape[0]
    sites = list(sites)
    keep = [1 + s for s in sites]
    rest = [1 + s for s in range(n) if s not in set(sites)]
    tensor = states.reshape((batch,) + (q,) * n)
    m = np.transpose(tensor, [0] + keep + rest).reshape(batch, q ** len(sites), -1)
    rho = m @ m.conj().transpose(0, 2, 1)
    return np.linalg.eigvalsh(rho)


def batched_observables(eigs: np.ndarray) -> tuple:
    """Vectorized (S, dist_mm, purity) for a (batch, d_A) eigenvalue array."""
    eigs = np.asarray(eigs, dtype=float)
    if eigs.min() < EIG_FLOOR:
        raise NumericalValidityError(f"negative eigenvalue {eigs.min()!r} below -1e-9")
    lam = np.where(eigs > EIG_ZERO, eigs, 1.0)  # ln(1) = 0 stands in for 0*ln(0)
    entropy = -np.sum(lam * np.log(lam), axis=-1)
    dist = np.sum(np.abs(eigs - 1.0 / eigs.shape[-1]), axis=-1)
    pur = np.sum(eigs**2, axis=-1)
    return entropy, dist, pur
