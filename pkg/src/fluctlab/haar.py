"""Haar-random sampling plus the closed-form reference averages.

Sampling uses the Ginibre + QR construction with the phase correction that
makes the triangular factor's diagonal positive real; without that fix the
QR output is not Haar distributed.

Streams are counter-based (Philox) and keyed by (master seed, path), so any
sample in a massively parallel ensemble is reproducible in isolation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError

PRNG_ID = "philox4x64 keyed by sha256(master_seed, path)"


def _path_ints(path) -> tuple:
    out = []
    for p in path:
        if isinstance(p, str):
            digest = hashlib.sha256(p.encode("utf-8")).digest()
            out.extend(int.from_bytes(digest[k : k + 4], "little") for k in range(0, 16, 4))
        else:
            out.append(int(p))
    return tuple(out)


def stream_rng(master_seed: int, *path) -> np.random.Generator:
    """Independent generator for (master_seed, *path); path may mix ints and strings."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_path_ints(path))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


def derive_seed(master_seed: int, *path) -> int:
    """Collision-resistant 64-bit sub-seed for (master_seed, *path)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_path_ints(path))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class HaarSampleSpec:
    dim: int
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise InputError(f"dim must be >= 1, got {self.dim}")


def haar_unitaries(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of `count` Haar unitaries, shape (count, dim, dim)."""
    z = rng.standard_normal((count, dim, dim, 2))
    g = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)
    qm, r = np.linalg.qr(g)
    diag = np.einsum("...ii->...i", r)
    phase = diag / np.abs(diag)
    return qm * phase[..., None, :]


def sample_haar_unitary(spec: HaarSampleSpec) -> np.ndarray:
    return haar_unitaries(spec.dim, 1, stream_rng(spec.seed, "haar-unitary", spec.dim))[0]


def haar_states(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of `count` Haar-random unit vectors, shape (count, dim).

    A normalized vector of iid complex Gaussians has the same distribution
    as a column of a Haar unitary.
    """
    z = rng.standard_normal((count, dim, 2))
    v = z[..., 0] + 1j * z[..., 1]
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v


def sample_haar_state(spec: HaarSampleSpec) -> np.ndarray:
    return haar_states(spec.dim, 1, stream_rng(spec.seed, "haar-state", spec.dim))[0]


def haar_average_purity(da: int, db: int) -> float:
    """Ensemble-average purity of a bipartite random pure state: (dA+dB)/(dA dB + 1)."""
    if da < 1 or db < 1:
        raise InputError("subsystem dimensions must be >= 1")
    return (da + db) / (da * db + 1)


def page_average_entropy(da: int, db: int) -> float:
    """Mean subsystem entropy ln(dA) - dA/(2 dB) + 1/(2 dA dB), in nats.

    Truncation of the full series, accurate to O(dB^-2); outside dB >> dA
    the value is still returned but carries that caveat.
    """
    if da < 1 or db < 1:
        raise InputError("subsystem dimensions must be >= 1")
    if da > db:
        raise InputError(f"requires dA <= dB, got dA={da} > dB={db}")
    return math.log(da) - da / (2.0 * db) + 1.0 / (2.0 * da * db)


def levy_entropy_tail(da: int, db: int, tau: float) -> float:
    """Concentration tail exp(-(d-1) tau^2 / (8 pi^2 ln(dA)^2)) for dB >= dA >= 3.

    Bounds the probability that the subsystem entropy of a random state falls
    more than tau below ln(dA) - dA/dB (the centering is kept verbatim).
    """
    if da < 3 or db < da:
        raise DomainError(f"requires dB >= dA >= 3, got dA={da}, dB={db}")
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    d = da * db
    return math.exp(-(d - 1) * tau**2 / (8.0 * math.pi**2 * math.log(da) ** 2))
