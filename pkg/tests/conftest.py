import numpy as np
import pytest

from fluctlab import hamspin


def random_state_amps(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.standard_normal((dim, 2))
    v = z[:, 0] + 1j * z[:, 1]
    return v / np.linalg.norm(v)


def dense_partial_trace(psi: np.ndarray, n: int, q: int, keep) -> np.ndarray:
    """Independent partial-trace oracle: explicit basis-index summation."""
    keep = list(keep)
    rest = [s for s in range(n) if s not in keep]
    da, db = q ** len(keep), q ** len(rest)

    def full_index(ia, ib):
        digits = [0] * n
        for s in reversed(keep):
            digits[s] = ia % q
            ia //= q
        for s in reversed(rest):
            digits[s] = ib % q
            ib //= q
        idx = 0
        for d in digits:
            idx = idx * q + d
        return idx

    rho = np.zeros((da, da), dtype=complex)
    for ia in range(da):
        for ja in range(da):
            acc = 0.0 + 0.0j
            for ib in range(db):
                acc += psi[full_index(ia, ib)] * np.conj(psi[full_index(ja, ib)])
            rho[ia, ja] = acc
    return rho


@pytest.fixture(scope="session")
def spectra_cache():
    """Shared eigendecompositions of the default chain, keyed by n."""
    cache = {}

    def get(n: int) -> hamspin.SpectralData:
        if n not in cache:
            cache[n] = hamspin.diagonalize(hamspin.IsingConfig(n=n))
        return cache[n]

    return get
