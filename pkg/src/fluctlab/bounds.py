"""Closed-form fluctuation bounds and the walker combinatorics behind them.

Every evaluator works in log-space wherever factorials or large powers
appear, and returns finite floats across the whole supported grid.
Probability-type results are exposed both raw and clamped to [0, 1]; the
raw value is what the formulas give and frequently exceeds 1 at desk-scale
dimensions.

The purity of a region evolved by a brickwork circuit reduces to a pair of
annihilating domain walls random-walking on the bond ring, with weight
q/(q^2+1) per gate-covered step.  `walker_reunion_count`, `walk_sum_check`,
`brute_force_walkers` and `brickwork_mean_purity_exact` implement that
combinatorics at increasing levels of generality; the last one is the exact
oracle the circuit engine is validated against.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .errors import DomainError, InputError, ResourceLimitError
from .haar import levy_entropy_tail

logger = logging.getLogger(__name__)

NINE_PI3 = 9.0 * math.pi**3


class BoundId(str, Enum):
    early_entropy = "early_entropy"
    early_trace = "early_trace"
    design_entropy = "design_entropy"
    design_trace = "design_trace"
    late_entropy = "late_entropy"
    late_trace = "late_trace"
    count_entropy = "count_entropy"
    count_trace = "count_trace"
    purity_walk = "purity_walk"
    two_design_entropy = "two_design_entropy"
    two_design_trace = "two_design_trace"
    levy = "levy"
    moment_centered = "moment_centered"


PROBABILITY_BOUNDS = frozenset(
    {
        BoundId.early_entropy,
        BoundId.early_trace,
        BoundId.design_entropy,
        BoundId.design_trace,
        BoundId.late_entropy,
        BoundId.late_trace,
        BoundId.two_design_entropy,
        BoundId.two_design_trace,
        BoundId.levy,
    }
)


@dataclass(frozen=True)
class BoundCurve:
    """One evaluated bound over an abscissa grid (time or fluctuation size)."""

    bound_id: BoundId
    abscissa: np.ndarray
    raw_values: np.ndarray
    values: np.ndarray = None  # clamped to [0, 1] for probability-type bounds

    def __post_init__(self):
        a = np.asarray(self.abscissa, dtype=float)
        raw = np.asarray(self.raw_values, dtype=float)
        if a.shape != raw.shape:
            raise InputError("abscissa and values must share a shape")
        if np.any(raw < 0) or not np.all(np.isfinite(raw)):
            raise InputError("bound values must be finite and nonnegative")
        clamped = np.minimum(raw, 1.0) if self.bound_id in PROBABILITY_BOUNDS else raw
        object.__setattr__(self, "abscissa", a)
        object.__setattr__(self, "raw_values", raw)
        object.__setattr__(self, "values", clamped)


def _trace_denominator(tau: float, main_text_form: bool = False) -> float:
    """max{tau^2, e^{tau^2/2}-1}; the weaker tau^2-only variant is optional."""
    if main_text_form:
        return tau * tau
    if 0.5 * tau * tau > 700.0:  # e^{tau^2/2} overflows; the bound is 0 anyway
        return math.inf
    return max(tau * tau, math.expm1(0.5 * tau * tau))


def early_time_bound(
    tau: float,
    da: int,
    db: int,
    q: int,
    t: int,
    exponent_offset: int = 1,
    main_text_trace: bool = False,
) -> tuple:
    """Markov bounds on sub-maximal entropy and on trace distance after t layers.

    Returns (p_entropy, p_trace).  The decaying term is
    dA * (2q/(q^2+1))^{2(t - exponent_offset)}; offset 1 is the conservative
    exponent valid for either boundary alignment of the region.
    """
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if exponent_offset not in (0, 1):
        raise InputError(f"exponent_offset must be 0 or 1, got {exponent_offset}")
    decay = da * (2.0 * q / (q * q + 1.0)) ** (2 * (t - exponent_offset))
    bracket = da / db + decay
    p_entropy = bracket / math.expm1(tau)
    p_trace = bracket / _trace_denominator(tau, main_text_trace)
    return p_entropy, p_trace


def design_bound(
    tau: float,
    k: int,
    da: int,
    db: int,
    mode: str = "entropy",
    gamma_form: str = "max",
) -> float:
    """Fluctuation bound 2(k! + d^-k) (9 pi^3 / delta^2 * dA/dB)^k for a 4k-design.

    mode "entropy" uses delta = e^tau - 1 - dA/dB (requires tau >= dA/dB).
    mode "trace" uses gamma, selectable because the printed variants differ:
      gamma_form "max":  max{tau^2, e^{tau^2/2}-1} - dA/dB   (tau^2 >= dA/dB)
      gamma_form "exp":  e^{tau^2/2} - 1 - dA/dB             (tau^2 >= 2 dA/dB)
      gamma_form "poly": tau^2 - dA/dB                       (tau^2 >= dA/dB)
    """
    return math.exp(min(log_design_bound(tau, k, da, db, mode, gamma_form), 700.0))


def log_design_bound(
    tau: float,
    k: int,
    da: int,
    db: int,
    mode: str = "entropy",
    gamma_form: str = "max",
) -> float:
    """Natural log of `design_bound`, exact even where the value under/overflows."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    ratio = da / db
    if mode == "entropy":
        if tau < ratio:
            raise DomainError(f"violated precondition tau >= dA/dB ({tau} < {ratio})")
        margin = math.expm1(tau) - ratio
    elif mode == "trace":
        if gamma_form == "max":
            if tau * tau < ratio:
                raise DomainError(f"violated precondition tau^2 >= dA/dB ({tau*tau} < {ratio})")
            margin = max(tau * tau, math.expm1(0.5 * tau * tau)) - ratio
        elif gamma_form == "exp":
            if tau * tau < 2 * ratio:
                raise DomainError(
                    f"violated precondition tau^2 >= 2 dA/dB ({tau*tau} < {2*ratio})"
                )
            margin = math.expm1(0.5 * tau * tau) - ratio
        elif gamma_form == "poly":
            if tau * tau < ratio:
                raise DomainError(f"violated precondition tau^2 >= dA/dB ({tau*tau} < {ratio})")
            margin = tau * tau - ratio
        else:
            raise InputError(f"unknown gamma_form {gamma_form!r}")
    else:
        raise InputError(f"mode must be 'entropy' or 'trace', got {mode!r}")
    if margin <= 0:
        raise DomainError(f"margin {margin!r} not positive; fluctuation size too small")
    d = da * db
    log_core = k * (math.log(NINE_PI3) - 2.0 * math.log(margin) + math.log(da) - math.log(db))
    # 2(k! + d^-k) in log-space: log(k!) + log1p(d^-k / k!)
    log_prefactor = math.log(2.0) + math.lgamma(k + 1.0)
    log_prefactor += math.log1p(math.exp(-k * math.log(d) - math.lgamma(k + 1.0)))
    return log_prefactor + log_core


def late_time_bound(
    tau: float,
    t: int,
    n: int,
    q: int,
    c_design: float = 1.0,
    c_prime: float = 0.5,
    mode: str = "entropy",
) -> float:
    """Super-exponential late-time suppression, plateauing at e^{-C' d / n}.

    (e^{-2 tau} t / d)^{t / (C n)} for t <= C' d, the constant plateau after.
    Trace mode replaces e^{-2 tau} by e^{-tau^2}.  C and C' are free
    parameters of the statement.
    """
    if not (0.0 < c_prime < 1.0):
        raise InputError(f"need 0 < C' < 1, got {c_prime}")
    if c_design <= 0:
        raise InputError(f"need C > 0, got {c_design}")
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if mode not in ("entropy", "trace"):
        raise InputError(f"mode must be 'entropy' or 'trace', got {mode!r}")
    d = float(q) ** n
    if t > c_prime * d:
        return math.exp(-c_prime * d / n)
    rate = -2.0 * tau if mode == "entropy" else -tau * tau
    log_base = rate + math.log(t) - n * math.log(q)
    return math.exp((t / (c_design * n)) * log_base)


def counting_bound(tau: float, da: int, db: int, c: float, mode: str = "entropy") -> float:
    """Expected number of sub-equilibrium dips between local and recurrence times.

    2/(e^tau - 1) * dA^{1 - (2/5)c} in entropy mode; the trace-mode prefactor
    swaps in the trace denominator.  Decays in dA only for c > 5/2; values of
    c in (1, 5/2] are accepted with a warning.
    """
    ratio = da / db
    if mode == "entropy":
        if tau < ratio:
            raise DomainError(f"violated precondition tau >= dA/dB ({tau} < {ratio})")
        prefactor = 2.0 / math.expm1(tau)
    elif mode == "trace":
        if tau * tau < ratio:
            raise DomainError(f"violated precondition tau^2 >= dA/dB ({tau*tau} < {ratio})")
        prefactor = 2.0 / _trace_denominator(tau)
    else:
        raise InputError(f"mode must be 'entropy' or 'trace', got {mode!r}")
    if c <= 1.0:
        raise DomainError(f"requires c > 1, got {c}")
    if c <= 2.5:
        logger.warning("counting_bound: c=%s in (1, 5/2], bound does not decay in d_A", c)
    return prefactor * math.exp(-(0.4 * c - 1.0) * math.log(da))


def two_design_bound(tau: float, da: int, db: int, eps: float, mode: str = "entropy") -> float:
    """Fluctuation bound for an approximate 2-design: (dA/dB)(1+eps)/denominator.

    The entropy denominator is e^tau - 1; the trace denominator is
    max{e^{tau^2/2}-1, tau}, kept exactly as printed (tau, not tau^2).
    """
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if eps < 0:
        raise InputError(f"eps must be >= 0, got {eps}")
    ratio = da / db
    if mode == "entropy":
        return ratio * (1.0 + eps) / math.expm1(tau) if tau < 700.0 else 0.0
    if mode == "trace":
        if 0.5 * tau * tau > 700.0:
            return 0.0
        return ratio * (1.0 + eps) / max(math.expm1(0.5 * tau * tau), tau)
    raise InputError(f"mode must be 'entropy' or 'trace', got {mode!r}")


def purity_walk_bound(
    q: int, a_sites: int, b_sites: int, t: int, exponent_offset: int = 1
) -> float:
    """Upper bound q^-A + q^-B + (2q/(q^2+1))^{2(t-offset)} on the mean purity."""
    if a_sites % 2 != 0:
        raise DomainError(
            f"region must contain an even number of qudits, got A={a_sites}"
        )
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if exponent_offset not in (0, 1):
        raise InputError(f"exponent_offset must be 0 or 1, got {exponent_offset}")
    decay = (2.0 * q / (q * q + 1.0)) ** (2 * (t - exponent_offset))
    return q ** (-float(a_sites)) + q ** (-float(b_sites)) + decay


def walker_reunion_count(a_sites: int, t: int) -> int:
    """First-reunion count (A / 2t) * C(2t, t - A/2) for walkers A bonds apart.

    Exact integer; zero before the walkers can reach each other.
    """
    if a_sites < 2 or a_sites % 2 != 0:
        raise DomainError(f"separation must be even and >= 2, got {a_sites}")
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    half = a_sites // 2
    if t < half:
        return 0
    num = a_sites * math.comb(2 * t, t - half)
    if num % (2 * t) != 0:
        raise ArithmeticError(f"reunion count not integral at A={a_sites}, t={t}")
    return num // (2 * t)


def walk_sum_check(q: int, a_sites: int, t_max: int) -> tuple:
    """Partial sum of reunion weights against its closed-form limit q^-A.

    Returns (partial_sum, target); the series sum_{t} c_A(t) (q/(q^2+1))^{2t}
    telescopes to q^-A, so the partial sum approaches the target from below.
    Summed in exact rational arithmetic so the inequality survives rounding.
    """
    if a_sites < 2 or a_sites % 2 != 0:
        raise DomainError(f"separation must be even and >= 2, got {a_sites}")
    half = a_sites // 2
    if t_max < half:
        raise DomainError(f"t_max must be >= A/2 = {half}, got {t_max}")
    w2 = _walk_weight(q) ** 2
    total = Fraction(0)
    weight = w2**half
    for t in range(half, t_max + 1):
        total += walker_reunion_count(a_sites, t) * weight
        weight *= w2
    target = Fraction(1, q**a_sites)
    assert total <= target
    return float(total), float(target)


def centered_moment_bound(k: int, d: int, eps: float, da: int, db: int) -> float:
    """Bound 2 k! (9 pi^3 / d)^k + eps (1 + 1/dA + 1/dB)^{2k} on purity moments."""
    return math.exp(min(log_centered_moment_bound(k, d, eps, da, db), 700.0))


def log_centered_moment_bound(k: int, d: int, eps: float, da: int, db: int) -> float:
    """Natural log of `centered_moment_bound`, stable at extreme k."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if da < 2 or db < 2:
        raise DomainError(f"subsystem dimensions must be >= 2, got dA={da}, dB={db}")
    if eps < 0:
        raise InputError(f"eps must be >= 0, got {eps}")
    log_haar = math.log(2.0) + math.lgamma(k + 1.0) + k * (math.log(NINE_PI3) - math.log(d))
    if eps == 0:
        return log_haar
    log_design = math.log(eps) + 2 * k * math.log1p(1.0 / da + 1.0 / db)
    return float(np.logaddexp(log_haar, log_design))


def _walk_weight(q: int) -> Fraction:
    return Fraction(q, q * q + 1)


def brute_force_walkers(a_sites: int, b_sites: int, q: int, t: int) -> float:
    """Exact mean purity after t walk steps on the (A+B)-bond ring.

    Dynamic program over the walkers' relative coordinate: each joint step
    shifts it by {-2: 1 way, 0: 2 ways, +2: 1 way}; landing on 0 (mod ring)
    through either arc annihilates the pair and locks in weight
    (q/(q^2+1))^{2 t'}; survivors at depth t carry (q/(q^2+1))^{2t} each.
    Exact rational arithmetic throughout.
    """
    if a_sites < 2 or a_sites % 2 != 0:
        raise DomainError(f"region size must be even and >= 2, got A={a_sites}")
    if b_sites < 2 or b_sites % 2 != 0:
        raise DomainError(f"complement size must be even and >= 2, got B={b_sites}")
    if t < 1:
        raise DomainError(f"t must be >= 1, got {t}")
    if t > 12:
        raise ResourceLimitError(f"enumeration capped at t <= 12, got {t}")
    ring = a_sites + b_sites
    w2 = _walk_weight(q) ** 2
    counts = {a_sites % ring: Fraction(1)}
    purity = Fraction(0)
    step_weight = Fraction(1)
    for _ in range(t):
        step_weight *= w2
        new: dict = {}
        met = Fraction(0)
        for r, c in counts.items():
            for dr, mult in ((-2, 1), (0, 2), (2, 1)):
                rr = (r + dr) % ring
                if rr == 0:
                    met += c * mult
                else:
                    new[rr] = new.get(rr, Fraction(0)) + c * mult
        purity += met * step_weight
        counts = new
    purity += sum(counts.values(), Fraction(0)) * step_weight
    return float(purity)


def region_cut_parities(region_start: int, region_size: int, n: int) -> tuple:
    """Bond parities of the region's two boundary cuts on an n-site ring."""
    left = (region_start - 1) % n
    right = (region_start + region_size - 1) % n
    return left % 2, right % 2


def effective_walk_time(region_start: int, region_size: int, n: int, depth: int) -> int:
    """Walk steps equivalent to `depth` brickwork layers for an even-size region.

    Layer 1 pairs sites (0,1),(2,3),... and covers even bonds; parities then
    alternate.  If the final layer's gates straddle the region's cuts the
    walk runs for `depth` steps, otherwise that layer acts strictly inside
    the region and its complement and the walk loses one step.
    """
    if region_size % 2 != 0:
        raise DomainError("effective walk time is only defined for even-size regions")
    if depth == 0:
        return 0
    pi_left, pi_right = region_cut_parities(region_start, region_size, n)
    if pi_left != pi_right:
        raise DomainError("cut parities differ; region/ring sizes inconsistent")
    top_layer_parity = (depth - 1) % 2
    return depth if top_layer_parity == pi_left else depth - 1


def brickwork_mean_purity_exact(
    n: int, q: int, region_start: int, region_size: int, depth: int
) -> float:
    """Exact brickwork-ensemble mean purity for any contiguous region.

    Generalizes `brute_force_walkers` to arbitrary boundary alignment: a
    domain wall only moves in layers whose gates cover its bond, so each
    walker starts with a delay of 0 or 1 backward steps and moves every
    layer thereafter.  Float arithmetic; intended as the oracle for
    Monte-Carlo means at any depth.
    """
    if not (1 <= region_size < n):
        raise InputError(f"region size must be in [1, n), got {region_size}")
    if depth == 0:
        return 1.0
    w = q / (q * q + 1.0)
    pi_left, pi_right = region_cut_parities(region_start, region_size, n)
    top_layer_parity = (depth - 1) % 2
    delay_left = 0 if pi_left == top_layer_parity else 1
    delay_right = 0 if pi_right == top_layer_parity else 1
    counts = {region_size % n: 1.0}
    purity = 0.0
    weight = 1.0
    for s in range(depth):
        movers = (s >= delay_left) + (s >= delay_right)
        if movers == 0:
            continue
        weight *= w**movers
        moves = ((-1, 1), (1, 1)) if movers == 1 else ((-2, 1), (0, 2), (2, 1))
        new: dict = {}
        met = 0.0
        for r, c in counts.items():
            for dr, mult in moves:
                rr = (r + dr) % n
                if rr == 0:
                    met += c * mult
                else:
                    new[rr] = new.get(rr, 0.0) + c * mult
        purity += met * weight
        counts = new
    return purity + sum(counts.values()) * weight


def evaluate_curve(bound_id: BoundId, abscissa, params: dict) -> BoundCurve:
    """Evaluate one bound over a grid; `params` supplies the fixed arguments."""
    bound_id = BoundId(bound_id)
    xs = np.asarray(list(abscissa), dtype=float)
    vals = []
    for x in xs:
        if bound_id in (BoundId.early_entropy, BoundId.early_trace):
            pe, pt = early_time_bound(
                params["tau"],
                params["da"],
                params["db"],
                params["q"],
                int(x),
                params.get("exponent_offset", 1),
            )
            vals.append(pe if bound_id is BoundId.early_entropy else pt)
        elif bound_id in (BoundId.design_entropy, BoundId.design_trace):
            mode = "entropy" if bound_id is BoundId.design_entropy else "trace"
            vals.append(design_bound(params["tau"], int(x), params["da"], params["db"], mode))
        elif bound_id in (BoundId.late_entropy, BoundId.late_trace):
            mode = "entropy" if bound_id is BoundId.late_entropy else "trace"
            vals.append(
                late_time_bound(
                    params["tau"],
                    int(x),
                    params["n"],
                    params["q"],
                    params.get("c_design", 1.0),
                    params.get("c_prime", 0.5),
                    mode,
                )
            )
        elif bound_id in (BoundId.count_entropy, BoundId.count_trace):
            mode = "entropy" if bound_id is BoundId.count_entropy else "trace"
            vals.append(counting_bound(x, params["da"], params["db"], params["c"], mode))
        elif bound_id is BoundId.purity_walk:
            vals.append(
                purity_walk_bound(
                    params["q"],
                    params["a_sites"],
                    params["b_sites"],
                    int(x),
                    params.get("exponent_offset", 1),
                )
            )
        elif bound_id in (BoundId.two_design_entropy, BoundId.two_design_trace):
            mode = "entropy" if bound_id is BoundId.two_design_entropy else "trace"
            vals.append(two_design_bound(x, params["da"], params["db"], params["eps"], mode))
        elif bound_id is BoundId.levy:
            vals.append(levy_entropy_tail(params["da"], params["db"], x))
        elif bound_id is BoundId.moment_centered:
            vals.append(
                centered_moment_bound(
                    int(x), params["d"], params.get("eps", 0.0), params["da"], params["db"]
                )
            )
        else:  # pragma: no cover
            raise InputError(f"unhandled bound id {bound_id}")
    return BoundCurve(bound_id=bound_id, abscissa=xs, raw_values=np.array(vals))
