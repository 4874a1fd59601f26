"""Configuration-driven experiment runner and CSV persistence.

One experiment per config file; each experiment id is the analog of one
figure-style measurement.  Determinism contract: for a fixed (config,
master_seed), output bytes are identical for any worker count, because
work is split into fixed-size trial chunks whose results merge in chunk
order, and every trial derives its own counter-based stream.

CSV layout: '#'-prefixed metadata preamble (config echo, hash, PRNG id,
wall time last), then a header row and UTF-8 data rows.  Files are written
to a temp file and renamed, so an interrupted run never leaves a partial
file behind.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, bounds, fluxstats, hamspin, rqc
from .errors import (
    ConfigError,
    DomainError,
    InputError,
    NumericalValidityError,
    ResourceLimitError,
)
from .haar import PRNG_ID, derive_seed, levy_entropy_tail, stream_rng
from .qstate import Subregion, batched_observables

SCHEMA_VERSION = 1
STATE_DIM_GUARD = 2**24

EXPERIMENT_IDS = (
    "rqc_relax",
    "rqc_tails",
    "rqc_tail_means",
    "ham_relax",
    "ham_stationary",
    "ham_ttf",
    "ccrqc_homog",
    "ccrqc_step",
    "bounds_sweep",
)

RQC_FAMILY = ("rqc_relax", "rqc_tails", "rqc_tail_means")
CCRQC_FAMILY = ("ccrqc_homog", "ccrqc_step")
HAM_FAMILY = ("ham_relax", "ham_stationary", "ham_ttf")

LN2 = math.log(2.0)


@dataclass(frozen=True)
class FieldSpec:
    default: object
    kind: str  # int | float | str | list_int | list_float
    check: object = None  # callable(value) -> error string or None


def _positive_int(v):
    return None if v >= 1 else "must be >= 1"


def _nonneg_int(v):
    return None if v >= 0 else "must be >= 0"


def _even_ring(v):
    return None if v >= 4 and v % 2 == 0 else "must be even and >= 4"


def _ham_sizes(vs):
    for v in vs:
        if not 2 <= v <= hamspin.MAX_DENSE_SITES:
            return f"sizes must lie in [2, {hamspin.MAX_DENSE_SITES}]"
    return None


_COMMON = {
    "experiment_id": FieldSpec(None, "str"),
    "master_seed": FieldSpec(0, "int", _nonneg_int),
    "trials": FieldSpec(1000, "int", _positive_int),
    "workers": FieldSpec(1, "int", _positive_int),
    "chunk_size": FieldSpec(256, "int", _positive_int),
    "out_path": FieldSpec(None, "str"),
}

_RQC_MODEL = {
    "n": FieldSpec(6, "int", _even_ring),
    "q": FieldSpec(2, "int", _positive_int),
    "depth": FieldSpec(15, "int", _nonneg_int),
    "ensemble": FieldSpec(rqc.HAAR, "str"),
    "initial_state": FieldSpec("zeros", "str"),
    "region_start": FieldSpec(0, "int", _nonneg_int),
    "region_size": FieldSpec(1, "int", _positive_int),
    "record_every": FieldSpec(1, "int", _positive_int),
}

_HAM_MODEL = {
    "n_values": FieldSpec([8, 10], "list_int", _ham_sizes),
    "j": FieldSpec(1.0, "float"),
    "g": FieldSpec(-1.05, "float"),
    "h": FieldSpec(0.5, "float"),
    "boundary": FieldSpec("periodic", "str"),
    "region_start": FieldSpec(0, "int", _nonneg_int),
    "region_size": FieldSpec(2, "int", _positive_int),
}

SCHEMAS = {
    "rqc_relax": {**_COMMON, **_RQC_MODEL},
    "rqc_tails": {
        **_COMMON,
        **_RQC_MODEL,
        "tail_times": FieldSpec([1, 2, 3, 5, 7, 10, 15], "list_int"),
        "delta_s_grid": FieldSpec([round(0.05 * k, 3) for k in range(14)], "list_float"),
    },
    "rqc_tail_means": {
        **_COMMON,
        **_RQC_MODEL,
        "alphas": FieldSpec([0.0, 1.0, 2.0], "list_float"),
    },
    "ham_relax": {
        **_COMMON,
        **_HAM_MODEL,
        "t_min": FieldSpec(0.1, "float"),
        "t_max": FieldSpec(1.0e4, "float"),
        "num_times": FieldSpec(300, "int", _positive_int),
        "avg_window": FieldSpec([100.0, 1.0e4], "list_float"),
        "avg_samples": FieldSpec(1000, "int", _positive_int),
    },
    "ham_stationary": {
        **_COMMON,
        **{**_HAM_MODEL, "region_size": FieldSpec(1, "int", _positive_int)},
        "window": FieldSpec([1.0e2, 1.0e6], "list_float"),
        "num_times": FieldSpec(10_000, "int", _positive_int),
        "delta_s_grid": FieldSpec([], "list_float"),  # empty -> per-n adaptive grid
        "grid_points": FieldSpec(12, "int", _positive_int),
    },
    "ham_ttf": {
        **_COMMON,
        **{**_HAM_MODEL, "region_size": FieldSpec(1, "int", _positive_int)},
        "t_max": FieldSpec(1.0e6, "float"),
        "num_times": FieldSpec(800, "int", _positive_int),
        "num_states": FieldSpec(20, "int", _positive_int),
        "burn_in": FieldSpec(100.0, "float"),
        "delta_s_grid": FieldSpec([round(0.02 * k, 3) for k in range(1, 11)], "list_float"),
    },
    "ccrqc_homog": {
        **_COMMON,
        "n_values": FieldSpec([6, 10], "list_int"),
        "depth": FieldSpec(100, "int", _nonneg_int),
        "region_start": FieldSpec(None, "int", _nonneg_int),  # None -> n // 4
        "region_size": FieldSpec(1, "int", _positive_int),
        "record_every": FieldSpec(1, "int", _positive_int),
    },
    "bounds_sweep": {
        **_COMMON,
        "n": FieldSpec(8, "int", _even_ring),
        "q": FieldSpec(2, "int", _positive_int),
        "a_sites": FieldSpec(2, "int", _positive_int),
        "tau": FieldSpec(1.0, "float"),
        "t_grid": FieldSpec(list(range(1, 21)), "list_int"),
        "tau_grid": FieldSpec([0.25, 0.5, 1.0, 2.0], "list_float"),
        "k_grid": FieldSpec([1, 2, 4, 8], "list_int"),
        "c_grid": FieldSpec([3.0, 5.0, 8.0], "list_float"),
        "eps": FieldSpec(0.01, "float"),
        "c_design": FieldSpec(1.0, "float"),
        "c_prime": FieldSpec(0.5, "float"),
        "exponent_offset": FieldSpec(1, "int"),
        "empirical_trials": FieldSpec(0, "int", _nonneg_int),
    },
}
SCHEMAS["ccrqc_step"] = SCHEMAS["ccrqc_homog"]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    master_seed: int
    trials: int
    workers: int
    chunk_size: int
    out_path: str
    params: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        doc = {
            "experiment_id": self.experiment_id,
            "master_seed": self.master_seed,
            "trials": self.trials,
            "workers": self.workers,
            "chunk_size": self.chunk_size,
            "out_path": self.out_path,
        }
        doc.update(self.params)
        return {k: doc[k] for k in sorted(doc)}

    def config_hash(self) -> str:
        import hashlib

        doc = {k: v for k, v in self.canonical().items() if k not in ("workers", "out_path")}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _coerce(name, value, spec, errors):
    kind = spec.kind
    try:
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            out = int(value)
        elif kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            out = float(value)
        elif kind == "str":
            if not isinstance(value, str):
                raise TypeError
            out = value
        elif kind == "list_int":
            if not isinstance(value, list) or any(
                isinstance(v, bool) or not isinstance(v, int) for v in value
            ):
                raise TypeError
            out = [int(v) for v in value]
        elif kind == "list_float":
            if not isinstance(value, list) or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
            ):
                raise TypeError
            out = [float(v) for v in value]
        else:  # pragma: no cover
            raise TypeError
    except TypeError:
        errors.append(f"{name}: expected {kind}, got {value!r}")
        return None
    if spec.check is not None:
        msg = spec.check(out)
        if msg:
            errors.append(f"{name}: {msg}")
    return out


def validate_config(raw: dict):
    """Full validation: returns ExperimentConfig or raises ConfigError listing
    every violated constraint with its field path.  Unknown keys are rejected."""
    errors = []
    if not isinstance(raw, dict):
        raise ConfigError(["document: must be a key-value object"])
    exp_id = raw.get("experiment_id")
    if exp_id not in EXPERIMENT_IDS:
        raise ConfigError(
            [f"experiment_id: must be one of {', '.join(EXPERIMENT_IDS)}, got {exp_id!r}"]
        )
    schema = SCHEMAS[exp_id]
    for key in raw:
        if key not in schema:
            errors.append(f"{key}: unknown key for experiment {exp_id}")
    values = {}
    for name, spec in schema.items():
        if name == "experiment_id":
            continue
        if name in raw:
            values[name] = _coerce(name, raw[name], spec, errors)
        elif spec.default is None and name not in ("out_path", "region_start"):
            errors.append(f"{name}: required")
        else:
            values[name] = spec.default

    _cross_validate(exp_id, values, errors)
    if errors:
        raise ConfigError(errors)

    if values.get("out_path") is None:
        values["out_path"] = f"{exp_id}.csv"
    common = {k: values.pop(k) for k in ("master_seed", "trials", "workers", "chunk_size", "out_path")}
    return ExperimentConfig(experiment_id=exp_id, params=values, **common)


def _cross_validate(exp_id, values, errors):
    if exp_id in RQC_FAMILY:
        n, q = values.get("n"), values.get("q")
        if isinstance(n, int) and isinstance(q, int) and q >= 2 and n >= 4:
            if q**n > STATE_DIM_GUARD:
                errors.append(f"n: state dimension q^n = {q**n} exceeds guard {STATE_DIM_GUARD}")
            rs, rl = values.get("region_start"), values.get("region_size")
            if isinstance(rs, int) and isinstance(rl, int) and not (0 <= rs < n and 1 <= rl < n):
                errors.append("region_size: region must fit strictly inside the ring")
        if values.get("ensemble") not in (rqc.HAAR, rqc.U1):
            errors.append(f"ensemble: must be '{rqc.HAAR}' or '{rqc.U1}'")
        if values.get("ensemble") == rqc.U1:
            if values.get("q") != 2:
                errors.append("ensemble: u1_conserving requires q = 2")
            if values.get("initial_state") not in (rqc.HOMOGENEOUS, rqc.STEP):
                errors.append(
                    "initial_state: u1_conserving requires a half-filling charge pattern"
                )
            if isinstance(n, int) and n % 2 != 0:
                errors.append("n: u1 half-filling requires even n")
        if exp_id == "rqc_tails":
            depth, re_ = values.get("depth"), values.get("record_every")
            if isinstance(depth, int) and isinstance(re_, int) and re_ >= 1:
                rec = set(rqc.recorded_times(depth, re_))
                bad = [t for t in values.get("tail_times", []) if t not in rec]
                if bad:
                    errors.append(f"tail_times: {bad} not among recorded layers")
    elif exp_id in CCRQC_FAMILY:
        for n in values.get("n_values", []):
            if n % 2 != 0 or n < 4:
                errors.append("n_values: u1 half-filling requires even n >= 4")
            elif 2**n > STATE_DIM_GUARD:
                errors.append(f"n_values: 2^{n} exceeds the state guard")
    elif exp_id in HAM_FAMILY:
        if values.get("boundary") not in ("periodic", "open"):
            errors.append("boundary: must be 'periodic' or 'open'")
        for n in values.get("n_values", []):
            rs, rl = values.get("region_start"), values.get("region_size")
            if isinstance(rs, int) and isinstance(rl, int) and rs + rl > n:
                errors.append(f"region_size: region [{rs}, {rs+rl}) does not fit in n={n}")
    elif exp_id == "bounds_sweep":
        if values.get("exponent_offset") not in (0, 1):
            errors.append("exponent_offset: must be 0 or 1")
        a = values.get("a_sites")
        if isinstance(a, int) and (a % 2 != 0 or a < 2):
            errors.append("a_sites: must be even and >= 2")
        n, a = values.get("n"), values.get("a_sites")
        if isinstance(n, int) and isinstance(a, int) and a >= n:
            errors.append("a_sites: must be smaller than n")


@dataclass
class ResultTable:
    experiment_id: str
    columns: list
    rows: list
    metadata: dict
    schema_version: int = SCHEMA_VERSION

    def validate(self):
        width = len(self.columns)
        for k, row in enumerate(self.rows):
            if len(row) != width:
                raise InputError(f"row {k} has {len(row)} cells, expected {width}")


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    s = str(v)
    if "," in s or "\n" in s:
        raise InputError(f"cell value {s!r} would break the CSV")
    return s


def write_result_table(table: ResultTable, path: str, wall_time_s: float) -> None:
    """Atomic CSV write: temp file in the target directory, then rename."""
    table.validate()
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    lines = [
        f"# fluctlab schema_version={table.schema_version}",
        f"# experiment_id={table.experiment_id}",
        f"# config={json.dumps(table.metadata.get('config', {}), sort_keys=True)}",
        f"# config_hash={table.metadata.get('config_hash', '')}",
        f"# build=fluctlab-{__version__}",
        f"# prng={PRNG_ID}",
        f"# summary={json.dumps(table.metadata.get('summary', {}), sort_keys=True)}",
        f"# wall_time_s={wall_time_s:.3f}",
        ",".join(table.columns),
    ]
    lines += [",".join(_format_cell(v) for v in row) for row in table.rows]
    body = "\n".join(lines) + "\n"
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def read_result_table(path: str):
    """Parse a result CSV back into (metadata, columns, row dicts of floats/str)."""
    metadata = {}
    columns = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                key, _, val = line[2:].partition("=")
                metadata[key] = val
            elif columns is None:
                columns = line.split(",")
            elif line:
                cells = []
                for cell in line.split(","):
                    try:
                        cells.append(float(cell))
                    except ValueError:
                        cells.append(cell)
                rows.append(dict(zip(columns, cells)))
    return metadata, columns, rows


# ---------------------------------------------------------------------------
# chunked execution

def _chunk_plan(trials: int, chunk_size: int) -> list:
    return [(start, min(chunk_size, trials - start)) for start in range(0, trials, chunk_size)]


def _rqc_chunk_worker(payload):
    cfg = payload["circuit"]
    circuit = rqc.CircuitConfig(**cfg)
    regions = [Subregion.interval(payload["region_start"], payload["region_size"], cfg["n"])]
    chunk = rqc.run_chunk(
        circuit,
        payload["start"],
        payload["size"],
        regions,
        record_every=payload["record_every"],
        track_charge=payload["track_charge"],
    )
    out = {
        "start": payload["start"],
        "times": chunk.times,
        "entropy": chunk.entropy[:, :, 0],
        "dist_mm": chunk.dist_mm[:, :, 0],
        "purity": chunk.purity[:, :, 0],
    }
    if payload["track_charge"]:
        out["oos_max"] = chunk.oos_weight.max(axis=0)
    return out


def _run_chunked(config: ExperimentConfig, payload_base: dict):
    """Run the chunk worker over all trials, merging results in chunk order."""
    plan = _chunk_plan(config.trials, config.chunk_size)
    payloads = [dict(payload_base, start=start, size=size) for start, size in plan]
    if config.workers == 1:
        return [_rqc_chunk_worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_rqc_chunk_worker, payloads))


def _circuit_dict(config: ExperimentConfig, n=None, ensemble=None, initial=None, depth=None):
    p = config.params
    return {
        "n": n if n is not None else p["n"],
        "q": p.get("q", 2),
        "depth": depth if depth is not None else p["depth"],
        "ensemble": ensemble if ensemble is not None else p.get("ensemble", rqc.HAAR),
        "initial_state": initial if initial is not None else p.get("initial_state", "zeros"),
        "master_seed": derive_seed(config.master_seed, config.experiment_id),
    }


# ---------------------------------------------------------------------------
# experiment implementations

def _run_rqc_relax(config: ExperimentConfig) -> ResultTable:
    p = config.params
    payload = {
        "circuit": _circuit_dict(config),
        "region_start": p["region_start"],
        "region_size": p["region_size"],
        "record_every": p["record_every"],
        "track_charge": False,
    }
    chunks = _run_chunked(config, payload)
    times = chunks[0]["times"]
    acc = fluxstats.MomentAccumulator(shape=(times.shape[0], 3))
    for ch in chunks:
        acc.update(np.stack([ch["entropy"], ch["dist_mm"], ch["purity"]], axis=-1))
    mean, rms, sem = acc.mean(), acc.rms_deviation(), acc.sem()
    rows = [
        (
            float(t), float(mean[i, 0]), float(rms[i, 0]), float(sem[i, 0]),
            float(mean[i, 1]), float(mean[i, 2]), acc.count,
        )
        for i, t in enumerate(times)
    ]
    return ResultTable(
        experiment_id=config.experiment_id,
        columns=[
            "time", "mean_entropy", "rms_entropy", "sem_entropy",
            "mean_dist_mm", "mean_purity", "n_trials",
        ],
        rows=rows,
        metadata={},
    )


def _run_rqc_tails(config: ExperimentConfig) -> ResultTable:
    p = config.params
    payload = {
        "circuit": _circuit_dict(config),
        "region_start": p["region_start"],
        "region_size": p["region_size"],
        "record_every": p["record_every"],
        "track_charge": False,
    }
    chunks = _run_chunked(config, payload)
    times = chunks[0]["times"]
    sel = [int(np.nonzero(times == t)[0][0]) for t in p["tail_times"]]
    s_max = p["region_size"] * math.log(p["q"])
    grid = np.asarray(p["delta_s_grid"], dtype=float)
    counter = fluxstats.TailCounter(grid=grid, n_times=len(sel))
    for ch in chunks:
        counter.update(s_max - ch["entropy"][:, sel])
    rows = []
    for j, t in enumerate(p["tail_times"]):
        table = counter.table(j)
        for k in range(grid.shape[0]):
            rows.append(
                (
                    float(t), float(grid[k]), float(table.prob[k]),
                    float(table.stderr_lo[k]), float(table.stderr_hi[k]), counter.count,
                )
            )
    return ResultTable(
        experiment_id=config.experiment_id,
        columns=["time", "delta_s", "prob", "stderr_lo", "stderr_hi", "n_trials"],
        rows=rows,
        metadata={"summary": {"s_max": s_max}},
    )


def _run_rqc_tail_means(config: ExperimentConfig) -> ResultTable:
    p = config.params
    payload = {
        "circuit": _circuit_dict(config),
        "region_start": p["region_start"],
        "region_size": p["region_size"],
        "record_every": p["record_every"],
        "track_charge": False,
    }
    chunks = _run_chunked(config, payload)
    times = chunks[0]["times"]
    s_max = p["region_size"] * math.log(p["q"])
    delta = s_max - np.concatenate([ch["entropy"] for ch in chunks])
    rows = []
    for i, t in enumerate(times):
        for alpha in p["alphas"]:
            mean, n_tail = fluxstats.tail_conditional_mean_from_values(delta[:, i], alpha)
            stderr = fluxstats.grouped_jackknife_stderr(
                delta[:, i],
                lambda v, a=alpha: fluxstats.tail_conditional_mean_from_values(v, a)[0],
                n_groups=20,
            )
            rows.append((float(t), float(alpha), mean, stderr, n_tail, delta.shape[0]))
    return ResultTable(
        experiment_id=config.experiment_id,
        columns=["time", "alpha", "tail_mean", "stderr", "n_tail", "n_trials"],
        rows=rows,
        metadata={"summary": {"s_max": s_max}},
    )


def _run_ccrqc(config: ExperimentConfig) -> ResultTable:
    p = config.params
    pattern = rqc.HOMOGENEOUS if config.experiment_id == "ccrqc_homog" else rqc.STEP
    rows = []
    summary = {}
    for n in p["n_values"]:
        start = p["region_start"] if p["region_start"] is not None else n // 4
        payload = {
            "circuit": _circuit_dict(config, n=n, ensemble=rqc.U1, initial=pattern),
            "region_start": start,
            "region_size": p["region_size"],
            "record_every": p["record_every"],
            "track_charge": True,
        }
        chunks = _run_chunked(config, payload)
        times = chunks[0]["times"]
        acc = fluxstats.MomentAccumulator(shape=(times.shape[0],))
        oos = np.zeros(times.shape[0])
        for ch in chunks:
            acc.update(ch["entropy"])
            oos = np.maximum(oos, ch["oos_max"])
        mean, rms, sem = acc.mean(), acc.rms_deviation(), acc.sem()
        rows += [
            (n, float(t), float(mean[i]), float(rms[i]), float(sem[i]), float(oos[i]), acc.count)
            for i, t in enumerate(times)
        ]
        summary[str(n)] = {"max_out_of_sector_weight": float(oos.max()), "region_start": start}
    return ResultTable(
        experiment_id=config.experiment_id,
        columns=[
            "n", "time", "mean_entropy", "rms_entropy", "sem_entropy",
            "oos_weight_max", "n_trials",
        ],
        rows=rows,
        metadata={"summary": summary},
    )


def _ham_spectrum(config: ExperimentConfig, n: int):
    p = config.params
    ising = hamspin.IsingConfig(n=n, j=p["j"], g=p["g"], h=p["h"], boundary=p["boundary"])
    return hamspin.diagonalize(ising)


def _run_ham_relax(config: ExperimentConfig) -> ResultTable:
    p = config.params
    rows = []
    summary = {}
    for n in p["n_values"]:
        spec = _ham_spectrum(config, n)
        psi0 = hamspin.make_y_plus_state(n)
        region = Subregion.interval(p["region_start"], p["region_size"], n)
        rho_avg = hamspin.dephased_average(spec, psi0, region)
        times = np.logspace(math.log10(p["t_min"]), math.log10(p["t_max"]), p["num_times"])
        fl = hamspin.fluctuation_series(spec, psi0, times, region, rho_avg)
        rows += [(n, float(t), float(f)) for t, f in zip(times, fl)]

        deff = hamspin.effective_dimension(spec, psi0)
        rng = stream_rng(config.master_seed, config.experiment_id, "avg", n)
        lo, hi = p["avg_window"]
        avg_times = rng.uniform(lo, hi, p["avg_samples"])
        favg = float(hamspin.fluctuation_series(spec, psi0, avg_times, region, rho_avg).mean())
        da = 2 ** p["region_size"]
        plateau = times[times >= 10 * n]
        plateau_median = float(np.median(fl[times >= 10 * n]))
        summary[str(n)] = {
            "d_eff": deff,
            "favg": favg,
            "favg_bound": da / math.sqrt(deff),
            "plateau_median": plateau_median,
            "plateau_window": [float(plateau[0]), float(plateau[-1])] if plateau.size else [],
        }
    return ResultTable(
        experiment_id=config.experiment_id,
        columns=["n", "time", "fluct"],
        rows=rows,
        metadata={"summary": summary},
    )


def _run_ham_stationary(config: ExperimentConfig) -> ResultTable:
    p = config.params
    rows = []
    summary = {}
    s_max = p["region_size"] * LN2
    for n in p["n_values"]:
        spec = _ham_spectrum(config, n)
        psi0 = hamspin.make_y_plus_state(n)
        region = Subregion.interval(p["region_start"], p["region_size"], n)
        rng = stream_rng(config.master_seed, config.experiment_id, "times", n)
        lo, hi = p["window"]
        times = rng.uniform(lo, hi, p["num_times"])
        eigs = hamspin.reduced_eigs_at_times(spec, psi0, times, region)
        entropy, _, _ = batched_observables(eigs)
        delta = s_max - entropy
        if p["delta_s_grid"]:
            grid = np.asarray(p["delta_s_grid"], dtype=float)
        else:
            hi_q = np.quantile(delta, 1.0 - 30.0 / delta.shape[0])
            grid = np.linspace(np.quantile(delta, 0.3), hi_q, p["grid_points"])
        table = fluxstats.tail_table_from_values(delta, grid)
        for k in range(grid.shape[0]):
            rows.append(
                (
                    n, float(grid[k]), float(grid[k] / LN2), float(table.prob[k]),
                    float(table.stderr_lo[k]), float(table.stderr_hi[k]), p["num_times"],
                )
            )
        positive = table.prob > 0
        slope = float(
            np.polyfit(grid[positive], np.log(table.prob[positive]), 1)[0]
        )
        summary[str(n)] = {
            "slope_ln_prob_per_nat": slope,
            "sampling": f"uniform random, {p['num_times']} times in [{lo}, {hi}]",
        }
    return ResultTable(
        experiment_id=config.experiment_id,
        columns=["n", "delta_s", "delta_s_bits", "prob", "stderr_lo", "stderr_hi", "n_times"],
        rows=rows,
        metadata={"summary": summary},
    )


def _run_ham_ttf(config: ExperimentConfig) -> ResultTable:
    p = config.params
    rows = []
    summary = {}
    s_max = p["region_size"] * LN2
    grid = np.asarray(p["delta_s_grid"], dtype=float)
    for n in p["n_values"]:
        spec = _ham_spectrum(config, n)
        region = Subregion.interval(p["region_start"], p["region_size"], n)
        times = np.logspace(
            math.log10(max(p["burn_in"], 1e-3)), math.log10(p["t_max"]), p["num_times"]
        )
        first = np.full((p["num_states"], grid.shape[0]), np.nan)
        for s_idx in range(p["num_states"]):
            rng = stream_rng(config.master_seed, config.experiment_id, "state", n, s_idx)
            psi0 = hamspin.random_product_state(n, rng)
            eigs = hamspin.reduced_eigs_at_times(spec, psi0, times, region)
            entropy, _, _ = batched_observables(eigs)
            delta = s_max - entropy
            for g_idx, ds in enumerate(grid):
                hits = np.nonzero(delta >= ds)[0]
                if hits.size:
                    first[s_idx, g_idx] = times[hits[0]]
        for g_idx, ds in enumerate(grid):
            vals = first[:, g_idx]
            reached = vals[~np.isnan(vals)]
            mean = float(reached.mean()) if reached.size else float("nan")
            stderr = (
                float(reached.std(ddof=1) / math.sqrt(reached.size))
                if reached.size > 1
                else float("nan")
            )
            rows.append(
                (
                    n, float(ds), float(ds / LN2), mean, stderr,
                    int(reached.size), p["num_states"],
                )
            )
        summary[str(n)] = {"burn_in": p["burn_in"], "time_grid": "log-spaced"}
    return ResultTable(
        experiment_id=config.experiment_id,
        columns=[
            "n", "delta_s", "delta_s_bits", "mean_ttf", "stderr_ttf",
            "n_reached", "n_states",
        ],
        rows=rows,
        metadata={"summary": summary},
    )


def _empty(v=""):
    return v


def _run_bounds_sweep(config: ExperimentConfig) -> ResultTable:
    p = config.params
    n, q, a_sites = p["n"], p["q"], p["a_sites"]
    b_sites = n - a_sites
    da, db = q**a_sites, q**b_sites
    offset = p["exponent_offset"]
    columns = [
        "bound_id", "t", "tau", "k", "c", "n", "q", "a_sites", "b_sites",
        "raw_value", "value", "empirical_mean", "empirical_sem", "within_3sigma",
    ]
    rows = []
    skipped = []

    def add(bound_id, t="", tau="", k="", c="", raw=None, emp=None, sem=None):
        if callable(raw):
            # grid sweeps routinely cross the bounds' domain boundaries;
            # infeasible points are skipped and tallied, not fatal
            try:
                raw = raw()
            except DomainError as exc:
                skipped.append(f"{bound_id}[t={t},tau={tau},k={k},c={c}]: {exc}")
                return
        clamped = min(raw, 1.0) if bounds.BoundId(bound_id) in bounds.PROBABILITY_BOUNDS else raw
        within = ""
        if emp is not None:
            within = emp <= clamped + 3.0 * sem
        rows.append(
            (
                bound_id, t, tau, k, c, n, q, a_sites, b_sites,
                float(raw), float(clamped),
                float(emp) if emp is not None else "",
                float(sem) if sem is not None else "",
                within,
            )
        )

    empirical = {}
    if p["empirical_trials"] > 0:
        t_max = max(p["t_grid"])
        payload = {
            "circuit": {
                "n": n, "q": q, "depth": t_max, "ensemble": rqc.HAAR,
                "initial_state": "zeros",
                "master_seed": derive_seed(config.master_seed, config.experiment_id),
            },
            "region_start": 1,
            "region_size": a_sites,
            "record_every": 1,
            "track_charge": False,
        }
        cfg_emp = ExperimentConfig(
            experiment_id=config.experiment_id,
            master_seed=config.master_seed,
            trials=p["empirical_trials"],
            workers=config.workers,
            chunk_size=config.chunk_size,
            out_path=config.out_path,
            params=p,
        )
        chunks = _run_chunked(cfg_emp, payload)
        times = chunks[0]["times"]
        acc = fluxstats.MomentAccumulator(shape=(times.shape[0],))
        for ch in chunks:
            acc.update(ch["purity"])
        for i, t in enumerate(times):
            empirical[int(t)] = (float(acc.mean()[i]), float(acc.sem()[i]))

    tau0 = p["tau"]
    for t in p["t_grid"]:
        add("early_entropy", t=t, tau=tau0,
            raw=lambda t=t: bounds.early_time_bound(tau0, da, db, q, t, offset)[0])
        add("early_trace", t=t, tau=tau0,
            raw=lambda t=t: bounds.early_time_bound(tau0, da, db, q, t, offset)[1])
        emp = empirical.get(int(t))
        add(
            "purity_walk", t=t,
            raw=lambda t=t: bounds.purity_walk_bound(q, a_sites, b_sites, t, offset),
            emp=emp[0] if emp else None, sem=emp[1] if emp else None,
        )
        add(
            "late_entropy", t=t, tau=tau0,
            raw=lambda t=t: bounds.late_time_bound(
                tau0, t, n, q, p["c_design"], p["c_prime"], "entropy"
            ),
        )
        add(
            "late_trace", t=t, tau=tau0,
            raw=lambda t=t: bounds.late_time_bound(
                tau0, t, n, q, p["c_design"], p["c_prime"], "trace"
            ),
        )
    for k in p["k_grid"]:
        add("design_entropy", tau=tau0, k=k,
            raw=lambda k=k: bounds.design_bound(tau0, k, da, db, "entropy"))
        add("design_trace", tau=tau0, k=k,
            raw=lambda k=k: bounds.design_bound(tau0, k, da, db, "trace"))
        add(
            "moment_centered", k=k,
            raw=lambda k=k: bounds.centered_moment_bound(k, da * db, p["eps"], da, db),
        )
    for tau in p["tau_grid"]:
        add(
            "two_design_entropy", tau=tau,
            raw=lambda tau=tau: bounds.two_design_bound(tau, da, db, p["eps"], "entropy"),
        )
        add(
            "two_design_trace", tau=tau,
            raw=lambda tau=tau: bounds.two_design_bound(tau, da, db, p["eps"], "trace"),
        )
        if da >= 3:
            add("levy", tau=tau, raw=lambda tau=tau: levy_entropy_tail(da, db, tau))
        for c in p["c_grid"]:
            add(
                "count_entropy", tau=tau, c=c,
                raw=lambda tau=tau, c=c: bounds.counting_bound(tau, da, db, c, "entropy"),
            )
            add(
                "count_trace", tau=tau, c=c,
                raw=lambda tau=tau, c=c: bounds.counting_bound(tau, da, db, c, "trace"),
            )
    return ResultTable(
        experiment_id=config.experiment_id,
        columns=columns,
        rows=rows,
        metadata={
            "summary": {
                "da": da, "db": db, "exponent_offset": offset,
                "skipped_grid_points": skipped,
            }
        },
    )


RUNNERS = {
    "rqc_relax": _run_rqc_relax,
    "rqc_tails": _run_rqc_tails,
    "rqc_tail_means": _run_rqc_tail_means,
    "ham_relax": _run_ham_relax,
    "ham_stationary": _run_ham_stationary,
    "ham_ttf": _run_ham_ttf,
    "ccrqc_homog": _run_ccrqc,
    "ccrqc_step": _run_ccrqc,
    "bounds_sweep": _run_bounds_sweep,
}


def run_experiment(config: ExperimentConfig) -> ResultTable:
    """Run one experiment and persist its table; returns the table."""
    t0 = time.monotonic()
    table = RUNNERS[config.experiment_id](config)
    table.metadata["config"] = config.canonical()
    table.metadata["config_hash"] = config.config_hash()
    write_result_table(table, config.out_path, wall_time_s=time.monotonic() - t0)
    return table


def bounds_sweep(config: ExperimentConfig) -> ResultTable:
    if config.experiment_id != "bounds_sweep":
        raise ConfigError(["experiment_id: sweep-bounds requires experiment_id=bounds_sweep"])
    return run_experiment(config)


# ---------------------------------------------------------------------------
# CLI

def _load_config(path: str, overrides) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"])
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file is not valid JSON: {exc}"])
    if overrides.seed is not None:
        raw["master_seed"] = overrides.seed
    if overrides.workers is not None:
        raw["workers"] = overrides.workers
    if overrides.trials is not None:
        raw["trials"] = overrides.trials
    config = validate_config(raw)
    if overrides.out_dir is not None:
        out = os.path.join(overrides.out_dir, os.path.basename(config.out_path))
        config = ExperimentConfig(
            experiment_id=config.experiment_id,
            master_seed=config.master_seed,
            trials=config.trials,
            workers=config.workers,
            chunk_size=config.chunk_size,
            out_path=out,
            params=config.params,
        )
    return config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluctlab",
        description="Run fluctuation-statistics experiments from a JSON config.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run any experiment config"),
        ("sweep-bounds", "tabulate every bound evaluator over the configured grids"),
        ("validate", "validate a config and echo the normalized form"),
    ):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("config", help="path to a JSON config file")
        s.add_argument("--seed", type=int, default=None, help="override master_seed")
        s.add_argument("--workers", type=int, default=None, help="override worker count")
        s.add_argument("--trials", type=int, default=None, help="override trial count")
        s.add_argument("--out-dir", default=None, help="redirect output into a directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args.config, args)
        if args.command == "validate":
            print(json.dumps(config.canonical(), indent=2, sort_keys=True))
            return 0
        if args.command == "sweep-bounds":
            table = bounds_sweep(config)
        else:
            table = run_experiment(config)
        print(f"wrote {config.out_path} ({len(table.rows)} rows)")
        return 0
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource refusal: {exc}", file=sys.stderr)
        return 3
    except NumericalValidityError as exc:
        print(f"numerical validity failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
