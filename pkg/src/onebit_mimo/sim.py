"""Deterministic Monte Carlo BER experiments over SNR sweeps.

Every (trial, SNR) cell owns an RNG stream derived from
(base_seed, trial_index, snr_index), so results do not depend on execution
order or on the number of worker processes; per-cell aggregation is a plain
sum of bit-error counts.  The same stream drives channel, payload bits and
noise, which keeps trials paired across precoders.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np
from scipy.stats import beta as beta_dist
from threadpoolctl import threadpool_limits

from .errors import NumericalError
from .mimo import (
    NoiseModel,
    SymbolBlock,
    apply_channel_awgn,
    detect,
    gen_rayleigh_channel,
    make_constellation,
    map_bits,
    unmap_symbols,
)
from .precoding import BcdConfig, bcd_precode, onebit_zf_precode, zf_precode

__all__ = [
    "SimConfig",
    "BerRecord",
    "PRECODERS",
    "register_precoder",
    "load_config",
    "parse_config_text",
    "resolve_parallelism",
    "run_trial",
    "run_sweep",
    "write_results",
    "clopper_pearson",
    "CSV_HEADER",
]

log = logging.getLogger(__name__)

PARALLELISM_ENV_VAR = "ONEBIT_MIMO_PARALLELISM"

CSV_HEADER = (
    "precoder,snr_db,N,K,T,qam,trials,bit_errors,total_bits,ber,"
    "ci95_low,ci95_high,mean_runtime_ms"
)

# precoder registry; external algorithms can hook in via register_precoder
PRECODERS = {
    "zf": lambda H, S, P, bcd: zf_precode(H, S, P),
    "onebit-zf": lambda H, S, P, bcd: onebit_zf_precode(H, S, P),
    "bcd-fista": lambda H, S, P, bcd: bcd_precode(H, S, P, bcd),
}


def register_precoder(name: str, fn) -> None:
    """Add a precoder callable (H, S, P, bcd_cfg) -> PrecodeResult to the registry."""
    if name in PRECODERS:
        raise ValueError(f"precoder {name!r} already registered")
    PRECODERS[name] = fn


@dataclass(frozen=True)
class SimConfig:
    """Full description of one BER sweep."""

    N: int
    K: int
    T: int
    qam_order: int
    snr_db_grid: tuple
    trials: int
    base_seed: int
    precoder_list: tuple = ("zf", "onebit-zf", "bcd-fista")
    power: float = 1.0
    bcd: BcdConfig = field(default_factory=BcdConfig)
    parallelism: int | None = None  # None means auto

    def __post_init__(self):
        if self.K < 1 or self.N < 1 or self.T < 1:
            raise ValueError("N, K, T must all be >= 1")
        if self.K > self.N:
            raise ValueError(f"K={self.K} exceeds N={self.N}")
        if self.qam_order < 1 or (self.qam_order & (self.qam_order - 1)) != 0:
            raise ValueError("qam_order must be a power of two")
        grid = tuple(float(s) for s in self.snr_db_grid)
        if not grid:
            raise ValueError("SNR grid must be non-empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("SNR grid must be strictly increasing")
        object.__setattr__(self, "snr_db_grid", grid)
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must fit in an unsigned 64-bit integer")
        plist = tuple(self.precoder_list)
        if not plist:
            raise ValueError("precoder list must be non-empty")
        unknown = [p for p in plist if p not in PRECODERS]
        if unknown:
            raise ValueError(f"unknown precoders {unknown}; available: {sorted(PRECODERS)}")
        object.__setattr__(self, "precoder_list", plist)
        if not self.power > 0:
            raise ValueError("power must be positive")
        if self.parallelism is not None and self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass(frozen=True)
class BerRecord:
    """Aggregated bit-error statistics for one (precoder, SNR) cell."""

    precoder: str
    snr_db: float
    N: int
    K: int
    T: int
    qam: int
    trials: int
    bit_errors: int
    total_bits: int
    ber: float
    ci95_low: float
    ci95_high: float
    mean_runtime_ms: float

    def __post_init__(self):
        if not 0.0 <= self.ci95_low <= self.ber + 1e-15 or not self.ber <= self.ci95_high <= 1.0:
            raise ValueError("confidence interval must bracket the BER")


def clopper_pearson(errors: int, total: int, confidence: float = 0.95):
    """Exact binomial confidence interval on errors/total."""
    if total < 1:
        return 0.0, 1.0
    alpha = 1.0 - confidence
    lo = 0.0 if errors == 0 else float(beta_dist.ppf(alpha / 2, errors, total - errors + 1))
    hi = 1.0 if errors == total else float(beta_dist.ppf(1 - alpha / 2, errors + 1, total - errors))
    return lo, hi


# ---------------------------------------------------------------------------
# config files: flat key = value lines, '#' starts a comment


_LIST_KEYS = {"snr_db_grid", "precoders"}


def parse_config_text(text: str) -> SimConfig:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ValueError(f"line {lineno}: empty key or value")
        if key in entries:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return _config_from_entries(entries)


def load_config(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _config_from_entries(entries: dict) -> SimConfig:
    def pop_int(key, default=None):
        if key not in entries:
            if default is None:
                raise ValueError(f"missing required config key {key!r}")
            return default
        return int(entries.pop(key))

    def pop_float(key, default):
        return float(entries.pop(key)) if key in entries else default

    kwargs = dict(
        N=pop_int("N"),
        K=pop_int("K"),
        T=pop_int("T"),
        qam_order=pop_int("qam_order"),
        trials=pop_int("trials"),
        base_seed=pop_int("base_seed"),
        power=pop_float("power", 1.0),
    )
    if "snr_db_grid" not in entries:
        raise ValueError("missing required config key 'snr_db_grid'")
    kwargs["snr_db_grid"] = tuple(float(v) for v in entries.pop("snr_db_grid").split(","))
    if "precoders" in entries:
        kwargs["precoder_list"] = tuple(p.strip() for p in entries.pop("precoders").split(","))
    if "parallelism" in entries:
        value = entries.pop("parallelism")
        kwargs["parallelism"] = None if value.lower() == "auto" else int(value)

    bcd_kwargs = {}
    for key in list(entries):
        if not key.startswith("bcd."):
            continue
        name = key[len("bcd."):]
        value = entries.pop(key)
        if name in ("period_M", "fista_max_iters", "bcd_max_iters"):
            bcd_kwargs[name] = int(value)
        elif name in ("lambda0", "gamma0"):
            bcd_kwargs[name] = None if value.lower() == "auto" else float(value)
        elif name in ("delta", "sigma_smooth", "fista_tol", "bt_shrink", "bt_grow"):
            bcd_kwargs[name] = float(value)
        else:
            raise ValueError(f"unknown solver config key 'bcd.{name}'")
    if entries:
        raise ValueError(f"unknown config keys: {sorted(entries)}")
    kwargs["bcd"] = BcdConfig(**bcd_kwargs)
    return SimConfig(**kwargs)


def resolve_parallelism(cfg: SimConfig) -> int:
    if cfg.parallelism is not None:
        return cfg.parallelism
    env = os.environ.get(PARALLELISM_ENV_VAR)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# trials


_CONSTELLATION_CACHE: dict = {}


def _constellation(order: int):
    if order not in _CONSTELLATION_CACHE:
        _CONSTELLATION_CACHE[order] = make_constellation(order)
    return _CONSTELLATION_CACHE[order]


def trial_rng(base_seed: int, trial_index: int, snr_index: int) -> np.random.Generator:
    """Independent stream for one (trial, SNR) cell; shared by all precoders."""
    return np.random.default_rng(np.random.SeedSequence((base_seed, trial_index, snr_index)))


def run_trial(cfg: SimConfig, trial_index: int, snr_db: float, precoder: str):
    """One channel realization: precode, transmit, detect, count bit errors.

    Returns (bit_errors, total_bits, precode_runtime_ms).  Numerical failures
    of the precoder propagate as NumericalError.
    """
    if precoder not in PRECODERS:
        raise ValueError(f"unknown precoder {precoder!r}")
    try:
        snr_index = cfg.snr_db_grid.index(float(snr_db))
    except ValueError:
        raise ValueError(f"snr_db={snr_db} is not on the configured grid") from None
    rng = trial_rng(cfg.base_seed, trial_index, snr_index)

    c = _constellation(cfg.qam_order)
    H = gen_rayleigh_channel(cfg.K, cfg.N, rng)
    n_bits = cfg.K * cfg.T * c.bits_per_symbol
    bits = rng.integers(0, 2, size=n_bits, dtype=np.int64)
    S = SymbolBlock(map_bits(bits, c).reshape(cfg.K, cfg.T), c)

    t0 = time.perf_counter()
    result = PRECODERS[precoder](H, S, cfg.power, cfg.bcd)
    runtime_ms = (time.perf_counter() - t0) * 1e3

    if not result.d > 0:
        raise NumericalError(f"precoder {precoder!r} produced a non-positive gain")
    sigma_n_sq = cfg.power / 10.0 ** (float(snr_db) / 10.0)
    Y = apply_channel_awgn(H, result.X, NoiseModel(sigma_n_sq), rng)
    s_hat = detect(Y, result.d, c)
    bit_errors = int(np.sum(unmap_symbols(s_hat, c) != bits))
    return bit_errors, n_bits, runtime_ms


def _attempt_trial(cfg, trial_index, snr_db, precoder):
    try:
        errors, total, runtime_ms = run_trial(cfg, trial_index, snr_db, precoder)
        return errors, total, runtime_ms, True
    except NumericalError as exc:
        log.warning("trial %d (%s, %.1f dB) failed: %s", trial_index, precoder, snr_db, exc)
        return 0, 0, 0.0, False


_WORKER_CFG = None
_WORKER_LIMITS = None


def _init_worker(cfg):
    global _WORKER_CFG, _WORKER_LIMITS
    _WORKER_CFG = cfg
    _WORKER_LIMITS = threadpool_limits(limits=1)


def _run_task(task):
    precoder, snr_index, trial_index = task
    cfg = _WORKER_CFG
    snr_db = cfg.snr_db_grid[snr_index]
    outcome = _attempt_trial(cfg, trial_index, snr_db, precoder)
    return (precoder, snr_index) + outcome


def run_sweep(cfg: SimConfig, progress=None):
    """Run the full (precoder x SNR x trial) grid and aggregate BER records.

    Aggregation sums integer counts per cell, so the outcome is independent
    of scheduling; more than 1% failed trials aborts the sweep.
    """
    tasks = [
        (precoder, snr_index, trial_index)
        for precoder in cfg.precoder_list
        for snr_index in range(len(cfg.snr_db_grid))
        for trial_index in range(cfg.trials)
    ]
    sums = {
        (precoder, snr_index): [0, 0, 0.0, 0]  # errors, bits, runtime_ms, ok-trials
        for precoder in cfg.precoder_list
        for snr_index in range(len(cfg.snr_db_grid))
    }
    failures = 0
    done = 0
    n_workers = resolve_parallelism(cfg)

    def _absorb(result):
        nonlocal failures, done
        precoder, snr_index, errors, total, runtime_ms, ok = result
        cell = sums[(precoder, snr_index)]
        if ok:
            cell[0] += errors
            cell[1] += total
            cell[2] += runtime_ms
            cell[3] += 1
        else:
            failures += 1
        done += 1
        if progress is not None:
            progress(done, len(tasks))
        if done % max(1, len(tasks) // 20) == 0:
            log.info("sweep progress: %d/%d trials", done, len(tasks))

    if n_workers == 1:
        global _WORKER_CFG
        _WORKER_CFG = cfg
        with threadpool_limits(limits=1):
            for task in tasks:
                _absorb(_run_task(task))
    else:
        with Pool(processes=n_workers, initializer=_init_worker, initargs=(cfg,)) as pool:
            for result in pool.imap_unordered(_run_task, tasks, chunksize=1):
                _absorb(result)

    if failures > 0.01 * len(tasks):
        raise NumericalError(f"{failures} of {len(tasks)} trials failed; aborting sweep")

    records = []
    for precoder in sorted(cfg.precoder_list):
        for snr_index, snr_db in enumerate(cfg.snr_db_grid):
            errors, bits, runtime_ms, ok = sums[(precoder, snr_index)]
            lo, hi = clopper_pearson(errors, bits)
            records.append(
                BerRecord(
                    precoder=precoder,
                    snr_db=snr_db,
                    N=cfg.N,
                    K=cfg.K,
                    T=cfg.T,
                    qam=cfg.qam_order,
                    trials=ok,
                    bit_errors=errors,
                    total_bits=bits,
                    ber=errors / bits if bits else 0.0,
                    ci95_low=lo,
                    ci95_high=hi,
                    mean_runtime_ms=runtime_ms / ok if ok else 0.0,
                )
            )
    return records


def write_results(records, path) -> None:
    """Write BER records as CSV with full round-trip float precision."""
    rows = [CSV_HEADER]
    for r in sorted(records, key=lambda r: (r.precoder, r.snr_db)):
        rows.append(
            f"{r.precoder},{r.snr_db!r},{r.N},{r.K},{r.T},{r.qam},{r.trials},"
            f"{r.bit_errors},{r.total_bits},{r.ber!r},{r.ci95_low!r},{r.ci95_high!r},"
            f"{r.mean_runtime_ms!r}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
