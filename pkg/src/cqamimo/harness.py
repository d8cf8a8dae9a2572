"""Monte Carlo sweeps over SNR, precoding/allocation methods and DAC resolutions.

Every trial draws one channel (and its impaired estimate when the scenario
asks for it) and evaluates all requested methods on that same realization.
Trials use independent random streams derived from ``(seed, trial)``, so the
result does not depend on how trials are scheduled over workers.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .channel import SystemScenario, apply_csi_impairment, gen_channel, trial_rng
from .errors import ConfigError, InfeasibleError, ModelValidityError
from .power import cqa_maas, equal_allocation, waterfilling
from .precoder import assemble_precoder, factors_spectrum, precoder_factors
from .quantizer import build_quantizer
from .rate import METHOD_LABELS, sum_rate_bussgang

log = logging.getLogger(__name__)

__all__ = [
    "METHODS",
    "Method",
    "SweepRow",
    "SweepResult",
    "SweepError",
    "parse_methods",
    "preset",
    "preset_methods",
    "run_sweep",
    "write_results",
    "read_results",
    "load_scenario",
    "CSV_COLUMNS",
]

METHODS = METHOD_LABELS
FULL_RESOLUTION = ("BD-FR", "BD-FR+WF")
CSV_COLUMNS = ("snr_db", "method", "bits", "mean_rate_bits", "stderr", "trials")


class SweepError(RuntimeError):
    """A trial failed; ``trial`` holds its index."""

    def __init__(self, trial: int, cause: Exception):
        super().__init__(f"trial {trial}: {cause}")
        self.trial = trial
        self.cause = cause


@dataclass(frozen=True)
class Method:
    name: str
    bits: int | None

    @property
    def kind(self) -> str:
        return "RBD" if "RBD" in self.name else "BD"

    @property
    def allocation(self) -> str:
        if self.name.endswith("MAAS"):
            return "maas"
        if self.name.endswith("+WF"):
            return "wf"
        return "equal"

    def __str__(self) -> str:
        return self.name if self.bits is None else f"{self.name}@{self.bits}"


def parse_methods(methods: Iterable[str], bits: Sequence[int]) -> list[Method]:
    """Expand labels such as ``"CQA-BD-MAAS"`` (over ``bits``) or ``"CQA-BD@3"``."""
    out: list[Method] = []
    for label in methods:
        name, _, b = label.partition("@")
        name = name.strip()
        if name not in METHODS:
            raise ConfigError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
        if name in FULL_RESOLUTION:
            if b:
                raise ConfigError(f"{name} is full resolution and takes no bit depth")
            candidates = [Method(name, None)]
        elif b:
            candidates = [Method(name, int(b.rstrip("b")))]
        else:
            candidates = [Method(name, int(x)) for x in bits]
        for m in candidates:
            if m not in out:
                out.append(m)
    if not out:
        raise ConfigError("no methods requested")
    return out


@dataclass
class SweepRow:
    snr_db: float
    method: str
    bits: int | None
    mean_rate: float
    stderr: float
    trials: int


def _row_key(r: SweepRow):
    return (r.snr_db, r.method, -1 if r.bits is None else r.bits)


@dataclass
class SweepResult:
    scenario_digest: str
    rows: list[SweepRow]
    runtime_ms: float = 0.0
    trial_digests: list[str] = field(default_factory=list)

    def lookup(self, snr_db: float, method: str, bits: int | None = None) -> SweepRow:
        for r in self.rows:
            if r.snr_db == snr_db and r.method == method and r.bits == bits:
                return r
        raise KeyError((snr_db, method, bits))


_PRESETS = {
    "fig2": dict(n_tx=64, n_rx_per_user=(2,) * 16, bits=(2, 3, 4)),
    "fig3-perfect": dict(n_tx=64, n_rx_per_user=(2,) * 8, bits=(3, 6)),
    "fig3-icsi": dict(n_tx=64, n_rx_per_user=(2,) * 8, bits=(3, 6),
                      corr_coeff=0.72, csi_error_var=0.16),
}

_PRESET_METHODS = {
    "fig2": ("CQA-BD-MAAS", "BD-FR", "BD-FR+WF"),
    "fig3-perfect": ("CQA-BD", "CQA-BD-MAAS"),
    "fig3-icsi": ("CQA-BD", "CQA-BD-MAAS"),
}


def preset(name: str, **overrides) -> SystemScenario:
    """Scenario of one of the published experiments (200 trials by default)."""
    try:
        base = dict(_PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(_PRESETS)}") from None
    base.update(overrides)
    return SystemScenario(**base)


def preset_methods(name: str) -> tuple[str, ...]:
    if name not in _PRESET_METHODS:
        raise ConfigError(f"unknown preset {name!r}")
    return _PRESET_METHODS[name]


def _deltas(scenario: SystemScenario, methods: Sequence[Method]) -> dict:
    bits = sorted({m.bits for m in methods if m.bits is not None})
    return {b: build_quantizer(b, scenario.total_power, scenario.n_tx).delta for b in bits}


def _run_trial(scenario: SystemScenario, methods: Sequence[Method], deltas: dict,
               trial: int) -> tuple[np.ndarray, str]:
    rng = trial_rng(scenario.seed, trial)
    channels = gen_channel(scenario, rng)
    if scenario.impaired:
        channels = apply_csi_impairment(channels, scenario.corr_coeff,
                                        scenario.csi_error_var, rng)
    n_u = scenario.n_rx_total
    p_total = float(n_u)
    rates = np.empty((len(scenario.snr_db_grid), len(methods)))
    bd = precoder_factors(channels, "BD") if any(m.kind == "BD" for m in methods) else None
    for i, snr_db in enumerate(scenario.snr_db_grid):
        snr = 10 ** (snr_db / 10)
        rbd = None
        if any(m.kind == "RBD" for m in methods):
            rbd = precoder_factors(channels, "RBD", noise_power=scenario.noise_power(snr_db),
                                   total_power=scenario.total_power)
        for k, m in enumerate(methods):
            factors = bd if m.kind == "BD" else rbd
            delta = 1.0 if m.bits is None else deltas[m.bits]
            spectrum = factors_spectrum(factors)
            if m.allocation == "equal":
                alloc = equal_allocation(n_u, p_total)
            elif m.allocation == "wf":
                alloc = waterfilling(spectrum, p_total / snr, p_total)
            else:
                alloc = cqa_maas(spectrum, snr, delta, p_total, on_saturation="fill")
            p = assemble_precoder(factors, alloc, m.kind).p
            rates[i, k] = sum_rate_bussgang(channels.h, p, delta, snr, n_u)
    return rates, channels.digest()


def _trial_worker(args):
    scenario, methods, deltas, trial = args
    try:
        return _run_trial(scenario, methods, deltas, trial)
    except (InfeasibleError, ModelValidityError, np.linalg.LinAlgError) as exc:
        raise SweepError(trial, exc) from exc


def run_sweep(scenario: SystemScenario, methods: Iterable[str], seed: int | None = None, *,
              workers: int | None = None, sequential: bool = False) -> SweepResult:
    """Average sum rates of ``methods`` over ``scenario.trials`` channel draws.

    Parameters
    ----------
    scenario : SystemScenario
    methods : iterable of str
        Method labels, optionally suffixed with ``@bits``.
    seed : int, optional
        Overrides ``scenario.seed``.
    workers : int, optional
        Process count; defaults to the CPU count.
    sequential : bool
        Run every trial in this process, in order.
    """
    if seed is not None:
        scenario = scenario.replace(seed=seed)
    parsed = parse_methods(methods, scenario.bits)
    deltas = _deltas(scenario, parsed)
    t0 = time.perf_counter()
    jobs = [(scenario, parsed, deltas, t) for t in range(scenario.trials)]
    workers = workers or os.cpu_count() or 1
    if sequential or workers == 1 or scenario.trials == 1:
        results = [_trial_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, scenario.trials // (4 * workers))
            results = list(pool.map(_trial_worker, jobs, chunksize=chunk))
    rates = np.stack([r for r, _ in results])  # (trials, snr, method)
    digests = [d for _, d in results]
    for t, d in enumerate(digests):
        log.debug("trial %d channel %s", t, d)
    mean = rates.mean(axis=0)
    if scenario.trials > 1:
        stderr = rates.std(axis=0, ddof=1) / np.sqrt(scenario.trials)
    else:
        stderr = np.zeros_like(mean)
    rows = [
        SweepRow(snr_db=snr_db, method=m.name, bits=m.bits, mean_rate=float(mean[i, k]),
                 stderr=float(stderr[i, k]), trials=scenario.trials)
        for i, snr_db in enumerate(scenario.snr_db_grid)
        for k, m in enumerate(parsed)
    ]
    rows.sort(key=_row_key)
    return SweepResult(scenario_digest=scenario.digest(), rows=rows,
                       runtime_ms=(time.perf_counter() - t0) * 1e3, trial_digests=digests)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _bits_text(bits: int | None) -> str:
    return "full" if bits is None else str(bits)


def write_results(result: SweepResult, path, fmt: str | None = None) -> None:
    """Write ``result`` as CSV or JSON (chosen from the suffix by default)."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "csv").lower()
    rows = sorted(result.rows, key=_row_key)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([repr(r.snr_db), r.method, _bits_text(r.bits), repr(r.mean_rate),
                        repr(r.stderr), r.trials])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps({
            "scenario_digest": result.scenario_digest,
            "runtime_ms": result.runtime_ms,
            "trial_digests": result.trial_digests,
            "rows": [asdict(r) for r in rows],
        }, indent=1)
    else:
        raise ValueError(f"unknown result format {fmt!r}")
    try:
        _atomic_write(path, text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> SweepResult:
    """Load a JSON results file written by :func:`write_results`."""
    with open(path) as fh:
        d = json.load(fh)
    return SweepResult(scenario_digest=d["scenario_digest"],
                       rows=[SweepRow(**r) for r in d["rows"]],
                       runtime_ms=d["runtime_ms"], trial_digests=d.get("trial_digests", []))


_LIST_KEYS = {"n_rx_per_user": int, "snr_db_grid": float, "bits": int}
_SCALAR_KEYS = {"n_tx": int, "total_power": float, "corr_coeff": complex,
                "csi_error_var": float, "trials": int, "seed": int}
SCENARIO_KEYS = tuple(_LIST_KEYS) + tuple(_SCALAR_KEYS) + ("users", "n_rx", "preset")


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _LIST_KEYS:
            return tuple(_LIST_KEYS[key](v) for v in raw.replace(" ", "").split(",") if v)
        if key in _SCALAR_KEYS:
            return _SCALAR_KEYS[key](raw.replace(" ", ""))
        if key in ("users", "n_rx"):
            return int(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def load_scenario(path=None, overrides: Sequence[str] = (), base: SystemScenario | None = None
                  ) -> tuple[SystemScenario, list[str]]:
    """Scenario and method list from an INI file plus ``key=value`` overrides.

    The ``[scenario]`` section uses the :class:`SystemScenario` field names;
    list values are comma separated. ``users`` with ``n_rx`` is shorthand
    for ``n_rx_per_user``, and ``preset`` starts from a named preset. An
    optional ``[sweep]`` section holds ``methods``.
    """
    values: dict[str, str] = {}
    methods: list[str] = []
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if cp.has_section("scenario"):
            values.update(cp["scenario"])
        if cp.has_section("sweep") and "methods" in cp["sweep"]:
            methods = [m.strip() for m in cp["sweep"]["methods"].split(",") if m.strip()]
    for item in overrides:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        values[key.strip()] = val
    unknown = set(values) - set(SCENARIO_KEYS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    parsed = {k: _parse_value(k, v) for k, v in values.items()}
    if "preset" in parsed:
        name = parsed.pop("preset")
        base = preset(name)
        methods = methods or list(preset_methods(name))
    kwargs = base.to_dict() if base is not None else {}
    if base is not None:
        kwargs["corr_coeff"] = base.corr_coeff
    users, n_rx = parsed.pop("users", None), parsed.pop("n_rx", None)
    if users is not None or n_rx is not None:
        if users is None or n_rx is None:
            raise ConfigError("users and n_rx must be given together")
        parsed.setdefault("n_rx_per_user", (n_rx,) * users)
    kwargs.update(parsed)
    if "n_tx" not in kwargs or "n_rx_per_user" not in kwargs:
        raise ConfigError("scenario needs n_tx and n_rx_per_user (or a preset)")
    try:
        return SystemScenario(**kwargs), methods
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
