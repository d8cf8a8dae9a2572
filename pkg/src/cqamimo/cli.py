"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric or
model-validity error. dB values are converted to linear scale here and
nowhere below this layer (apart from the harness SNR grid).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelSet, trial_rng
from .errors import ConfigError, ModelValidityError
from .harness import SweepError, load_scenario, preset_methods, run_sweep, write_results
from .matrixio import load_matrix, save_matrix
from .power import SpectrumView, cqa_maas, equal_allocation, objective_eq17, waterfilling
from .precoder import assemble_precoder, factors_spectrum, precoder_factors
from .quantizer import build_quantizer, estimate_bussgang_mc
from .rate import flops_precoder

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "CQAMIMO_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse already exits with 2 on usage errors; keep the message terse
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _db_to_linear(db: float) -> float:
    return 10 ** (db / 10)


def _output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=1))


def _load_spectrum(path) -> np.ndarray:
    text = Path(path).read_text().replace(",", " ").split()
    try:
        phi = np.array([float(v) for v in text])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if phi.size == 0:
        raise ConfigError(f"{path}: empty spectrum")
    if np.any(phi < 0) or not np.all(np.isfinite(phi)):
        raise ConfigError(f"{path}: singular values must be finite and >= 0")
    return phi


def _cmd_sweep(args) -> int:
    overrides = list(args.set)
    if args.preset:
        overrides.insert(0, f"preset={args.preset}")
    if args.trials is not None:
        overrides.append(f"trials={args.trials}")
    scenario, methods = load_scenario(args.config, overrides)
    if args.methods:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        methods = list(preset_methods("fig2"))
    fmt = args.format
    out = Path(args.out) if args.out else _output_dir() / f"sweep-{scenario.digest()}.{fmt or 'csv'}"
    if fmt is None:
        fmt = out.suffix.lstrip(".").lower() or "csv"
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")
    result = run_sweep(scenario, methods, seed=args.seed, workers=args.workers,
                       sequential=args.sequential)
    write_results(result, out, fmt)
    print(f"wrote {len(result.rows)} rows to {out} ({result.runtime_ms / 1e3:.1f} s)")
    return EXIT_OK


def _cmd_bussgang(args) -> int:
    model = build_quantizer(args.bits, args.power, args.ntx)
    delta_mc, power_mc = estimate_bussgang_mc(model, args.samples, trial_rng(args.seed, 0))
    _print_json({
        "bits": model.bits,
        "step": model.step,
        "alpha": model.alpha,
        "delta": model.delta,
        "delta_mc": delta_mc,
        "delta_rel_err": abs(delta_mc - model.delta) / model.delta,
        "power": model.total_power,
        "power_mc": power_mc,
        "power_rel_err": abs(power_mc - model.total_power) / model.total_power,
    })
    return EXIT_OK


def _cmd_allocate(args) -> int:
    phi = _load_spectrum(args.spectrum)
    spec = SpectrumView(phi)
    snr = _db_to_linear(args.snr_db)
    p_total = args.p_total if args.p_total is not None else float(phi.size)
    delta = 1.0 if args.bits is None else build_quantizer(args.bits, 1.0, args.ntx).delta
    noise = p_total / snr
    if args.method == "equal":
        alloc = equal_allocation(phi.size, p_total)
    elif args.method == "wf":
        alloc = waterfilling(spec, noise, p_total)
    else:
        alloc = cqa_maas(spec, snr, delta, p_total)
    _print_json({
        "method": args.method,
        "delta": delta,
        "omega": alloc.omega.tolist(),
        "mu_opt": alloc.mu_opt,
        "active": alloc.active,
        "saturated": alloc.saturated,
        "objective_bits": objective_eq17(alloc.omega, spec, delta, noise),
    })
    return EXIT_OK


def _cmd_precode(args) -> int:
    h = load_matrix(args.channel)
    if args.nj is not None:
        if h.shape[0] % args.nj:
            raise ConfigError(f"{h.shape[0]} receive antennas do not split into blocks of {args.nj}")
        n_rx = (args.nj,) * (h.shape[0] // args.nj)
    elif args.users is not None:
        if args.users < 1 or h.shape[0] % args.users:
            raise ConfigError(f"{h.shape[0]} receive antennas do not split over {args.users} users")
        n_rx = (h.shape[0] // args.users,) * args.users
    else:
        raise ConfigError("give --nj or --users")
    channels = ChannelSet.from_matrix(h, n_rx)
    n_u = h.shape[0]
    snr = _db_to_linear(args.snr_db)
    noise = n_u / snr
    factors = precoder_factors(channels, args.kind.upper(), noise_power=noise, total_power=n_u)
    spec = factors_spectrum(factors)
    if args.method == "equal":
        alloc = equal_allocation(n_u, float(n_u))
    elif args.method == "wf":
        alloc = waterfilling(spec, noise, float(n_u))
    else:
        if args.bits is None:
            raise ConfigError("--method maas needs --bits")
        delta = build_quantizer(args.bits, 1.0, h.shape[1]).delta
        alloc = cqa_maas(spec, snr, delta, float(n_u))
    result = assemble_precoder(factors, alloc, args.kind.upper())
    if args.out:
        save_matrix(args.out, result.p)
    if args.sv_out:
        save_matrix(args.sv_out, spec.phi[:, None])
    hp = h @ result.p
    mask = np.kron(np.eye(len(n_rx)), np.ones((n_rx[0], n_rx[0]))) if len(set(n_rx)) == 1 else None
    leak = float(np.linalg.norm(hp * (1 - mask)) / np.linalg.norm(h)) if mask is not None else None
    _print_json({
        "kind": args.kind.upper(),
        "shape": list(result.p.shape),
        "singular_values": spec.phi.tolist(),
        "omega": alloc.omega.tolist(),
        "transmit_power": float(np.linalg.norm(result.p) ** 2),
        "interference_rel": leak,
    })
    return EXIT_OK


def _cmd_flops(args) -> int:
    print(flops_precoder(args.kind.upper(), args.ntx, args.nrx, args.nj, args.bits))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cqamimo",
                description="Quantization-aware BD precoding and power allocation.",
                epilog=f"Exit codes: 0 ok, 2 usage/config error, 3 numeric error. "
                       f"${OUTPUT_DIR_ENV} sets the default output directory.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND",
                           parser_class=_Parser)

    s = sub.add_parser("sweep", help="Monte Carlo sum-rate sweep over an SNR grid")
    s.add_argument("--preset", choices=("fig2", "fig3-perfect", "fig3-icsi"),
                   help="start from a published scenario")
    s.add_argument("--config", metavar="PATH", help="INI file with [scenario] and [sweep] sections")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="scenario override, repeatable (e.g. snr_db_grid=0,10 in dB)")
    s.add_argument("--trials", type=int, metavar="N", help="channel realizations per SNR point")
    s.add_argument("--seed", type=int, metavar="N", help="master RNG seed")
    s.add_argument("--methods", metavar="LIST",
                   help="comma-separated labels, optionally NAME@BITS (e.g. CQA-BD-MAAS@3)")
    s.add_argument("--out", metavar="PATH", help=f"result file (default in ${OUTPUT_DIR_ENV} or .)")
    s.add_argument("--format", choices=("csv", "json"), help="result format (default from suffix)")
    s.add_argument("--sequential", action="store_true",
                   help="run trials in-process in order (bit-exact reruns)")
    s.add_argument("--workers", type=int, metavar="N", help="worker processes (default: CPU count)")
    s.set_defaults(func=_cmd_sweep)

    b = sub.add_parser("bussgang-check", help="closed-form vs Monte Carlo Bussgang gain")
    b.add_argument("--bits", type=int, required=True, metavar="B", help="DAC resolution in bits (1..12)")
    b.add_argument("--power", type=float, default=1.0, metavar="P",
                   help="total transmit power, linear (default 1)")
    b.add_argument("--ntx", type=int, default=64, metavar="N", help="transmit antennas (default 64)")
    b.add_argument("--samples", type=int, default=1_000_000, metavar="S",
                   help="Monte Carlo samples, >= 10000 (default 1e6)")
    b.add_argument("--seed", type=int, default=0, metavar="N", help="RNG seed")
    b.set_defaults(func=_cmd_bussgang)

    a = sub.add_parser("allocate", help="power allocation for a singular-value spectrum")
    a.add_argument("--spectrum", required=True, metavar="FILE",
                   help="singular values, comma or whitespace separated")
    a.add_argument("--snr-db", type=float, required=True, metavar="X", help="SNR P_total/N0 in dB")
    a.add_argument("--bits", type=int, metavar="B", help="DAC resolution in bits (omit: full resolution)")
    a.add_argument("--method", choices=("wf", "maas", "equal"), default="maas",
                   help="allocation method (default maas)")
    a.add_argument("--p-total", type=float, metavar="P",
                   help="power budget, linear (default: number of streams)")
    a.add_argument("--ntx", type=int, default=64, metavar="N",
                   help="transmit antennas used for the DAC model (default 64)")
    a.set_defaults(func=_cmd_allocate)

    r = sub.add_parser("precode", help="BD/RBD precoder for a stored channel matrix")
    r.add_argument("--channel", required=True, metavar="FILE", help="channel matrix (.csv or binary)")
    r.add_argument("--kind", choices=("bd", "rbd", "BD", "RBD"), default="bd", help="precoder family")
    grp = r.add_mutually_exclusive_group()
    grp.add_argument("--nj", type=int, metavar="N", help="receive antennas per user")
    grp.add_argument("--users", type=int, metavar="K", help="number of users (equal split)")
    r.add_argument("--snr-db", type=float, default=10.0, metavar="X",
                   help="SNR in dB for RBD regularization and allocation (default 10)")
    r.add_argument("--method", choices=("wf", "maas", "equal"), default="equal",
                   help="power allocation (default equal)")
    r.add_argument("--bits", type=int, metavar="B", help="DAC resolution in bits (for maas)")
    r.add_argument("--out", metavar="FILE", help="write the precoder matrix here")
    r.add_argument("--sv-out", metavar="FILE", help="write the stream singular values here")
    r.set_defaults(func=_cmd_precode)

    f = sub.add_parser("flops", help="FLOP count of a precoder")
    f.add_argument("--kind", required=True, choices=("bd", "rbd", "cqa-bd", "cqa-rbd"),
                   help="precoder family")
    f.add_argument("--ntx", type=int, required=True, metavar="N", help="transmit antennas N_b")
    f.add_argument("--nrx", type=int, required=True, metavar="N", help="total receive antennas N_u")
    f.add_argument("--nj", type=int, required=True, metavar="N", help="receive antennas per user")
    f.add_argument("--bits", type=int, metavar="B", help="DAC resolution in bits (CQA kinds)")
    f.set_defaults(func=_cmd_flops)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ModelValidityError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
