"""Command line: ``hyperdiff {simulate,sweep,verify,oracle}``.

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 validity-guard failure.
Errors are reported on stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io, oracles
from .config import ConfigError, RunConfig, load
from .ensemble import EnsembleError
from .lattice import ParameterError
from .propagator import IntegrationError
from .simulation import RunResult, simulate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VALIDITY = 0, 2, 3, 4
DEFAULT_OUT = "hyperdiff-run"

logger = logging.getLogger("hyperdiff")


def _error(kind: str, exc: BaseException, code: int, **extra) -> int:
    payload = {"error": kind, "message": str(exc), "exit_code": code, **extra}
    if isinstance(exc, ConfigError):
        payload.update(field=exc.field, path=exc.path)
    if isinstance(exc, IntegrationError):
        payload["time"] = exc.time
    if isinstance(exc, EnsembleError):
        payload["seed"] = exc.seed
        if isinstance(exc.cause, IntegrationError):
            payload["time"] = exc.cause.time
    print(json.dumps(payload), file=sys.stderr)
    return code


def _load(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["ensemble.seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["ensemble.workers"] = args.workers
    return load(args.config, overrides=overrides)


def _run_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.output or DEFAULT_OUT)


def _report(result: RunResult, out: Path) -> None:
    f = result.fit
    if f is not None:
        print(f"nu = {f.nu:.4f} ({result.regime}), window [{f.t_lo:.4g}, {f.t_hi:.4g}], "
              f"rms residual {f.rms_residual:.2e} -> {out}")
    else:
        print(f"no fit ({result.fit_error}) -> {out}")


def _guarded(fn):
    """Map library exceptions to exit codes."""
    def wrapper(args) -> int:
        try:
            return fn(args)
        except ConfigError as exc:
            return _error("config", exc, EXIT_CONFIG)
        except (ParameterError, ValueError) as exc:
            return _error("config", exc, EXIT_CONFIG)
        except (IntegrationError, EnsembleError, FloatingPointError) as exc:
            return _error("numerical", exc, EXIT_NUMERICAL)
    return wrapper


@_guarded
def cmd_simulate(args) -> int:
    cfg = _load(args)
    result = simulate(cfg)
    out = _run_dir(args, cfg)
    io.write_run(result, out)
    _report(result, out)
    if not result.valid:
        return _error("validity", RuntimeError(result.fit_error or "boundary guard tripped before t_max"),
                      EXIT_VALIDITY, run_dir=str(out))
    return EXIT_OK


def _set_axis(cfg: RunConfig, axis: str, value) -> RunConfig:
    data = cfg.to_dict()
    node = data
    parts = axis.split(".")
    for p in parts[:-1]:
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"sweep axis {axis!r} names no config field")
    node[parts[-1]] = value
    from .config import from_dict
    return from_dict(data)


def _parse_values(raw: str) -> list:
    vals = [v.strip() for v in raw.split(",") if v.strip()]
    if not vals:
        raise ConfigError("sweep axis has no values", field="--values")
    out = []
    for v in vals:
        try:
            out.append(json.loads(v))
        except json.JSONDecodeError:
            raise ConfigError(f"cannot parse axis value {v!r}", field="--values") from None
    return out


@_guarded
def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = _parse_values(args.values)
    configs = [_set_axis(cfg, args.axis, v) for v in values]
    out = _run_dir(args, cfg)
    rows = []
    any_invalid = False
    with io.atomic_directory(out) as d:
        for k, (v, c) in enumerate(zip(values, configs)):
            name = f"{k:03d}_{args.axis}={v}"
            result = simulate(c)
            io.write_run(result, d / name)
            rows.append(io.summary_row(args.axis, v, result, name))
            any_invalid |= not result.valid
            _report(result, out / name)
        (d / "summary.csv").write_text(io.csv_text(io.SUMMARY_HEADER, rows))
    print(f"summary -> {out / 'summary.csv'}")
    return EXIT_VALIDITY if any_invalid else EXIT_OK


def verify_checks(tolerance_scale: float = 1.0, quick: bool = False) -> list[oracles.OracleCheck]:
    """Oracle self-tests plus a step-halving convergence check on a small standard run."""
    from .config import from_dict
    from .simulation import run_realization

    checks = oracles.self_test(tolerance_scale, quick=quick)
    cfg = from_dict({
        "model": {"kind": "harper", "Delta": 1.5, "L": 10},
        "gamma": 0.04,
        "t_max": 10.0,
        "record": {"t_min": 0.1, "count": 20},
        "integrator": {"check_convergence": True},
    })
    cfg, _ = cfg.resolved()
    conv = run_realization(cfg).diagnostics["convergence"]
    checks.append(oracles.OracleCheck(
        "step convergence: sigma2(t_max) change under dt/2 (harper, Delta=1.5, Gamma=0.04)",
        conv["relative_change"], conv["tolerance"] * tolerance_scale))
    return checks


def cmd_verify(args) -> int:
    checks = verify_checks(args.tol_scale, quick=args.quick)
    print(oracles.format_report(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERICAL


def cmd_oracle(args) -> int:
    checks = oracles.self_test(args.tol_scale, quick=args.quick)
    print(oracles.format_report(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyperdiff", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp):
        sp.add_argument("--config", required=True, help="JSON config (or a run's metadata.json)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int, help="worker processes for ensembles")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")

    sp = sub.add_parser("simulate", help="run one configuration")
    run_opts(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="run a configuration across a list of values")
    run_opts(sp)
    sp.add_argument("--axis", default="gamma", help="config field to vary, e.g. gamma or model.Delta")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.set_defaults(func=cmd_sweep)

    for name, func, text in (("verify", cmd_verify, "post-install smoke test"),
                             ("oracle", cmd_oracle, "closed-form oracle self-tests")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--tol-scale", type=float, default=1.0, help=argparse.SUPPRESS)
        sp.add_argument("--quick", action="store_true", help="shorter brute-force references")
        sp.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser", "verify_checks"]
