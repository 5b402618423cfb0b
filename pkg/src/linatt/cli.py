"""Command-line interface: verify, bench, gradcheck, report.

Exit codes: 0 success, 1 verification or gradient failure, 2 usage/config
error, 3 I/O error. The default seed comes from LINATT_SEED when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .matrixlib import ContractViolation
from . import attention, bench, verify

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3

_VARIANT_ALIASES = {
    "vanilla": attention.VANILLA,
    "quadratic": attention.QUADRATIC,
    "linear": attention.LINEAR,
}


def _default_seed() -> int:
    raw = os.environ.get("LINATT_SEED", "42")
    try:
        return int(raw)
    except ValueError:
        raise ContractViolation(f"LINATT_SEED must be an integer, got {raw!r}")


def _parse_sizes(text: str) -> list[tuple[int, int]]:
    sizes = []
    for token in text.split(","):
        token = token.strip()
        parts = token.lower().split("x")
        if len(parts) != 2:
            raise ContractViolation(f"size {token!r} is not of the form NxC")
        try:
            n, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise ContractViolation(f"size {token!r} is not of the form NxC")
        if n < 1 or c < 1:
            raise ContractViolation(f"size {token!r} must have positive N and C")
        sizes.append((n, c))
    return sizes


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok.strip()) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ContractViolation(f"expected a comma-separated integer list, got {text!r}")


def _read_config_file(path: str) -> dict[str, str]:
    """Flat key=value lines; blank lines and #-comments ignored."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractViolation(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _print_suites(results) -> int:
    failed = False
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(
            f"{status} {res.name}: worst={res.worst:.3e} threshold={res.threshold:.1e}"
            + (f" ({res.detail})" if res.detail else "")
        )
        failed = failed or not res.passed
    return EXIT_FAILED if failed else EXIT_OK


def _cmd_verify(args) -> int:
    shapes = tuple(_parse_sizes(args.sizes)) if args.sizes else verify.DEFAULT_SHAPES
    print(f"verify: seed={args.seed} shapes={','.join(f'{n}x{c}' for n, c in shapes)}")
    return _print_suites(verify.run_verify_suites(args.seed, shapes))


def _cmd_gradcheck(args) -> int:
    shapes = tuple(_parse_sizes(args.sizes)) if args.sizes else verify.GRADCHECK_SHAPES
    print(
        f"gradcheck: seed={args.seed} h={args.h:g} "
        f"shapes={','.join(f'{n}x{c}' for n, c in shapes)}"
    )
    return _print_suites([verify.gradient_suite(args.seed, shapes, args.h)])


def _build_bench_config(args) -> bench.BenchConfig:
    file_values = _read_config_file(args.config) if args.config else {}

    def pick(flag_value, key: str, fallback):
        if flag_value is not None:
            return flag_value
        if key in file_values:
            return file_values[key]
        return fallback

    n_raw = pick(args.n, "n", "512,1024,2048,4096")
    variants_raw = pick(args.variants, "variants", "vanilla,linear")
    directions_raw = pick(args.directions, "directions", "forward,backward")

    variants = []
    for name in str(variants_raw).split(","):
        name = name.strip().lower()
        if name not in _VARIANT_ALIASES:
            raise ContractViolation(f"unknown variant {name!r}")
        variants.append(_VARIANT_ALIASES[name])
    directions = []
    for name in str(directions_raw).split(","):
        name = name.strip().lower()
        if name not in bench.DIRECTIONS:
            raise ContractViolation(f"unknown direction {name!r}")
        directions.append(name)

    max_floats = pick(args.max_floats, "max_floats", None)
    return bench.BenchConfig(
        n_values=_parse_int_list(str(n_raw)),
        c=int(pick(args.c, "c", 64)),
        r=int(pick(args.r, "r", 8)),
        reps=int(pick(args.reps, "reps", 5)),
        warmup=int(pick(args.warmup, "warmup", 1)),
        seed=int(pick(args.seed, "seed", _default_seed())),
        variants=tuple(variants),
        directions=tuple(directions),
        max_floats=None if max_floats is None else int(max_floats),
        float_budget=int(pick(args.budget, "budget", 2**26)),
        csv_path=pick(args.csv, "csv", "bench.csv"),
        json_path=pick(args.json_path, "json", "bench.json"),
    )


def _check_writable(path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    probe = os.path.join(directory, f".linatt-writecheck-{os.getpid()}")
    with open(probe, "w"):
        pass
    os.unlink(probe)


def _print_bench_summary(report: dict) -> None:
    for fit in report["fits"]:
        print(
            f"scaling {fit['variant']}/{fit['direction']}: exponent={fit['exponent']:.3f} "
            f"R^2={fit['r_squared']:.4f} over N={fit['n_range'][0]}..{fit['n_range'][1]}"
        )
    for direction, n_star in report["crossover"].items():
        where = f"N={n_star}" if n_star is not None else "never on this grid"
        print(f"crossover ({direction}): linear faster from {where}")
    frontier = report["feasibility_frontier"]
    budget = frontier["float_budget"]
    for variant, max_n in frontier["max_n"].items():
        print(f"feasible under {budget} floats: {variant} up to N={max_n}")


def _cmd_bench(args) -> int:
    config = _build_bench_config(args)
    config.validate()
    try:
        _check_writable(config.csv_path)
        _check_writable(config.json_path)
    except OSError as exc:
        print(f"error: output path not writable: {exc}", file=sys.stderr)
        return EXIT_IO

    records = bench.run_sweep(config)
    report = bench.build_report(config, records)
    try:
        bench.write_csv(records, config.csv_path)
        bench.write_json(report, config.json_path)
    except OSError as exc:
        print(f"error: writing outputs failed: {exc}", file=sys.stderr)
        return EXIT_IO

    print(f"wrote {config.csv_path} and {config.json_path} ({len(records)} records)")
    _print_bench_summary(report)
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        with open(args.json_file, "r", encoding="utf-8") as handle:
            report = json.load(handle)
    except OSError as exc:
        print(f"error: cannot read report: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: not a JSON report: {exc}", file=sys.stderr)
        return EXIT_USAGE

    cfg = report.get("config", {})
    print(
        f"bench of C={cfg.get('c')} r={cfg.get('r')} reps={cfg.get('reps')} "
        f"seed={cfg.get('seed')} over N={cfg.get('n_values')}"
    )
    for rec in report.get("records", []):
        wall = rec.get("wall_seconds_median")
        wall_text = f"{wall:.6f}s" if wall is not None else "infeasible"
        print(
            f"  {rec['variant']:>9} {rec['direction']:>8} N={rec['n']:>6}: "
            f"{wall_text:>12}  peak_floats={rec['peak_floats']}"
        )
    _print_bench_summary(report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linatt",
        description="Verify and benchmark softmax vs. reassociated linear self-attention.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run the numeric property suites")
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument("--sizes", help="comma list of NxC instance shapes", default=None)
    p_verify.set_defaults(func=_cmd_verify)

    p_bench = sub.add_parser("bench", help="run a timing/allocation sweep")
    p_bench.add_argument("--n", help="comma list of position counts", default=None)
    p_bench.add_argument("--c", type=int, default=None)
    p_bench.add_argument("--r", type=int, default=None)
    p_bench.add_argument("--reps", type=int, default=None)
    p_bench.add_argument("--warmup", type=int, default=None)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--variants", default=None, help="comma list: vanilla,quadratic,linear")
    p_bench.add_argument("--directions", default=None, help="comma list: forward,backward")
    p_bench.add_argument("--max-floats", dest="max_floats", type=int, default=None)
    p_bench.add_argument("--budget", type=int, default=None, help="feasibility float budget")
    p_bench.add_argument("--csv", default=None, help="CSV output path")
    p_bench.add_argument("--json", dest="json_path", default=None, help="JSON output path")
    p_bench.add_argument("--config", default=None, help="flat key=value config file")
    p_bench.set_defaults(func=_cmd_bench)

    p_grad = sub.add_parser("gradcheck", help="check backwards against finite differences")
    p_grad.add_argument("--seed", type=int, default=None)
    p_grad.add_argument("--sizes", help="comma list of NxC instance shapes", default=None)
    p_grad.add_argument("--h", type=float, default=1e-5, help="central-difference step")
    p_grad.set_defaults(func=_cmd_gradcheck)

    p_report = sub.add_parser("report", help="re-render a JSON report as text")
    p_report.add_argument("json_file")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "seed", None) is None and args.command in ("verify", "gradcheck"):
            args.seed = _default_seed()
        return args.func(args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
