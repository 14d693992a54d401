"""Command-line entry point: ``ppls demo|run|bench|keygen``."""
from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
import time

from .asym import asym_keygen
from .errors import ConfigInvalid
from .harness import bench as bench_mod
from .harness.deployment import role_rng
from .harness.scenario import ScenarioReport, load_config, run_scenario, three_vehicle_fixture


def _print_report(report: ScenarioReport, out, frames: bool) -> None:
    if frames:
        for i, f in enumerate(report.frames):
            arrow = "->" if f["direction"] == "request" else "<-"
            left, right = (f["sender"], f["receiver"]) if arrow == "->" else (f["receiver"], f["sender"])
            print(f"{i:4d} t={f['at_ms']:>7d}ms {left:>16s} {arrow} {right:<16s} "
                  f"0x{f['tag']:02X} {f['message']:<24s} {f['bytes']:6d} B", file=out)
    for q in report.queries:
        status = "ok" if q.ok else "VIOLATION"
        shown = ", ".join(f"{label}@{tuple(p)}" for label, p in q.returned) or "(none)"
        print(f"query {q.index} t={q.at_ms}ms {q.requester} {q.type} {q.params}: {shown} [{status}]", file=out)
        for v in q.violations:
            print(f"    {v}", file=out)
    for name, findings in report.audits.items():
        print(f"audit {name}: {'pass' if not findings else 'FAIL'}", file=out)
        for finding in findings:
            print(f"    {finding}", file=out)
    print("all checks passed" if report.passed else "CHECKS FAILED", file=out)


def cmd_demo(args) -> int:
    report = run_scenario(three_vehicle_fixture(seed=args.seed), backend=args.backend)
    if args.json:
        json.dump(report.to_dict(), sys.stdout, indent=2)
        print()
    else:
        _print_report(report, sys.stdout, frames=True)
    return 0 if report.passed else 1


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigInvalid as exc:
        for line in exc.diagnostics:
            print(f"{args.config}: {line}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{args.config}: {exc.strerror}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    report = run_scenario(cfg, backend=args.backend)
    if args.json:
        json.dump(report.to_dict(), sys.stdout, indent=2)
        print()
    else:
        _print_report(report, sys.stdout, frames=args.frames)
    return 0 if report.passed else 1


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_bench(args) -> int:
    started = time.perf_counter()

    def progress(row):
        print(f"n={row.n}: total {row.total_ms_mean:.1f} ms, compare share {row.cmp_share:.3f}", file=sys.stderr)

    rows = bench_mod.bench(args.n, args.reps, paillier_bits=args.paillier_bits, rsa_bits=args.rsa_bits,
                           i_max=args.imax, ls_count=args.ls_count, seed=args.seed, progress=progress)
    text = bench_mod.to_csv(rows)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if len(rows) >= 2:
        slope, intercept, r2 = bench_mod.linear_fit(rows)
        print(f"linear fit: {slope:.2f} ms per vehicle + {intercept:.1f} ms, R^2 = {r2:.4f}", file=sys.stderr)
    print(f"elapsed {time.perf_counter() - started:.1f} s", file=sys.stderr)
    return 0


def cmd_keygen(args) -> int:
    seed = args.seed if args.seed is not None else secrets.randbits(64)
    rng = role_rng(seed, f"keygen:{args.role}")
    if args.role == "sns":
        out = {"role": "sns", "epoch_key": rng.randbytes(16).hex()}
    else:
        kp = asym_keygen(args.bits, rng)
        out = {"role": args.role, "bits": args.bits, "n": hex(kp.n), "e": kp.e, "d": hex(kp.d)}
    json.dump(out, sys.stdout, indent=2)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppls", description="Privacy-preserving location sharing simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log role activity to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("demo", help="run the three-vehicle fixture and print the transcript")
    d.add_argument("--json", action="store_true", help="emit the scenario report as JSON")
    d.add_argument("--backend", choices=("inproc", "socket"), default="inproc")
    d.add_argument("--seed", type=int, default=7)
    d.set_defaults(func=cmd_demo)

    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("--config", required=True)
    r.add_argument("--json", action="store_true")
    r.add_argument("--seed", type=int, help="override the config's seed")
    r.add_argument("--backend", choices=("inproc", "socket"), default="inproc")
    r.add_argument("--frames", action="store_true", help="print every logged frame")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="time friends-within queries against n eligible friends")
    b.add_argument("--n", type=_int_list, default=list(range(10, 101, 10)))
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--paillier-bits", type=int, default=1024)
    b.add_argument("--rsa-bits", type=int, default=1024)
    b.add_argument("--imax", type=int, default=1000)
    b.add_argument("--ls-count", type=int, default=2)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    k = sub.add_parser("keygen", help="generate key material for one role")
    k.add_argument("--role", choices=("sns", "ls", "vehicle"), required=True)
    k.add_argument("--bits", type=int, default=1024)
    k.add_argument("--seed", type=int)
    k.set_defaults(func=cmd_keygen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"ppls: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
