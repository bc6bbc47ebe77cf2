"""Command-line front end.

    bandalloc region    CONFIG --target s2 --sweep s1 [--fixed s3=0.35,...] [--grid N] --out env.csv
    bandalloc decompose CONFIG --rates s1=0.5 [--target s2] --out schedule.json
    bandalloc simulate  CONFIG --variant S|Shat|fixed [...] --horizon N --seeds 0,1,2 --out DIR
    bandalloc compare   CONFIG --queries queries.json --out compare.csv

Every output file gets a ``<file>.manifest.json`` companion (or an embedded
``manifest`` block for JSON outputs).  Exit codes: 0 success, 2 config or
usage error, 3 infeasible rate point, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .baselines import (
    FixedAssignment,
    SelectionPolicy,
    best_fixed_envelope,
    shat_optimize,
)
from .birkhoff import (
    DecompositionError,
    PermutationSchedule,
    decompose,
    pad_to_doubly_stochastic,
    reconstruct,
)
from .config import ConfigError, config_digest, load_config
from .model import ModelError, SuccessMatrix, SystemConfig, build_success_matrix
from .region import RegionQuery, closed_form_2x2, envelope_sweep, max_rate_lp
from .simulator import (
    RNG_ALGORITHM,
    FixedVariant,
    RandomSelectionVariant,
    ScheduleVariant,
    empirical_availability,
    run_slots,
    stability_verdict,
)

log = logging.getLogger("bandalloc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4
AGREEMENT_TOL = 1e-8
ORDER_SLACK = 1e-9


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _su_index(config: SystemConfig, token: str) -> int:
    token = token.strip()
    names = [config.su_name(k) for k in range(config.num_sus)]
    if token in names:
        return names.index(token)
    try:
        k = int(token)
    except ValueError:
        raise CliError(f"unknown SU {token!r}; known: {', '.join(names)}", EXIT_CONFIG) from None
    if not 1 <= k <= config.num_sus:
        raise CliError(f"SU index {k} out of range 1..{config.num_sus}", EXIT_CONFIG)
    return k - 1


def parse_rates(config: SystemConfig, text: Optional[str]) -> dict[int, float]:
    """Parse ``"s1=0.3,s3=0.35"`` (names or 1-based indices) into {index: rate}."""
    rates: dict[int, float] = {}
    if not text:
        return rates
    for item in text.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise CliError(f"bad rate {item!r}; expected name=rate", EXIT_CONFIG)
        name, value = item.split("=", 1)
        try:
            rate = float(value)
        except ValueError:
            raise CliError(f"bad rate value {value!r}", EXIT_CONFIG) from None
        if rate < 0:
            raise CliError(f"rate for {name} must be non-negative", EXIT_CONFIG)
        rates[_su_index(config, name)] = rate
    return rates


def manifest(args: argparse.Namespace, seeds=None) -> dict:
    return {
        "command": args.command,
        "argv": sys.argv[1:],
        "config_digest": config_digest(args.config),
        "seeds": list(seeds) if seeds is not None else None,
        "tool_version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _write_manifest(path: Path, man: dict) -> None:
    Path(f"{path}.manifest.json").write_text(json.dumps(man, indent=2) + "\n")


def _success_matrix(config: SystemConfig) -> SuccessMatrix:
    try:
        return build_success_matrix(config)
    except ModelError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc


def cmd_region(args) -> int:
    config = load_config(args.config)
    P = _success_matrix(config)
    target = _su_index(config, args.target)
    sweep = _su_index(config, args.sweep)
    if target == sweep:
        raise CliError("--target and --sweep must name different SUs", EXIT_CONFIG)
    fixed = parse_rates(config, args.fixed)
    missing = set(range(config.num_sus)) - set(fixed) - {target, sweep}
    if missing:
        names = ", ".join(config.su_name(k) for k in sorted(missing))
        raise CliError(f"--fixed must give rates for {names}", EXIT_CONFIG)
    if args.grid < 2:
        raise CliError("--grid must be at least 2", EXIT_CONFIG)

    points = envelope_sweep(P, target, sweep, fixed, args.grid)
    two_by_two = P.shape == (2, 2)
    # closed form is written for "maximise SU 2 given SU 1"; relabel SUs if needed
    pv_cf = P.values if target == 1 else P.values[:, ::-1]
    out = Path(args.out)
    worst = 0.0
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda_sweep", "lambda_target_max", "feasible", "epsilon_or_blank"])
        for pt in points:
            lam = float(pt.rates[sweep])
            eps = ""
            if two_by_two:
                cf = closed_form_2x2(SuccessMatrix(pv_cf), lam)
                if cf.feasible != pt.feasible:
                    # the swept maximum sits on the boundary; tolerate rounding there
                    if abs(lam - max(pv_cf[:, 0])) > AGREEMENT_TOL:
                        worst = np.inf
                elif cf.feasible:
                    worst = max(worst, abs(cf.lambda_s2_max - pt.rates[target]))
                    eps = f"{cf.epsilon:.12g}"
            w.writerow([f"{lam:.12g}", f"{pt.rates[target]:.12g}" if pt.feasible else "", int(pt.feasible), eps])
    _write_manifest(out, manifest(args))
    print(f"wrote {len(points)} envelope points to {out}")
    if two_by_two:
        print(f"closed-form agreement: max |LP - closed form| = {worst:.3e}")
        if worst > AGREEMENT_TOL:
            raise CliError("LP envelope disagrees with the 2x2 closed form", EXIT_NUMERICAL)
    return EXIT_OK


def _solve_point(config: SystemConfig, P: SuccessMatrix, rates: dict[int, float], target: Optional[int]):
    """LP optimum for a rate point; returns (target, envelope point)."""
    if target is None:
        missing = [k for k in range(config.num_sus) if k not in rates]
        if len(missing) > 1:
            raise CliError("give rates for all SUs but one, or name --target", EXIT_CONFIG)
        target = missing[0] if missing else config.num_sus - 1
    fixed = {k: r for k, r in rates.items() if k != target}
    for k in range(config.num_sus):
        if k != target and k not in fixed:
            fixed[k] = 0.0
    point = max_rate_lp(P, RegionQuery(target, fixed))
    if not point.feasible:
        raise CliError("rate point is outside the stability region (LP infeasible)", EXIT_INFEASIBLE)
    if target in rates and rates[target] > point.rates[target] + 1e-9:
        raise CliError(
            f"{config.su_name(target)} rate {rates[target]} exceeds its maximum {point.rates[target]:.6g}",
            EXIT_INFEASIBLE,
        )
    return target, point


def _schedule_for(point) -> tuple[PermutationSchedule, float]:
    ds = pad_to_doubly_stochastic(point.omega_star)
    try:
        schedule = decompose(ds)
    except DecompositionError as exc:
        raise CliError(f"Birkhoff decomposition failed: {exc}", EXIT_NUMERICAL) from exc
    err = float(np.max(np.abs(reconstruct(schedule) - ds.values)))
    return schedule, err


def cmd_decompose(args) -> int:
    config = load_config(args.config)
    P = _success_matrix(config)
    rates = parse_rates(config, args.rates)
    target = _su_index(config, args.target) if args.target else None
    target, point = _solve_point(config, P, rates, target)
    schedule, err = _schedule_for(point)
    if err > 1e-9:
        raise CliError(f"reconstruction error {err:.3e} exceeds 1e-9", EXIT_NUMERICAL)
    doc = {
        "target": config.su_name(target),
        "rates": {config.su_name(k): float(r) for k, r in enumerate(point.rates)},
        "omega": point.omega_star.omega.tolist(),
        "schedule": schedule.to_json(),
        "reconstruction_error": err,
        "manifest": manifest(args),
    }
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"{len(schedule.terms)} configurations, reconstruction error {err:.3e}")
    for term in doc["schedule"]:
        print(f"  q{tuple(term['assignment'])} = {term['q']:.6f}")
    return EXIT_OK


def _load_json_arg(text: str):
    p = Path(text)
    if p.exists():
        return json.loads(p.read_text())
    return json.loads(text)


def _build_variant(args, config: SystemConfig):
    if args.variant == "S":
        if args.schedule:
            data = _load_json_arg(args.schedule)
            terms = data["schedule"] if isinstance(data, dict) else data
            return ScheduleVariant(PermutationSchedule.from_json(terms, config.num_bands, config.num_sus))
        P = _success_matrix(config)
        rates = {k: float(r) for k, r in enumerate(config.su_arrival_rates)}
        _, point = _solve_point(config, P, rates, None)
        schedule, _ = _schedule_for(point)
        return ScheduleVariant(schedule)
    if args.variant == "Shat":
        if not args.gamma:
            raise CliError("--gamma is required for the Shat variant", EXIT_CONFIG)
        try:
            return RandomSelectionVariant(SelectionPolicy(np.array(_load_json_arg(args.gamma), dtype=float)))
        except ValueError as exc:
            raise CliError(f"bad --gamma: {exc}", EXIT_CONFIG) from exc
    if not args.map:
        raise CliError("--map is required for the fixed variant", EXIT_CONFIG)
    try:
        bands = tuple(int(b) - 1 for b in args.map.split(","))
        return FixedVariant(FixedAssignment(bands))
    except ValueError as exc:
        raise CliError(f"bad --map: {exc}", EXIT_CONFIG) from exc


def _simulate_one(config, variant, horizon, seed, stride, out_dir: Path):
    trace = run_slots(config, variant, horizon, seed, stride=stride)
    with (out_dir / f"trace_seed{seed}.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "queue_id", "kind", "length"])
        w.writerows(trace.to_rows())
    summary = {
        "seed": seed,
        "variant": trace.variant,
        "horizon": horizon,
        "rng_algorithm": trace.rng_algorithm,
        "queue_ids": trace.queue_ids,
        "arrivals": trace.arrivals.tolist(),
        "departures": trace.departures.tolist(),
        "final_queues": trace.final_queues.tolist(),
        "empirical_arrival_rates": (trace.arrivals / horizon).tolist(),
        "empirical_su_service_rates": trace.empirical_service_rates().tolist(),
        "empirical_availability": [empirical_availability(trace, j) for j in range(config.num_bands)],
        "collisions": trace.collisions,
        "flags": trace.flags,
    }
    if horizon >= 10_000:
        verdict = stability_verdict(trace)
        summary["verdicts"] = verdict.per_queue
        summary["drift_estimate"] = verdict.drift_estimate.tolist()
    (out_dir / f"summary_seed{seed}.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"bad --seeds {text!r}", EXIT_CONFIG) from None


def cmd_simulate(args) -> int:
    config = load_config(args.config, check_primaries=False)
    rates = parse_rates(config, args.rates)
    if rates:
        new = config.su_arrival_rates
        for k, r in rates.items():
            new[k] = r
        config = config.with_arrival_rates(new)
    if args.scale != 1.0:
        config = config.with_arrival_rates(np.clip(config.su_arrival_rates * args.scale, 0.0, 1.0))
    variant = _build_variant(args, config)
    seeds = _parse_seeds(args.seeds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(config, variant, args.horizon, s, args.stride, out_dir) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            summaries = list(pool.map(_simulate_one, *zip(*jobs)))
    else:
        summaries = [_simulate_one(*job) for job in jobs]

    merged = {"seeds": seeds, "per_seed": summaries, "manifest": manifest(args, seeds)}
    if all("verdicts" in s for s in summaries):
        per_queue = []
        for i in range(len(summaries[0]["verdicts"])):
            votes = Counter(s["verdicts"][i] for s in summaries)
            verdict, count = votes.most_common(1)[0]
            per_queue.append(verdict if count * 2 > len(summaries) else "indeterminate")
        merged["merged_verdicts"] = dict(zip(summaries[0]["queue_ids"], per_queue))
        for qid, v in merged["merged_verdicts"].items():
            print(f"{qid}: {v}")
    (out_dir / "summary.json").write_text(json.dumps(merged, indent=2) + "\n")
    print(f"simulated {len(seeds)} seed(s) x {args.horizon} slots into {out_dir}")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = load_config(args.config)
    P = _success_matrix(config)
    queries = _load_json_arg(args.queries)
    if not isinstance(queries, list):
        raise CliError("--queries must hold a JSON list", EXIT_CONFIG)
    out = Path(args.out)
    bad = []
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query", "target", "fixed_rates", "lambda_S", "lambda_Shat_lower_bound", "lambda_fixed"])
        for i, q in enumerate(queries):
            target = _su_index(config, str(q["target"]))
            fixed = {_su_index(config, str(name)): float(r) for name, r in q.get("fixed", {}).items()}
            for k in range(config.num_sus):
                if k != target:
                    fixed.setdefault(k, 0.0)
            query = RegionQuery(target, fixed)
            s = max_rate_lp(P, query)
            shat = shat_optimize(P, query, restarts=args.restarts, seed=args.seed)
            fx = best_fixed_envelope(P, query) if config.num_bands >= config.num_sus else None
            s_val = float(s.rates[target]) if s.feasible else None
            sh_val = shat.lambda_max if shat.feasible else None
            chain = [v for v in (fx, sh_val, s_val) if v is not None]
            if any(a > b + ORDER_SLACK for a, b in zip(chain, chain[1:])) or (fx is not None and sh_val is None):
                bad.append(i)
            fixed_txt = ";".join(f"{config.su_name(k)}={r:g}" for k, r in sorted(fixed.items()))
            w.writerow([
                i,
                config.su_name(target),
                fixed_txt,
                "" if s_val is None else f"{s_val:.12g}",
                "" if sh_val is None else f"{sh_val:.12g}",
                "" if fx is None else f"{fx:.12g}",
            ])
    _write_manifest(out, manifest(args, [args.seed]))
    print(f"compared {len(queries)} queries into {out} (S-hat column is an optimiser lower bound)")
    if bad:
        raise CliError(f"ordering fixed <= S-hat <= S violated for queries {bad}", EXIT_NUMERICAL)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bandalloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("region", help="trace a 2-D slice of the stability region")
    p.add_argument("config")
    p.add_argument("--target", required=True, help="SU whose rate is maximised")
    p.add_argument("--sweep", required=True, help="SU whose rate is swept")
    p.add_argument("--fixed", default="", help="rates of the remaining SUs, e.g. s3=0.35,s4=0.35")
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("decompose", help="optimal assignment and its Birkhoff schedule")
    p.add_argument("config")
    p.add_argument("--rates", default="", help="e.g. s1=0.5 (SUs left out are maximised/zero)")
    p.add_argument("--target")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("simulate", help="slot-level queue simulation")
    p.add_argument("config")
    p.add_argument("--variant", choices=["S", "Shat", "fixed"], default="S")
    p.add_argument("--schedule", help="schedule JSON from 'decompose' (S); solved from the config rates if absent")
    p.add_argument("--gamma", help="selection matrix (bands x SUs) as JSON text or file (Shat)")
    p.add_argument("--map", help="1-based band per SU, e.g. 2,1 (fixed)")
    p.add_argument("--rates", default="", help="override SU arrival rates")
    p.add_argument("--scale", type=float, default=1.0, help="multiply all SU arrival rates")
    p.add_argument("--horizon", type=int, default=100_000)
    p.add_argument("--seeds", default="0")
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="S vs S-hat vs fixed assignment")
    p.add_argument("config")
    p.add_argument("--queries", required=True, help='JSON list like [{"target": "s2", "fixed": {"s1": 0.4}}]')
    p.add_argument("--restarts", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
