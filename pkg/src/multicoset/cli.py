"""Command-line front end: ``multicoset {plan,sweep,search,hist,simulate}``.

Exit codes: 0 success, 2 parse/validation error, 3 infeasible parameters
(p < q), 4 rank-deficient pattern, 5 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path

from .errors import CapExceededError, InfeasibleError, RankDeficientError
from .modulation import SamplePattern
from .pattern_search import (DEFAULT_EXHAUSTIVE_CAP, DEFAULT_THRESHOLDS, exhaustive_search,
                             random_pattern_trials, random_search, sfs_over_random_supports,
                             sfs_search)
from .reconstruction import simulate
from .signal_lab import write_signal
from .spectrum_model import (BandSet, SpectralIndexSet, compute_spectral_index_set,
                             make_rate_plan, sweep_rates)

FORMAT_VERSION = 1
EXIT_USAGE, EXIT_INFEASIBLE, EXIT_RANK, EXIT_CAP = 2, 3, 4, 5


class UsageError(ValueError):
    pass


def load_schema(command: str) -> dict:
    """JSON schema of ``multicoset <command> --json`` output."""
    ref = resources.files("multicoset").joinpath("schemas", f"{command}.schema.json")
    return json.loads(ref.read_text())


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--json", action="store_true", help="emit JSON instead of text/CSV")
    g.add_argument("--out", metavar="PATH", help="write output to PATH instead of stdout")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--config", metavar="PATH", help="JSON file of option values; flags win")
    g.add_argument("--threads", type=int, help="worker threads for pattern searches")

    bands = argparse.ArgumentParser(add_help=False)
    bands.add_argument("--bands", help="'a1:b1,a2:b2[@fmax]' in Hz, or a JSON band file")
    bands.add_argument("--fmax", type=float, help="maximum frequency f_max in Hz")

    parser = argparse.ArgumentParser(prog="multicoset", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    subs = {}

    p = sub.add_parser("plan", parents=[common, bands], help="spectral index set and rates")
    p.add_argument("--L", type=int)
    p.add_argument("--p", type=int, help="cosets per block (default: q)")
    subs["plan"] = p

    p = sub.add_parser("sweep", parents=[common, bands], help="minimal rate versus L")
    p.add_argument("--L-min", dest="L_min", type=int)
    p.add_argument("--L-max", dest="L_max", type=int)
    subs["sweep"] = p

    p = sub.add_parser("search", parents=[common, bands], help="pattern search")
    p.add_argument("--L", type=int)
    p.add_argument("--p", type=int, help="cosets per block (default: q)")
    p.add_argument("--k", type=_int_list, help="spectral index set, e.g. 2,3,8,9")
    p.add_argument("--method", choices=["exhaustive", "sfs", "random"])
    p.add_argument("--trials", type=int, help="random draws for --method random")
    p.add_argument("--cap", type=int, help=f"exhaustive budget (default {DEFAULT_EXHAUSTIVE_CAP})")
    subs["search"] = p

    p = sub.add_parser("hist", parents=[common, bands], help="condition-number histograms")
    p.add_argument("--L", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--k", type=_int_list)
    p.add_argument("--trials", type=int)
    p.add_argument("--mode", choices=["random", "sfs-supports"])
    p.add_argument("--p-rule", dest="p_rule", choices=["p_equals_q", "fixed"])
    p.add_argument("--thresholds", type=_float_list)
    subs["hist"] = p

    p = sub.add_parser("simulate", parents=[common, bands], help="sample, add noise, reconstruct")
    p.add_argument("--L", type=int)
    which = p.add_mutually_exclusive_group()
    which.add_argument("--pattern", type=_int_list, help="coset offsets, e.g. 1,2,6,7")
    which.add_argument("--method", choices=["exhaustive", "sfs"])
    p.add_argument("--p", type=int, help="cosets for --method (default: q)")
    p.add_argument("--cap", type=int, help=f"exhaustive budget (default {DEFAULT_EXHAUSTIVE_CAP})")
    p.add_argument("--N", type=int, help="grid length (default 64 L)")
    p.add_argument("--snr-db", dest="snr_db", type=float, help="omit for a noiseless run")
    p.add_argument("--noise-seed", dest="noise_seed", type=int)
    p.add_argument("--save-signals", dest="save_signals", metavar="PREFIX",
                   help="write PREFIX.orig.bin and PREFIX.recon.bin containers")
    subs["simulate"] = p
    return parser, subs


DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "trials": 1000,
    "cap": DEFAULT_EXHAUSTIVE_CAP,
    "mode": "random",
    "p_rule": "p_equals_q",
    "thresholds": list(DEFAULT_THRESHOLDS),
}


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(config, dict):
            parser.error("config must be a JSON object")
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(config) - known)
        if unknown:
            parser.error(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        try:
            config = {key: _coerce_config(key, val) for key, val in config.items()}
        except (argparse.ArgumentTypeError, ValueError) as exc:
            parser.error(f"bad config value: {exc}")
        sp.set_defaults(**config)
        args = parser.parse_args(argv)
        if getattr(args, "pattern", None) is not None and getattr(args, "method", None) is not None:
            # a flag given on the command line overrides the other choice from the config
            if "pattern" in config and "method" not in config:
                args.pattern = None
            elif "method" in config and "pattern" not in config:
                args.method = None
            else:
                parser.error("--pattern and --method are mutually exclusive")
    for key, val in DEFAULTS.items():
        if getattr(args, key, None) is None and hasattr(args, key):
            setattr(args, key, val)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.seed < 0:
        parser.error("--seed must be non-negative")
    return args


def _coerce_config(key, val):
    # lists in config files may be given as JSON arrays or as flag strings
    if key in ("k", "pattern") and isinstance(val, str):
        return _int_list(val)
    if key == "thresholds" and isinstance(val, str):
        return _float_list(val)
    if key == "bands" and isinstance(val, dict):
        return BandSet.from_dict(val).to_text()
    return val


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-")
                                                                    for m in missing))


def _bands(args) -> BandSet:
    _require(args, "bands")
    text = args.bands
    if text.endswith(".json") and Path(text).exists():
        bands = BandSet.from_json(Path(text).read_text())
        if args.fmax is not None and args.fmax != bands.f_max:
            raise UsageError(f"--fmax {args.fmax} conflicts with {text}")
        return bands
    return BandSet.from_text(text, args.fmax)


def _index_set(args) -> SpectralIndexSet:
    if args.k is not None:
        if args.bands is not None:
            raise UsageError("give either --k or --bands, not both")
        return SpectralIndexSet(args.L, tuple(args.k))
    if args.bands is None:
        raise UsageError("need --k or --bands")
    return compute_spectral_index_set(_bands(args), args.L)


def _real(x):
    return x if math.isfinite(x) else None


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


# -- commands -------------------------------------------------------------------

def cmd_plan(args) -> tuple[str, dict]:
    _require(args, "L")
    bands = _bands(args)
    k = compute_spectral_index_set(bands, args.L)
    plan = make_rate_plan(bands, args.L, k.q if args.p is None else args.p)
    doc = {"format_version": FORMAT_VERSION, "command": "plan", "bands": bands.to_dict()}
    doc.update(plan.to_dict())
    text = (
        f"k = {{{', '.join(map(str, k.indices))}}}\n"
        f"q = {plan.q}\n"
        f"p = {plan.p}\n"
        f"L = {plan.L}\n"
        f"average rate D = {plan.average_rate!r} Hz\n"
        f"ratio p/L = {plan.ratio!r}\n"
        f"Landau ratio = {plan.landau_ratio!r}\n"
    )
    return text, doc


def cmd_sweep(args) -> tuple[str, dict]:
    _require(args, "L_min", "L_max")
    bands = _bands(args)
    plans = sweep_rates(bands, args.L_min, args.L_max)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["L", "q", "ratio"])
    for plan in plans:
        writer.writerow([plan.L, plan.q, repr(plan.ratio)])
    doc = {
        "format_version": FORMAT_VERSION,
        "command": "sweep",
        "bands": bands.to_dict(),
        "landau_ratio": bands.total_width / bands.f_max,
        "rows": [{"L": pl.L, "q": pl.q, "ratio": pl.ratio} for pl in plans],
    }
    return buf.getvalue(), doc


def _search(args, L, p, k, method):
    if method == "exhaustive":
        return exhaustive_search(L, p, k, cap=args.cap, workers=args.threads)
    if method == "sfs":
        return sfs_search(L, p, k, workers=args.threads)
    if method == "random":
        return random_search(L, p, k, args.trials, args.seed, workers=args.threads)
    raise UsageError(f"unknown method {method!r}")


def cmd_search(args) -> tuple[str, dict]:
    _require(args, "L", "method")
    k = _index_set(args)
    p = k.q if args.p is None else args.p
    result = _search(args, args.L, p, k, args.method)
    doc = result.to_dict()
    doc["command"] = "search"
    cond = "inf (rank deficient)" if result.rank_deficient else repr(result.cond)
    text = (
        f"method = {result.method}\n"
        f"k = {{{', '.join(map(str, k.indices))}}}\n"
        f"pattern = {{{', '.join(map(str, result.pattern.offsets))}}}\n"
        f"cond = {cond}\n"
        f"evaluations = {result.evaluations}\n"
    )
    return text, doc


def cmd_hist(args) -> tuple[str, dict]:
    _require(args, "L", "trials")
    if args.mode == "random":
        k = _index_set(args)
        p = k.q if args.p is None else args.p
        hist = random_pattern_trials(args.L, p, k, args.trials, args.seed,
                                     thresholds=args.thresholds, workers=args.threads)
        extra = {"mode": "random", "L": args.L, "p": p, "k": list(k.indices)}
    else:
        if args.p_rule == "fixed":
            _require(args, "p")
        hist, _ = sfs_over_random_supports(args.L, args.p_rule, args.trials, args.seed,
                                           p=args.p, workers=args.threads,
                                           thresholds=args.thresholds)
        extra = {"mode": "sfs-supports", "L": args.L, "p_rule": args.p_rule, "p": args.p}
    doc = hist.sidecar()
    doc.update(extra)
    doc["command"] = "hist"
    doc["seed"] = args.seed
    doc["bins"] = [{"bin_low": lo, "bin_high": _real(hi), "count": n}
                   for lo, hi, n in zip(hist.edges[:-1], hist.edges[1:], hist.counts)]
    return hist.to_csv(), doc


def cmd_simulate(args) -> tuple[str, dict]:
    _require(args, "L")
    bands = _bands(args)
    k = compute_spectral_index_set(bands, args.L)
    if args.pattern is not None:
        pattern = SamplePattern(args.L, tuple(args.pattern))
        method = "given"
    else:
        method = args.method or "sfs"
        p = k.q if args.p is None else args.p
        pattern = _search(args, args.L, p, k, method).pattern
    sim = simulate(bands, pattern, N=args.N, snr_db=args.snr_db, seed=args.seed,
                   noise_seed=args.noise_seed)
    if args.save_signals:
        write_signal(args.save_signals + ".orig.bin", sim.original, bands, args.seed)
        write_signal(args.save_signals + ".recon.bin", sim.reconstructed, bands, args.seed)
    doc = sim.report.to_dict()
    doc.update({
        "command": "simulate",
        "bands": bands.to_dict(),
        "k": list(k.indices),
        "N": sim.original.grid.N,
        "seed": args.seed,
        "pattern_source": method,
    })
    return _dump(doc), doc


COMMANDS = {
    "plan": cmd_plan,
    "sweep": cmd_sweep,
    "search": cmd_search,
    "hist": cmd_hist,
    "simulate": cmd_simulate,
}


def _emit(args, text: str, doc: dict):
    body = _dump(doc) if args.json else text
    if args.out:
        Path(args.out).write_text(body)
        if args.command == "hist" and not args.json:
            sidecar = {k: v for k, v in doc.items() if k != "bins"}
            Path(args.out + ".json").write_text(_dump(sidecar))
    else:
        sys.stdout.write(body)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        text, doc = COMMANDS[args.command](args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RankDeficientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(args, text, doc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
