"""Command-line interface.

Subcommands:

* ``normalize`` - run a normalizer over score vectors read one per line
* ``check``     - randomized property suite over all normalizers
* ``oracle``    - fuzz the evidential route against the closed form
* ``bench``     - desk-scale mixture benchmark comparing the normalizers

Every output record is a single JSON line shaped
``{"command", "inputs_digest", "results", "version", "seed"}`` with floats
at 17 significant digits; payloads carry no timestamps so repeated runs with
the same seed diff clean.

Exit codes: 0 success, 1 property or equivalence failure, 2 usage/parse
error, 3 non-finite numeric input, 4 training divergence.

``SPARSENORM_SEED`` overrides the default seed; an explicit ``--seed`` wins.
"""

import argparse
import hashlib
import math
import os
import sys

import numpy as np

from . import __version__, evidential, mixture, normalize
from .backend import ACTIVE
from .checks import run_property_suite
from .errors import ConfigError, DivergenceError
from .jsonio import render_json
from .numerics import RngStream

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_BAD_INPUT = 3
EXIT_DIVERGED = 4

DEFAULT_SEED = 42

_CLI_FNS = {
    "softmax": lambda v, eps: normalize.softmax(v),
    "ev": lambda v, eps: normalize.ev_softmax(v),
    "ev-strict": lambda v, eps: normalize.ev_softmax_strict(v),
    "ev-train": lambda v, eps: normalize.ev_softmax_train(v, eps),
    "sparsemax": lambda v, eps: normalize.sparsemax(v),
    "entmax15": lambda v, eps: normalize.entmax15(v),
}


def _digest(*chunks):
    h = hashlib.sha256()
    for c in chunks:
        h.update(str(c).encode())
        h.update(b"\x1f")
    return h.hexdigest()[:16]


def _record(command, digest, seed, results):
    return {
        "command": command,
        "inputs_digest": digest,
        "results": results,
        "version": __version__,
        "seed": seed,
    }


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _resolve_seed(flag_value, fallback=DEFAULT_SEED):
    if flag_value is not None:
        return flag_value
    env = os.environ.get("SPARSENORM_SEED")
    if env is not None:
        return int(env)
    return fallback


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsenorm",
        description="sparse normalizers, evidential oracle, mixture benchmark",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", help="normalize score vectors line by line")
    p.add_argument("--fn", required=True, choices=sorted(_CLI_FNS))
    p.add_argument("--eps", type=float, default=normalize.DEFAULT_EPS)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("input", nargs="?", default="-",
                   help="file of whitespace-separated vectors, '-' for stdin")

    p = sub.add_parser("check", help="run the property suite")
    p.add_argument("--trials", type=_positive_int, default=10000)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("oracle", help="fuzz evidential route vs closed form")
    p.add_argument("--trials", type=_positive_int, default=10000)
    p.add_argument("--k", type=_positive_int, default=10)
    p.add_argument("--j", type=_positive_int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lattice", action="store_true",
                   help="also brute-force the subset lattice (k <= 16)")

    p = sub.add_parser("bench", help="train the mixture with each normalizer")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--out", default=None, help="also write records to a file "
                   "(plus <out>.curves.csv with the ELBO curves)")
    p.add_argument("--seed", type=int, default=None)
    return parser


# ---------------------------------------------------------------------------
# normalize


def _cmd_normalize(args):
    if not args.eps > 0.0:
        print("sparsenorm normalize: --eps must be positive", file=sys.stderr)
        return EXIT_USAGE
    seed = _resolve_seed(args.seed)
    fn = _CLI_FNS[args.fn]
    if args.input == "-":
        lines = sys.stdin.read().splitlines()
    else:
        try:
            with open(args.input, "r", encoding="utf-8") as handle:
                lines = handle.read().splitlines()
        except OSError as exc:
            print(f"sparsenorm normalize: {exc}", file=sys.stderr)
            return EXIT_USAGE

    vectors = []
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            print(
                f"sparsenorm normalize: line {lineno}: "
                f"could not parse {line!r} as numbers",
                file=sys.stderr,
            )
            return EXIT_USAGE
        if not all(math.isfinite(t) for t in values):
            print(
                f"sparsenorm normalize: line {lineno}: non-finite input",
                file=sys.stderr,
            )
            return EXIT_BAD_INPUT
        vectors.append((lineno, line, values))

    for lineno, line, values in vectors:
        dist = fn(np.array(values), args.eps)
        results = {
            "p": dist.probs,
            "support": [bool(s) for s in dist.support],
        }
        print(_render_line(
            "normalize", _digest(args.fn, args.eps, line), seed, results
        ))
    return EXIT_OK


def _render_line(command, digest, seed, results):
    return render_json(_record(command, digest, seed, results))


# ---------------------------------------------------------------------------
# check


def _cmd_check(args):
    seed = _resolve_seed(args.seed)
    properties = run_property_suite(seed, args.trials)
    all_passed = all(p["passed"] for p in properties)
    results = {
        "backend": ACTIVE,
        "trials": args.trials,
        "all_passed": all_passed,
        "properties": properties,
    }
    print(_render_line("check", _digest("check", args.trials, seed), seed, results))
    return EXIT_OK if all_passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# oracle


def _cmd_oracle(args):
    if args.lattice and args.k > evidential.MAX_LATTICE_CLASSES:
        print(
            f"sparsenorm oracle: --lattice caps --k at "
            f"{evidential.MAX_LATTICE_CLASSES}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    seed = _resolve_seed(args.seed)
    rng = RngStream(seed)
    results = evidential.theorem_fuzz(rng.split(0), args.trials, k=args.k, j=args.j)
    failed = results["max_deviation"] > 1e-12 or results["support_mismatches"] > 0
    if args.lattice:
        lattice = evidential.lattice_fuzz(
            rng.split(1), max(1, args.trials // 100), k=args.k
        )
        results["lattice"] = lattice
        failed = failed or lattice["max_rel_deviation"] > 1e-10
        failed = failed or lattice["max_zero_mass"] > 0.0
    digest = _digest("oracle", args.trials, args.k, args.j, args.lattice, seed)
    print(_render_line("oracle", digest, seed, results))
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# bench


_BENCH_DATASET_KEYS = {
    "n_prototypes": int,
    "n_bits": int,
    "noise_rate": float,
    "n_samples": int,
}
_BENCH_TRAIN_KEYS = {
    "eps": float,
    "learning_rate": float,
    "steps": int,
    "batch_size": int,
    "n_latent": int,
}


def _parse_config_file(path):
    """Flat ``key = value`` lines; '#' starts a comment; no sections."""
    options = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            options[key.strip()] = value.strip()
    return options


def _bench_settings(args):
    options = _parse_config_file(args.config) if args.config else {}
    known = (
        set(_BENCH_DATASET_KEYS) | set(_BENCH_TRAIN_KEYS) | {"normalizers", "seed"}
    )
    unknown = set(options) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    # precedence: --seed flag, config file, SPARSENORM_SEED, default
    if args.seed is not None:
        seed = args.seed
    elif "seed" in options:
        seed = int(options["seed"])
    else:
        seed = _resolve_seed(None)

    names = [
        n.strip()
        for n in options.get("normalizers", ",".join(mixture.BENCH_NORMALIZERS)).split(",")
        if n.strip()
    ]
    dataset_kwargs = {
        key: cast(options[key])
        for key, cast in _BENCH_DATASET_KEYS.items()
        if key in options
    }
    train_kwargs = {
        key: cast(options[key])
        for key, cast in _BENCH_TRAIN_KEYS.items()
        if key in options
    }
    dataset_config = mixture.DatasetConfig(seed=seed, **dataset_kwargs)
    configs = [
        mixture.TrainConfig(normalizer=name, seed=seed, **train_kwargs)
        for name in names
    ]
    return seed, dataset_config, configs


def _cmd_bench(args):
    try:
        seed, dataset_config, configs = _bench_settings(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"sparsenorm bench: {exc}", file=sys.stderr)
        return EXIT_USAGE

    dataset = mixture.gen_dataset(dataset_config)
    digest = _digest(
        "bench", seed, dataset_config,
        *(c.normalizer for c in configs),
        *((c.eps, c.learning_rate, c.steps, c.batch_size) for c in configs),
    )
    lines = []
    curves = []
    for config in configs:
        try:
            _, metrics = mixture.train(dataset, config)
        except DivergenceError as exc:
            print(f"sparsenorm bench: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        results = metrics.to_payload()
        results["backend"] = ACTIVE
        lines.append(_render_line("bench", digest, seed, results))
        curves.append((config.normalizer, metrics.elbo_curve))

    for line in lines:
        print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + "\n")
        with open(args.out + ".curves.csv", "w", encoding="utf-8") as handle:
            handle.write("normalizer,index,elbo\n")
            for name, curve in curves:
                for i, value in enumerate(curve):
                    handle.write(f"{name},{i},{format(value, '.17g')}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help/--version
        return int(exc.code or 0)
    try:
        if args.command == "normalize":
            return _cmd_normalize(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "bench":
            return _cmd_bench(args)
    except ValueError as exc:
        print(f"sparsenorm {args.command}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
