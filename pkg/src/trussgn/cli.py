"""``trussgn`` command line: gen, train, eval, probe and sdof.

Exit codes: 0 success, 2 usage error, 3 data or validation error,
4 numerical failure (mechanism, divergence, generation).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .artifacts import load_model, manifest_entry, save_history, save_model, write_manifest
from .exceptions import (DivergenceError, GenerationFailed, MechanismError, TrussGNError,
                         ValidationError)
from .graph import encode_truss, with_temperature
from .graphnet import GnModel, Standardizer, predict
from .population import SPLITS, GenerationConfig, generate_dataset, load_dataset, save_dataset, truss_from_record
from .presets import resolve_preset
from .sdof import GaugeElement, SdofParameters, apply_gauge, modal_quantities
from .training import TrainConfig, nmse, train

logger = logging.getLogger("trussgn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_SPLIT_ALIASES = {"val": "validation", "valid": "validation"}


class UsageError(Exception):
    pass


def _range(text: str, kind=float) -> tuple:
    try:
        lo, hi = (kind(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    return lo, hi


def _int_range(text: str) -> tuple:
    return _range(text, int)


def _sweep(text: str) -> tuple:
    parts = text.split(":")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2]) if len(parts) > 2 else 21
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"expected lo:hi[:n], got {text!r}") from None
    if n < 2:
        raise argparse.ArgumentTypeError("a sweep needs at least 2 points")
    return lo, hi, n


def _gauge(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        values = ()
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected alpha,beta,gamma, got {text!r}")
    return values


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads; 1 is bit-reproducible")
    common.add_argument("--config", default=None, help="JSON file of option defaults; flags win")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="trussgn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate labelled truss datasets")
    p.add_argument("--case", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--count", type=int, default=100, help="samples per split")
    p.add_argument("--val-count", type=int, default=None, help="validation samples (default --count)")
    p.add_argument("--test-count", type=int, default=None, help="test samples (default --count)")
    p.add_argument("--split", default="all", help="train, validation, test or all")
    p.add_argument("--nodes", type=_int_range, default=(10, 40), help="node count range lo:hi")
    p.add_argument("--coords", type=_range, default=(0.0, 10.0), help="coordinate range lo:hi")
    p.add_argument("--temps", type=_range, default=(20.0, 40.0), help="temperature range lo:hi")
    p.add_argument("--support-prob", type=float, default=0.15)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train a graph network")
    p.add_argument("--data", default=None, help="directory holding train/validation/test .jsonl")
    p.add_argument("--train", dest="train_path", default=None)
    p.add_argument("--val", dest="val_path", default=None)
    p.add_argument("--test", dest="test_path", default=None)
    p.add_argument("--preset", default="desk", help="table1..table4, desk[:width] or custom:<path>")
    p.add_argument("--agg", default=None, choices=("mean", "meanvar", "mean_and_variance"))
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=200, help="maximum epochs")
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--max-seconds", type=float, default=None)
    p.add_argument("--no-timing", action="store_true",
                   help="write 0 in the history seconds column so reruns are byte-identical")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="dataset .jsonl")
    p.add_argument("--mean-predictor", action="store_true", help="score the constant-mean predictor instead")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("probe", parents=[common], help="predict omega at a chosen temperature")
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=None, help="dataset .jsonl to take the truss from")
    p.add_argument("--index", type=int, default=0, help="sample index within --data")
    p.add_argument("--truss", default=None, help="JSON file holding one truss record")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--temperature", type=float, default=None)
    group.add_argument("--sweep", type=_sweep, default=None, help="lo:hi[:n] temperature sweep")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sdof", parents=[common], help="modal report of a single-degree-of-freedom oscillator")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--gauge", type=_gauge, default=None, help="alpha,beta,gamma scaling of (m, c, k)")
    p.set_defaults(func=cmd_sdof)
    return parser


def parse_args(argv, parser=None) -> argparse.Namespace:
    """Parse with precedence flags > ``--config`` file > defaults."""
    parser = parser or build_parser()
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config", default=None)
    pre.add_argument("command", nargs="?")
    known_args, _ = pre.parse_known_args(argv)
    commands = parser._subparsers._group_actions[0].choices
    if known_args.config is None or known_args.command not in commands:
        return parser.parse_args(argv)
    try:
        overrides = json.loads(Path(known_args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read --config {known_args.config}: {exc}")
    if not isinstance(overrides, dict):
        parser.error("--config must hold a JSON object")
    subparser = commands[known_args.command]
    known = {a.dest for a in subparser._actions}
    unknown = set(overrides) - known
    if unknown:
        parser.error(f"unknown keys in --config: {sorted(unknown)}")
    for action in subparser._actions:
        if action.dest in overrides:
            value = overrides[action.dest]
            if isinstance(value, str) and action.type is not None:
                value = action.type(value)
            elif isinstance(value, list):
                value = tuple(value)
            action.default = value
            # config-supplied values satisfy required options
            action.required = False
    return parser.parse_args(argv)


def _resolved(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    return json.loads(json.dumps(d, default=list))


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _claim(path: Path, force: bool) -> Path:
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")
    return path


# --------------------------------------------------------------------------
# commands

def cmd_generate(args, argv) -> int:
    split = _SPLIT_ALIASES.get(args.split, args.split)
    splits = SPLITS if split == "all" else (split,)
    if split != "all" and split not in SPLITS:
        raise UsageError(f"--split must be one of {SPLITS + ('all',)}")
    counts = {"train": args.count,
              "validation": args.count if args.val_count is None else args.val_count,
              "test": args.count if args.test_count is None else args.test_count}
    out = _out_dir(args, "data")
    paths = [_claim(out / f"{s}.jsonl", args.force) for s in splits]
    for s, path in zip(splits, paths):
        cfg = GenerationConfig(case=args.case, node_count_range=args.nodes, coord_range=args.coords,
                               temp_range=args.temps, support_probability=args.support_prob,
                               seed=args.seed, count=counts[s], split=s)
        ds = generate_dataset(cfg)
        save_dataset(ds, path)
        print(f"{path}: {len(ds)} samples, case {args.case}, {ds.failures} skipped")
    write_manifest(out, manifest_entry("gen", argv, _resolved(args), {"seed": args.seed}, outputs=paths))
    return EXIT_OK


def _train_paths(args) -> tuple:
    base = Path(args.data) if args.data else None

    def pick(explicit, name):
        if explicit:
            return Path(explicit)
        if base is not None and (base / f"{name}.jsonl").exists():
            return base / f"{name}.jsonl"
        return None

    paths = pick(args.train_path, "train"), pick(args.val_path, "validation"), pick(args.test_path, "test")
    if paths[0] is None or paths[1] is None:
        raise UsageError("train needs a training and a validation split (--data DIR or --train/--val)")
    return paths


def _load_split(path, case=None):
    ds = load_dataset(path)
    if case is not None and ds.case != case:
        raise ValidationError(f"{path} is case {ds.case}, expected case {case}")
    return ds


def cmd_train(args, argv) -> int:
    train_path, val_path, test_path = _train_paths(args)
    train_ds = _load_split(train_path)
    val_ds = _load_split(val_path, train_ds.case)
    test_ds = _load_split(test_path, train_ds.case) if test_path else None
    case = train_ds.case
    graphs, y = train_ds.graphs(), train_ds.targets()

    blocks = resolve_preset(args.preset, case, args.agg)
    model = GnModel.build(blocks, graphs[0].widths, np.random.default_rng(args.seed),
                          Standardizer.fit(graphs, y), case)
    config = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
                         patience=args.patience, seed=args.seed, preset=args.preset,
                         aggregation=args.agg or blocks[0].aggregation, max_seconds=args.max_seconds)
    out = _out_dir(args, "run")
    model_path = _claim(out / "model.json", args.force)
    history_path = _claim(out / "history.csv", args.force)
    print(f"case {case}, preset {args.preset}, {model.n_params} parameters, "
          f"{len(graphs)}/{len(val_ds)}/{len(test_ds) if test_ds else 0} samples", file=sys.stderr)

    def progress(rec):
        if args.verbose or rec.epoch % 10 == 0:
            print(f"epoch {rec.epoch:4d}  train {rec.train_nmse:8.3f}  val {rec.val_nmse:8.3f}  "
                  f"test {rec.test_nmse:8.3f}  {rec.seconds:7.1f}s", file=sys.stderr)

    test_data = (test_ds.graphs(), test_ds.targets()) if test_ds else None
    try:
        history = train(model, (graphs, y), (val_ds.graphs(), val_ds.targets()), test_data, config, progress)
    finally:
        # a diverged run still leaves its best parameters behind for inspection
        save_model(model, model_path)
    save_history(history, history_path, timing=not args.no_timing)
    best = history.best
    print(f"best epoch {best.epoch}: train {best.train_nmse!r} val {best.val_nmse!r} test {best.test_nmse!r}")
    inputs = [p for p in (train_path, val_path, test_path) if p]
    resolved = {**_resolved(args), "train_config": asdict(config),
                "blocks": [b.to_dict() for b in model.configs]}
    write_manifest(out, manifest_entry("train", argv, resolved, {"seed": args.seed},
                                       inputs=inputs, outputs=[model_path, history_path]))
    return EXIT_OK


def _residual_summary(pred, y) -> dict:
    r = pred - y
    return {"mean": float(r.mean()), "std": float(r.std()), "median_abs": float(np.median(np.abs(r))),
            "max_abs": float(np.abs(r).max())}


def cmd_eval(args, argv) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.data)
    if model.case is not None and ds.case != model.case:
        raise ValidationError(f"model is case {model.case}, dataset is case {ds.case}")
    y = ds.targets()
    if args.mean_predictor:
        pred = np.full_like(y, y.mean())
    else:
        graphs = ds.graphs()
        for g in graphs[:1]:
            model.check_graph(g)
        pred = predict(model, graphs)
    metrics = {"model": str(args.model), "data": str(args.data), "count": len(y),
               "predictor": "mean" if args.mean_predictor else "model",
               "nmse": nmse(pred, y), "residuals": _residual_summary(pred, y)}
    print(f"nmse {metrics['nmse']!r}")
    print("residuals " + " ".join(f"{k} {v:.6g}" for k, v in metrics["residuals"].items()))
    if args.out:
        out = _out_dir(args, "eval")
        path = _claim(out / "metrics.json", args.force)
        path.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        write_manifest(out, manifest_entry("eval", argv, _resolved(args), {},
                                           inputs=[args.model, args.data], outputs=[path]))
    return EXIT_OK


def _probe_graph(args, case):
    if args.truss:
        record = json.loads(Path(args.truss).read_text(encoding="utf-8"))
        return encode_truss(truss_from_record(record), case)
    if not args.data:
        raise UsageError("probe needs --data (with --index) or --truss")
    ds = load_dataset(args.data)
    if not 0 <= args.index < len(ds):
        raise ValidationError(f"--index {args.index} outside 0..{len(ds) - 1}")
    return encode_truss(ds.samples[args.index].truss, case)


def cmd_probe(args, argv) -> int:
    model = load_model(args.model)
    if model.case not in (2, 3):
        raise ValidationError("probing needs a temperature-aware model (case 2 or 3); this one is case "
                              f"{model.case}")
    graph = _probe_graph(args, model.case)
    model.check_graph(graph)
    if args.sweep:
        temps = np.linspace(*args.sweep)
    elif args.temperature is not None:
        temps = np.array([args.temperature])
    else:
        temps = np.array([graph.globals_[0]])
    # one graph per forward pass, matching how eval would score a lone sample
    omega = np.array([predict(model, [with_temperature(graph, t)])[0] for t in temps])
    for t, w in zip(temps, omega):
        print(f"{float(t)!r},{float(w)!r}")
    if args.out:
        out = _out_dir(args, "probe")
        path = _claim(out / "probe.csv", args.force)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("temperature", "omega_hat"))
            writer.writerows((repr(float(t)), repr(float(w))) for t, w in zip(temps, omega))
        inputs = [args.model] + [p for p in (args.data, args.truss) if p]
        write_manifest(out, manifest_entry("probe", argv, _resolved(args), {}, inputs=inputs, outputs=[path]))
    return EXIT_OK


def cmd_sdof(args, argv) -> int:
    for name in ("m", "c", "k"):
        if not getattr(args, name) > 0:
            raise ValidationError(f"--{name} must be positive")
    p = SdofParameters(args.m, args.c, args.k)
    q = modal_quantities(p)
    print(f"zeta {q.zeta!r}\nomega_n {q.omega_n!r}\nomega_d {q.omega_d!r}")
    print(f"canonical form: y'' + {2 * q.zeta!r} y' + y = 0")
    if args.gauge:
        g = GaugeElement(*args.gauge)
        gq = modal_quantities(apply_gauge(p, g))
        print(f"gauged (m, c, k) = ({p.m * g.alpha!r}, {p.c * g.beta!r}, {p.k * g.gamma!r})")
        print(f"gauged zeta {gq.zeta!r}\ngauged omega_n {gq.omega_n!r}")
        if not g.physics_preserving:
            print(f"warning: gauge {args.gauge} is not physics-preserving (alpha*gamma != beta^2); "
                  "zeta is not invariant", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------

def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads), warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args, argv)
    except UsageError as exc:
        print(f"trussgn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MechanismError, DivergenceError, GenerationFailed) as exc:
        print(f"trussgn {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TrussGNError, FileExistsError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"trussgn {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
