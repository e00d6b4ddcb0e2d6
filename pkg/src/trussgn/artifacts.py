"""On-disk artifacts: trained models, training histories and run manifests."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .exceptions import ValidationError
from .graphnet import GnBlock, GnBlockConfig, GnModel, Mlp, Standardizer
from .training import TrainHistory

MODEL_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


def _net_to_dict(net: Optional[Mlp]):
    if net is None:
        return None
    return {
        "widths": list(net.widths),
        "output_relu": net.output_relu,
        # row-major (fan_in, fan_out) matrices
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d) -> Optional[Mlp]:
    if d is None:
        return None
    widths = d["widths"]
    weights = [np.asarray(w, dtype=np.float64) for w in d["weights"]]
    biases = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
    shapes_ok = (len(weights) == len(biases) == len(widths) - 1
                 and all(w.shape == (a, b) for w, a, b in zip(weights, widths[:-1], widths[1:]))
                 and all(b.shape == (n,) for b, n in zip(biases, widths[1:])))
    if not shapes_ok:
        raise ValidationError(f"weight shapes disagree with layer widths {widths}")
    return Mlp(tuple(d["widths"]), weights, biases, bool(d["output_relu"]))


def model_to_dict(model: GnModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "case": model.case,
        "input_widths": list(model.input_widths),
        "blocks": [{
            "config": block.config.to_dict(),
            "edge_net": _net_to_dict(block.edge_net),
            "node_net": _net_to_dict(block.node_net),
            "global_net": _net_to_dict(block.global_net),
        } for block in model.blocks],
        "standardizer": model.standardizer.to_dict(),
    }


def model_from_dict(d: dict) -> GnModel:
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format_version {d.get('format_version')}")
    blocks = []
    for b in d["blocks"]:
        cfg = GnBlockConfig.from_dict(b["config"])
        block = GnBlock(cfg, _net_from_dict(b["edge_net"]), _net_from_dict(b["node_net"]),
                        _net_from_dict(b["global_net"]))
        for key in ("edge", "node", "global"):
            layers = getattr(cfg, f"{key}_layers")
            net = getattr(block, f"{key}_net")
            if (layers is None) != (net is None) or (net is not None and tuple(layers) != net.widths):
                raise ValidationError(f"{key} network weights disagree with the block config")
        blocks.append(block)
    return GnModel(blocks, tuple(d["input_widths"]), Standardizer.from_dict(d["standardizer"]), d.get("case"))


def save_model(model: GnModel, path) -> Path:
    """Write a JSON model; floats use their shortest round-trip form, so reloading is exact."""
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_model(path) -> GnModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not a model file ({exc})") from None
    return model_from_dict(data)


def save_history(history: TrainHistory, path, timing: bool = True) -> Path:
    path = Path(path)
    path.write_text(history.to_csv(timing=timing), encoding="utf-8")
    return path


def load_history(path) -> TrainHistory:
    return TrainHistory.from_csv(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# manifests

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hashes(paths) -> dict:
    return {str(p): sha256_file(p) for p in paths}


def manifest_entry(command: str, argv: list, config: dict, seeds: dict, inputs=(), outputs=()) -> dict:
    return {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "inputs": _hashes(inputs),
        "outputs": _hashes(outputs),
        "tool_version": __version__,
    }


def read_manifest(out_dir) -> dict:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.exists():
        return {"tool_version": __version__, "entries": []}
    return json.loads(path.read_text(encoding="utf-8"))


def write_manifest(out_dir, entry: dict) -> Path:
    """Record ``entry`` in the directory's single manifest.

    An earlier entry that produced any of the same outputs is replaced, so
    re-running a command does not accumulate stale records.
    """
    manifest = read_manifest(out_dir)
    outputs = set(entry["outputs"])
    manifest["entries"] = [e for e in manifest["entries"] if not outputs & set(e["outputs"])]
    manifest["entries"].append(entry)
    manifest["tool_version"] = __version__
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def verify_manifest(out_dir) -> list:
    """Paths whose current content no longer matches the recorded hash."""
    bad = []
    for entry in read_manifest(out_dir)["entries"]:
        for path, digest in {**entry["inputs"], **entry["outputs"]}.items():
            if not Path(path).exists() or sha256_file(path) != digest:
                bad.append(path)
    return bad
