"""Published block architectures and a small desk-scale variant.

Layer lists include the input width, so building a preset against the
wrong aggregation or encoding fails with a width mismatch instead of
silently re-wiring.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .exceptions import ValidationError
from .graphnet import GnBlockConfig, normalize_aggregation

# edge net sees both endpoints; used with the case-1 tables
_BOTH_ENDPOINTS = ("edge", "sender", "receiver")
# edge net sees one endpoint plus the global; used with the temperature tables
_SENDER_AND_GLOBAL = ("edge", "sender", "global")

_TABLES = {
    "table1": {
        "case": 1, "aggregation": "mean", "edge_wiring": _BOTH_ENDPOINTS,
        "edge": [(3, 64, 32), (132, 80, 50), (290, 180, 80)],
        "node": [(4, 72, 50), (100, 100, 70), (250, 300, 72)],
        "global": [None, (120, 200, 100), (252, 300, 72, 1)],
    },
    "table2": {
        "case": 1, "aggregation": "mean_and_variance", "edge_wiring": _BOTH_ENDPOINTS,
        "edge": [(3, 64, 32), (132, 80, 50), (290, 180, 80)],
        "node": [(4, 72, 50), (150, 100, 70), (330, 300, 72)],
        "global": [None, (240, 200, 100), (404, 450, 150, 1)],
    },
    "table3": {
        "case": 2, "aggregation": "mean_and_variance", "edge_wiring": _SENDER_AND_GLOBAL,
        "edge": [(3, 64, 32), (167, 80, 50), (220, 180, 80)],
        "node": [(4, 72, 50), (235, 100, 70), (330, 300, 72)],
        "global": [(1, 120, 85), (325, 200, 100), (404, 450, 150, 1)],
    },
    "table4": {
        "case": 3, "aggregation": "mean_and_variance", "edge_wiring": _SENDER_AND_GLOBAL,
        "edge": [(5, 100, 64), (234, 100, 64), (264, 250, 120)],
        "node": [(4, 120, 85), (298, 200, 100), (440, 450, 150)],
        "global": [(1, 120, 85), (413, 200, 100), (640, 450, 150, 1)],
    },
}

PRESET_NAMES = tuple(_TABLES) + ("desk",)


def _three_blocks(edge, node, glob, edge_wiring, aggregation, has_global_input):
    """Wire three blocks: independent encoders, then two message-passing rounds."""
    blocks = [GnBlockConfig(("edge",), ("node",), ("global",), edge[0], node[0], glob[0], aggregation)]
    for k in (1, 2):
        # a global attribute exists from block 1 in the temperature cases, from block 2 otherwise
        with_global = has_global_input or k == 2
        g = ("global",) if with_global else ()
        if edge_wiring == _BOTH_ENDPOINTS:
            e_in = _BOTH_ENDPOINTS + g
        else:
            e_in = edge_wiring
        blocks.append(GnBlockConfig(e_in, ("agg_edges", "node") + g, ("agg_edges", "agg_nodes") + g,
                                    edge[k], node[k], glob[k], aggregation))
    return blocks


def table_preset(name: str, aggregation: Optional[str] = None) -> list:
    """Block configs of a published table.

    ``aggregation`` overrides the table's own; the declared input widths then
    no longer match and building the model raises a width mismatch.
    """
    try:
        spec = _TABLES[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {PRESET_NAMES}") from None
    agg = normalize_aggregation(aggregation or spec["aggregation"])
    return _three_blocks(spec["edge"], spec["node"], spec["global"], spec["edge_wiring"], agg,
                         has_global_input=spec["global"][0] is not None)


def table_case(name: str) -> int:
    return _TABLES[name]["case"]


def table_aggregation(name: str) -> str:
    return _TABLES[name]["aggregation"]


def desk_preset(case: int, aggregation: str = "mean", width: int = 32) -> list:
    """Reduced three-block model; first-block widths never exceed ``2 * width``."""
    agg = normalize_aggregation(aggregation)
    w = int(width)
    edge = [(None, 2 * w, w), (None, 2 * w, w), (None, 2 * w, w)]
    node = [(None, 2 * w, w), (None, 2 * w, w), (None, 2 * w, w)]
    if case == 1:
        glob = [None, (None, 2 * w, w), (None, 2 * w, w, 1)]
        wiring = _BOTH_ENDPOINTS
    else:
        glob = [(None, w, w), (None, 2 * w, w), (None, 2 * w, w, 1)]
        wiring = _BOTH_ENDPOINTS + ("global",)
    return _three_blocks(edge, node, glob, wiring, agg, has_global_input=case != 1)


def load_custom_preset(path, aggregation: Optional[str] = None) -> list:
    """Read ``{"aggregation": ..., "blocks": [{"edge": {"inputs": [...], "layers": [...]}, ...}]}``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    agg = aggregation or data.get("aggregation", "mean")
    blocks = data["blocks"] if isinstance(data, dict) else data
    return [GnBlockConfig.from_dict(b, agg) for b in blocks]


def resolve_preset(name: str, case: int, aggregation: Optional[str] = None) -> list:
    """Turn a preset name (``table1``..``table4``, ``desk``, ``custom:<path>``) into block configs."""
    if name.startswith("custom:"):
        return load_custom_preset(name[len("custom:"):], aggregation)
    if name == "desk" or name.startswith("desk:"):
        width = int(name.split(":", 1)[1]) if ":" in name else 32
        return desk_preset(case, aggregation or "mean", width)
    if name in _TABLES and table_case(name) != case:
        raise ValidationError(f"{name} is built for case {table_case(name)}, data is case {case}")
    return table_preset(name, aggregation)
