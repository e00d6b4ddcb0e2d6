"""Input checks used by the estimators, in the spirit of ``sklearn.utils.validation``."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .exceptions import ValidationError, WidthMismatchError
from .fem import Truss
from .graph import AttributedGraph


def check_graphs(X, widths: Optional[tuple] = None, allow_empty: bool = False) -> list:
    """Return ``X`` as a list of graphs sharing one set of attribute widths."""
    if isinstance(X, AttributedGraph):
        raise ValidationError("expected a sequence of AttributedGraph, got a single graph")
    graphs = list(X)
    if not graphs and not allow_empty:
        raise ValidationError("no graphs given")
    for i, g in enumerate(graphs):
        if not isinstance(g, AttributedGraph):
            raise ValidationError(f"item {i} is {type(g).__name__}, expected AttributedGraph")
    found = {g.widths for g in graphs}
    if len(found) > 1:
        raise WidthMismatchError(f"graphs disagree on (edge, node, global) widths: {sorted(found)}")
    if widths is not None and found and found != {tuple(widths)}:
        raise WidthMismatchError(f"graph widths {found.pop()} do not match expected {tuple(widths)}")
    return graphs


def check_trusses(X) -> list:
    trusses = list(X)
    for i, t in enumerate(trusses):
        if not isinstance(t, Truss):
            raise ValidationError(f"item {i} is {type(t).__name__}, expected Truss")
    return trusses


def check_targets(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1:
        raise ValidationError(f"targets must be one-dimensional, got shape {y.shape}")
    if len(y) != n_samples:
        raise ValidationError(f"{n_samples} samples but {len(y)} targets")
    if not np.all(np.isfinite(y)):
        raise ValidationError("targets contain NaN or infinity")
    return y


def check_temperatures(X) -> np.ndarray:
    """Temperatures from an array, a list of trusses or a list of graphs."""
    items = list(X) if not isinstance(X, np.ndarray) else X
    if len(items) and isinstance(items[0], Truss):
        t = np.array([tr.temperature for tr in items], dtype=float)
    elif len(items) and isinstance(items[0], AttributedGraph):
        if items[0].globals_.shape[0] != 1:
            raise ValidationError("graphs carry no temperature channel")
        t = np.array([g.globals_[0] for g in items], dtype=float)
    else:
        t = np.asarray(items, dtype=float)
        if t.ndim == 2 and t.shape[1] == 1:
            t = t[:, 0]
    if t.ndim != 1 or not np.all(np.isfinite(t)):
        raise ValidationError("temperatures must be a finite one-dimensional array")
    return t


def infer_case(widths: tuple) -> Optional[int]:
    """Case implied by the truss encoding widths, or ``None`` for other graphs."""
    return {(3, 4, 0): 1, (3, 4, 1): 2, (5, 4, 1): 3}.get(tuple(widths))
