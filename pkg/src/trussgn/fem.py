"""Finite-element model of planar pin-jointed trusses.

Bars carry axial stiffness ``EA / L``; mass is lumped, each member putting
``mu * L / 2`` on both translational DOFs of each endpoint. The first
natural frequency comes from the symmetric problem
``M^-1/2 K M^-1/2 phi = lambda phi`` solved by cyclic Jacobi.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._kernels import jacobi_eigh
from .exceptions import MechanismError, NotConstrainedError, ValidationError

# member categories
CONSTANT_EA = 0
LINEAR_EA = 1
QUADRATIC_EA = 2

REFERENCE_EA = 1.0e4
OPERATING_RANGE = (20.0, 40.0)
MECHANISM_RTOL = 1e-8
MIN_LENGTH = 1e-9


def member_ea(member_type: int, temperature: float) -> float:
    """Axial rigidity ``EA`` of a member category at ``temperature`` (Celsius).

    Type 0 is temperature independent, type 1 halves linearly between 20
    and 40 degrees, type 2 follows ``-13 T^2 + 500 T + 7200``.
    """
    lo, hi = OPERATING_RANGE
    if not lo <= temperature <= hi:
        warnings.warn(f"temperature {temperature} outside the calibrated range [{lo}, {hi}]",
                      RuntimeWarning, stacklevel=2)
    if member_type == CONSTANT_EA:
        ea = REFERENCE_EA
    elif member_type == LINEAR_EA:
        ea = REFERENCE_EA * (1.0 - 0.025 * (temperature - 20.0))
    elif member_type == QUADRATIC_EA:
        ea = -13.0 * temperature**2 + 500.0 * temperature + 7200.0
    else:
        raise ValidationError(f"unknown member type {member_type}")
    if ea <= 0:
        raise ValidationError(f"EA={ea} is not positive for type {member_type} at T={temperature}")
    return float(ea)


@dataclass(frozen=True)
class MaterialLaw:
    """``EA(T)`` for one member category."""

    member_type: int

    def __call__(self, temperature: float) -> float:
        return member_ea(self.member_type, temperature)


@dataclass(eq=False)
class Truss:
    """A planar truss.

    ``coords`` is ``(n, 2)``; ``fixed`` is an ``(n, 2)`` boolean array of
    x/y support flags; ``members`` is ``(m, 2)`` node-index pairs and
    ``member_types`` the category of each member.
    """

    coords: np.ndarray
    fixed: np.ndarray
    members: np.ndarray
    member_types: np.ndarray = None
    temperature: float = 20.0
    mass_per_length: float = 1.0
    ea_scale: float = field(default=1.0, repr=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        self.fixed = np.asarray(self.fixed, dtype=bool).reshape(-1, 2)
        self.members = np.asarray(self.members, dtype=np.int64).reshape(-1, 2)
        if self.member_types is None:
            self.member_types = np.zeros(len(self.members), dtype=np.int64)
        self.member_types = np.asarray(self.member_types, dtype=np.int64).reshape(-1)
        self.temperature = float(self.temperature)
        self.mass_per_length = float(self.mass_per_length)
        self.validate()

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def n_members(self) -> int:
        return len(self.members)

    def validate(self) -> None:
        n = self.n_nodes
        if self.fixed.shape != self.coords.shape:
            raise ValidationError("fixed flags must have one (x, y) pair per node")
        if len(self.member_types) != self.n_members:
            raise ValidationError("one member type per member required")
        if n < 2 or self.n_members < 1:
            raise ValidationError("a truss needs at least two nodes and one member")
        if self.members.min() < 0 or self.members.max() >= n:
            raise ValidationError("member references a node that does not exist")
        i, j = self.members[:, 0], self.members[:, 1]
        if np.any(i == j):
            raise ValidationError("member connects a node to itself")
        pairs = np.sort(self.members, axis=1)
        if len(np.unique(pairs, axis=0)) != len(pairs):
            raise ValidationError("duplicate member")
        if len(np.unique(self.members)) != n:
            raise ValidationError("every node must belong to at least one member")
        if self.mass_per_length <= 0:
            raise ValidationError("mass_per_length must be positive")

    def member_eas(self) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            table = {t: member_ea(t, self.temperature) for t in np.unique(self.member_types)}
        return self.ea_scale * np.array([table[t] for t in self.member_types])

    def with_temperature(self, temperature: float) -> "Truss":
        return Truss(self.coords.copy(), self.fixed.copy(), self.members.copy(),
                     self.member_types.copy(), temperature, self.mass_per_length, self.ea_scale)

    def n_free_dofs(self) -> int:
        return int(self.fixed.size - self.fixed.sum())


def member_geometry(truss: Truss, member: int):
    """Length and direction cosines of ``member``, taken from node_i to node_j."""
    i, j = truss.members[member]
    return _geometry(truss.coords[i], truss.coords[j])


def _geometry(pi, pj):
    dx, dy = pj[0] - pi[0], pj[1] - pi[1]
    length = float(np.hypot(dx, dy))
    if length < MIN_LENGTH:
        raise ValidationError("coincident member end nodes")
    return length, dx / length, dy / length


def all_member_geometry(truss: Truss):
    """Vectorised ``member_geometry``: arrays ``(L, cos, sin)``."""
    d = truss.coords[truss.members[:, 1]] - truss.coords[truss.members[:, 0]]
    length = np.hypot(d[:, 0], d[:, 1])
    if np.any(length < MIN_LENGTH):
        raise ValidationError("coincident member end nodes")
    return length, d[:, 0] / length, d[:, 1] / length


def element_stiffness(ea: float, length: float, cos: float, sin: float) -> np.ndarray:
    """4x4 global-frame stiffness of a bar element (DOF order xi, yi, xj, yj)."""
    if length <= 0 or ea <= 0:
        raise ValidationError("element needs positive EA and length")
    d = np.array([-cos, -sin, cos, sin])
    return (ea / length) * np.outer(d, d)


class SystemMatrices(NamedTuple):
    stiffness: np.ndarray
    mass: np.ndarray
    dof_map: dict


def assemble_system(truss: Truss) -> SystemMatrices:
    """Global stiffness and lumped mass reduced to the free DOFs.

    ``dof_map`` maps ``(node, axis)`` (axis 0 = x, 1 = y) to the reduced index.
    """
    n = truss.n_nodes
    length, cos, sin = all_member_geometry(truss)
    ea = truss.member_eas()
    k_full = np.zeros((2 * n, 2 * n))
    m_full = np.zeros(2 * n)
    d = np.stack([-cos, -sin, cos, sin], axis=1)
    blocks = (ea / length)[:, None, None] * d[:, :, None] * d[:, None, :]
    dofs = np.stack([2 * truss.members[:, 0], 2 * truss.members[:, 0] + 1,
                     2 * truss.members[:, 1], 2 * truss.members[:, 1] + 1], axis=1)
    np.add.at(k_full, (dofs[:, :, None], dofs[:, None, :]), blocks)
    half = 0.5 * truss.mass_per_length * length
    np.add.at(m_full, dofs, half[:, None])

    free = ~truss.fixed.reshape(-1)
    if not free.any():
        raise ValidationError("truss has no free degrees of freedom")
    idx = np.flatnonzero(free)
    dof_map = {(int(g // 2), int(g % 2)): r for r, g in enumerate(idx)}
    k = k_full[np.ix_(idx, idx)]
    return SystemMatrices(0.5 * (k + k.T), np.diag(m_full[idx]), dof_map)


def _rigid_motion_admitted(truss: Truss) -> bool:
    # planar rigid modes: x translation, y translation, rotation about the centroid
    xy = truss.coords - truss.coords.mean(axis=0)
    scale = max(float(np.abs(xy).max()), 1.0)
    modes = np.zeros((truss.n_nodes, 2, 3))
    modes[:, 0, 0] = 1.0
    modes[:, 1, 1] = 1.0
    modes[:, 0, 2] = -xy[:, 1] / scale
    modes[:, 1, 2] = xy[:, 0] / scale
    restrained = modes[truss.fixed]
    if len(restrained) < 3:
        return True
    sv = np.linalg.svd(restrained, compute_uv=False)
    return bool(sv[-1] <= 1e-10 * sv[0])


def generalized_eigenvalues(truss: Truss) -> tuple[np.ndarray, float]:
    """All eigenvalues of ``K phi = lambda M phi`` and the mechanism threshold."""
    k, m, _ = assemble_system(truss)
    scale = 1.0 / np.sqrt(np.diag(m))
    a = scale[:, None] * k * scale[None, :]
    a = 0.5 * (a + a.T)
    lam, _, _ = jacobi_eigh(a)
    # relative to the matrix actually diagonalised, so the verdict does not depend on mass units
    threshold = MECHANISM_RTOL * np.trace(a) / a.shape[0]
    return lam, threshold


def first_natural_frequency(truss: Truss) -> float:
    """Smallest natural frequency in rad per unit time.

    Raises :class:`NotConstrainedError` when the supports admit rigid-body
    motion and :class:`MechanismError` for any other zero-energy mode.
    """
    if _rigid_motion_admitted(truss):
        raise NotConstrainedError("supports admit rigid-body motion")
    lam, threshold = generalized_eigenvalues(truss)
    if lam[0] <= threshold:
        raise MechanismError(f"smallest eigenvalue {lam[0]:.3e} below mechanism threshold {threshold:.3e}")
    return float(np.sqrt(lam[0]))


def check_constrained(truss: Truss) -> bool:
    try:
        lam, threshold = generalized_eigenvalues(truss)
    except ValidationError:
        return False
    return bool(lam[0] > threshold)
