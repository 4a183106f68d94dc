r"""
Hyperelastic constitutive laws: Saint Venant-Kirchhoff and neo-Hookean.

Every function accepts a single ``(d, d)`` deformation gradient or a stack
``(..., d, d)`` and broadcasts over the leading axes, which is how the
assembly evaluates all elements at once.

Naming follows the two-constant convention

.. math::
    \lambda_1 = \frac{E}{2(1+\nu)}, \qquad
    \lambda_2 = \frac{E\nu}{(1+\nu)(1-2\nu)},

so ``lambda1`` is the shear modulus (usually written :math:`\mu`) and
``lambda2`` the first Lamé parameter.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import IncompressibleLimitError, InadmissibleStateError

__all__ = [
    "LameConstants",
    "MaterialKind",
    "MaterialModel",
    "DeformationState",
    "lame_from_young_poisson",
    "deformation_gradient",
    "invariants",
    "energy",
    "piola",
    "tangent",
]


@dataclass(frozen=True)
class LameConstants:
    lambda1: float
    lambda2: float


class MaterialKind(str, Enum):
    SVK = "svk"
    NH = "nh"


@dataclass(frozen=True)
class MaterialModel:
    kind: MaterialKind
    lame: LameConstants

    @classmethod
    def from_young_poisson(cls, kind, E, nu):
        return cls(MaterialKind(str(kind).lower()), lame_from_young_poisson(E, nu))


def lame_from_young_poisson(E, nu):
    """Lamé constants from Young modulus and Poisson ratio."""
    if not E > 0:
        raise ValueError("Young modulus must be positive")
    if nu == 0.5:
        raise IncompressibleLimitError("nu = 0.5 is the incompressible limit")
    if not -1.0 < nu < 0.5:
        raise ValueError("Poisson ratio must lie in (-1, 0.5)")
    return LameConstants(E / (2.0 * (1.0 + nu)),
                         E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))


@dataclass(frozen=True, eq=False)
class DeformationState:
    """Kinematics derived from ``F``; ``admissible`` is False where ``J <= 0``."""

    F: np.ndarray
    C: np.ndarray
    E_gl: np.ndarray
    J: np.ndarray
    I1: np.ndarray

    @property
    def dim(self):
        return self.F.shape[-1]

    @property
    def admissible(self):
        return self.J > 0.0


def _eye(d):
    return np.eye(d)


def _from_F(F):
    F = np.asarray(F, dtype=float)
    d = F.shape[-1]
    C = np.swapaxes(F, -1, -2) @ F
    E_gl = 0.5 * (C - _eye(d))
    return DeformationState(F, C, E_gl, np.linalg.det(F),
                            np.trace(C, axis1=-2, axis2=-1))


def deformation_gradient(grad_u):
    """``F = grad_u + I`` with derived ``C``, Green-Lagrange strain, ``J``, ``I1``."""
    grad_u = np.asarray(grad_u, dtype=float)
    return _from_F(grad_u + _eye(grad_u.shape[-1]))


def _state(s):
    return s if isinstance(s, DeformationState) else _from_F(s)


def invariants(state):
    """Principal invariants ``(I1, I2, I3)`` of ``C = F^T F``."""
    s = _state(state)
    C2 = s.C @ s.C
    I2 = 0.5 * (s.I1**2 - np.trace(C2, axis1=-2, axis2=-1))
    return s.I1, I2, s.J**2


def _require_admissible(s):
    if np.any(s.J <= 0.0):
        bad = np.flatnonzero(np.ravel(s.J) <= 0.0)
        raise InadmissibleStateError(
            "neo-Hookean state with J <= 0", element=int(bad[0]) if bad.size else None)


def energy(model, state):
    """Strain energy density.

    For neo-Hookean the isochoric term uses ``I1 - d`` so the energy vanishes
    at ``F = I`` in 2-D as well as 3-D.
    """
    s = _state(state)
    l1, l2 = model.lame.lambda1, model.lame.lambda2
    if model.kind is MaterialKind.SVK:
        E = s.E_gl
        trE = np.trace(E, axis1=-2, axis2=-1)
        return l1 * np.sum(E * E, axis=(-2, -1)) + 0.5 * l2 * trE**2
    _require_admissible(s)
    lnJ = np.log(s.J)
    return 0.5 * l1 * (s.I1 - s.dim) - l1 * lnJ + 0.5 * l2 * lnJ**2


def piola(model, state):
    """First Piola-Kirchhoff stress ``P = dpsi/dF``."""
    s = _state(state)
    F = s.F
    d = s.dim
    l1, l2 = model.lame.lambda1, model.lame.lambda2
    if model.kind is MaterialKind.SVK:
        trE = np.trace(s.E_gl, axis1=-2, axis2=-1)
        S = 2.0 * l1 * s.E_gl + l2 * trE[..., None, None] * _eye(d)
        return F @ S
    _require_admissible(s)
    FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
    lnJ = np.log(s.J)[..., None, None]
    return l1 * (F - FinvT) + l2 * lnJ * FinvT


def tangent(model, state):
    """Material tangent ``A[..., i, j, k, l] = dP_ij / dF_kl``."""
    s = _state(state)
    F = s.F
    d = s.dim
    I = _eye(d)
    l1, l2 = model.lame.lambda1, model.lame.lambda2
    if model.kind is MaterialKind.SVK:
        trE = np.trace(s.E_gl, axis1=-2, axis2=-1)
        S = 2.0 * l1 * s.E_gl + l2 * trE[..., None, None] * I
        FFt = F @ np.swapaxes(F, -1, -2)
        return (np.einsum("ik,...lj->...ijkl", I, S)
                + l1 * np.einsum("jl,...ik->...ijkl", I, FFt)
                + l1 * np.einsum("...il,...kj->...ijkl", F, F)
                + l2 * np.einsum("...ij,...kl->...ijkl", F, F))
    _require_admissible(s)
    G = np.swapaxes(np.linalg.inv(F), -1, -2)
    lnJ = np.log(s.J)[..., None, None, None, None]
    return (l1 * np.einsum("ik,jl->ijkl", I, I)
            + (l1 - l2 * lnJ) * np.einsum("...il,...kj->...ijkl", G, G)
            + l2 * np.einsum("...ij,...kl->...ijkl", G, G))
