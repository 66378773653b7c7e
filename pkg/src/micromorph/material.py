"""Hyperelastic constitutive law in 2D plane strain.

Energy density

    psi(F) = c1*(I1 - 3) + c2*(I1 - 3)**2 - 2*c1*log(J) + 0.5*K*(J - 1)**2

with F the in-plane 2x2 deformation gradient, J = det(F) and
I1 = tr(C) = F:F + 1 (the out-of-plane stretch is 1 and contributes +1).

Convention used throughout the package: P = d(psi)/dF and D = dP/dF, i.e.
delta(psi) = P_ij dF_ij with the plain double contraction. Second-order
tensors are also handled in a flattened 4-column form ordered
[F11, F12, F21, F22]; the tangent is then a 4x4 matrix.

All functions accept arbitrary leading batch dimensions on F.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InadmissibleStateError(Exception):
    """Raised when det(F) <= 0 somewhere; callers should cut the step."""


@dataclass(frozen=True)
class HyperelasticParams:
    """Constitutive constants (MPa). bulk_k is the volumetric modulus."""

    c1: float
    c2: float
    bulk_k: float

    def __post_init__(self):
        errs = self.validate()
        if errs:
            raise ValueError("; ".join(errs))

    def validate(self) -> list[str]:
        errs = []
        if not self.c1 > 0.0:
            errs.append("material.c1 must be > 0")
        if self.c2 < 0.0:
            errs.append("material.c2 must be >= 0")
        if not self.bulk_k > 0.0:
            errs.append("material.bulk_k must be > 0")
        if self.bulk_k < 10.0 * self.c1:
            errs.append("material.bulk_k must be >= 10*c1 (near-incompressible regime)")
        return errs


def det2(F: np.ndarray) -> np.ndarray:
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def _invariants(F: np.ndarray):
    J = det2(F)
    I1 = np.einsum("...ij,...ij->...", F, F) + 1.0
    return J, I1


def _check_J(J: np.ndarray):
    if np.any(J <= 0.0):
        raise InadmissibleStateError(f"det(F) <= 0 (min {np.min(J):g})")


def energy_density(F: np.ndarray, p: HyperelasticParams) -> np.ndarray:
    """Strain-energy density [MPa] for a batch of 2x2 deformation gradients."""
    F = np.asarray(F, dtype=float)
    J, I1 = _invariants(F)
    _check_J(J)
    e = I1 - 3.0
    return p.c1 * e + p.c2 * e * e - 2.0 * p.c1 * np.log(J) + 0.5 * p.bulk_k * (J - 1.0) ** 2


def pk1_stress(F: np.ndarray, p: HyperelasticParams) -> np.ndarray:
    """First Piola-Kirchhoff stress P = d(psi)/dF, shape (..., 2, 2) [MPa]."""
    F = np.asarray(F, dtype=float)
    J, I1 = _invariants(F)
    _check_J(J)
    # J * F^{-T} is polynomial in F, no division needed
    JFinvT = np.empty_like(F)
    JFinvT[..., 0, 0] = F[..., 1, 1]
    JFinvT[..., 0, 1] = -F[..., 1, 0]
    JFinvT[..., 1, 0] = -F[..., 0, 1]
    JFinvT[..., 1, 1] = F[..., 0, 0]
    a = 2.0 * p.c1 + 4.0 * p.c2 * (I1 - 3.0)
    b = (p.bulk_k * (J - 1.0) - 2.0 * p.c1 / J)[..., None, None]
    return a[..., None, None] * F + b * JFinvT


def material_tangent(F: np.ndarray, p: HyperelasticParams) -> np.ndarray:
    """Tangent D = dP/dF as a (..., 2, 2, 2, 2) tensor [MPa].

    D_ijkl = a d_ik d_jl + 8 c2 F_ij F_kl + c3 G_ij G_kl - c4 G_il G_kj
    with G = F^{-T}, a = 2 c1 + 4 c2 (I1-3), c3 = K J (2J-1),
    c4 = K J (J-1) - 2 c1. Has major symmetry D_ijkl = D_klij.
    """
    F = np.asarray(F, dtype=float)
    J, I1 = _invariants(F)
    _check_J(J)
    G = np.empty_like(F)
    G[..., 0, 0] = F[..., 1, 1]
    G[..., 0, 1] = -F[..., 1, 0]
    G[..., 1, 0] = -F[..., 0, 1]
    G[..., 1, 1] = F[..., 0, 0]
    G = G / J[..., None, None]
    a = 2.0 * p.c1 + 4.0 * p.c2 * (I1 - 3.0)
    c3 = p.bulk_k * J * (2.0 * J - 1.0)
    c4 = p.bulk_k * J * (J - 1.0) - 2.0 * p.c1

    eye = np.eye(2)
    D = np.einsum("...,ik,jl->...ijkl", a, eye, eye)
    D = D + 8.0 * p.c2 * np.einsum("...ij,...kl->...ijkl", F, F)
    D = D + np.einsum("...,...ij,...kl->...ijkl", c3, G, G)
    D = D - np.einsum("...,...il,...kj->...ijkl", c4, G, G)
    return D


def tangent_matrix(F: np.ndarray, p: HyperelasticParams) -> np.ndarray:
    """Tangent as a (..., 4, 4) matrix in the [11, 12, 21, 22] ordering."""
    D = material_tangent(F, p)
    shape = D.shape[:-4]
    return D.reshape(shape + (4, 4))
