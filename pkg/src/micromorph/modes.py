"""Analytical patterning modes, their discretization, and pattern labels.

Square stacking carries one mode (the alternating-ellipse pattern); hexagonal
stacking carries three, obtained by rotating the first by -60 and +60 degrees
(field pushforward: both the argument and the vector rotate). Discretized
modes are normalized so that the solid-area average of their magnitude is 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FemTables
from .mesh import MeshT6


class ModeError(Exception):
    pass


def rotation(angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def eval_square_mode(X, l: float) -> np.ndarray:
    """Unnormalized square-stacking mode at positions X (..., 2)."""
    X = np.asarray(X, dtype=float)
    sp = np.sin(np.pi / l * (X[..., 0] + X[..., 1]))
    sm = np.sin(np.pi / l * (-X[..., 0] + X[..., 1]))
    return np.stack([-sp - sm, sp - sm], axis=-1)


def _hex_mode1(X, l: float) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.stack([
        np.sin(2.0 * np.pi * X[..., 1] / (np.sqrt(3.0) * l)),
        np.sin(2.0 * np.pi * X[..., 0] / l) / np.sqrt(3.0),
    ], axis=-1)


def eval_hex_modes(X, l: float) -> np.ndarray:
    """Unnormalized hexagonal modes at X (..., 2); returns (..., 3, 2).

    Mode k is the pushforward of mode 1 by the rotation R_k (k = 2: -60
    degrees, k = 3: +60 degrees): phi_k(X) = R_k phi_1(R_k^T X).
    """
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape[:-1] + (3, 2))
    out[..., 0, :] = _hex_mode1(X, l)
    for k, ang in ((1, -60.0), (2, 60.0)):
        R = rotation(ang)
        out[..., k, :] = np.einsum("ij,...j->...i", R, _hex_mode1(X @ R, l))
    return out


@dataclass
class PatternModeSet:
    """Discretized, normalized modes on an RVE mesh.

    nodal_values has shape (n, 2*N) in the interleaved DOF layout; c_norm
    are the per-mode normalization constants (solid-area mean magnitude of
    the unnormalized field).
    """

    n: int
    nodal_values: np.ndarray
    c_norm: np.ndarray
    solid_area: float

    @staticmethod
    def empty() -> "PatternModeSet":
        return PatternModeSet(0, np.zeros((0, 0)), np.zeros(0), 0.0)


def discretize_and_normalize(mesh: MeshT6, fields=None) -> PatternModeSet:
    """Sample analytic modes at mesh nodes and normalize by quadrature.

    `fields` is a list of callables X -> (..., 2); by default the square mode
    is used when the mesh stores a square cell and the three hexagonal modes
    otherwise cannot be guessed, so pass them explicitly via
    `square_mode_set` / `hex_mode_set` below for the standard cases.
    """
    if not fields:
        raise ModeError("no mode fields given")
    tab = FemTables(mesh.node_coords, mesh.elements)
    area = float(np.sum(tab.wdetJ))
    n = len(fields)
    N = mesh.n_nodes
    nodal = np.empty((n, 2 * N))
    c_norm = np.empty(n)
    for i, f in enumerate(fields):
        vals = np.asarray(f(mesh.node_coords), dtype=float)  # (N, 2)
        if not np.isfinite(vals).all():
            raise ModeError(f"mode {i} evaluates to non-finite values")
        comp = vals[tab.elements]  # (E, 6, 2)
        qp = np.einsum("ga,eac->egc", tab.N, comp)
        mag = np.linalg.norm(qp, axis=-1)
        c = float(np.sum(tab.wdetJ * mag)) / area
        if c <= 1e-12:
            raise ModeError(f"mode {i} is degenerate (zero magnitude)")
        vals = vals / c
        mean = np.einsum("eg,egc->c", tab.wdetJ, qp / c) / area
        if np.max(np.abs(mean)) > 1e-8:
            raise ModeError(
                f"mode {i} violates the zero-mean invariant (<phi> = {mean})")
        nodal[i] = vals.reshape(-1)
        c_norm[i] = c
    ms = PatternModeSet(n, nodal, c_norm, area)
    _check_invariants(ms, tab, area)
    return ms


def _check_invariants(ms: PatternModeSet, tab: FemTables, area: float):
    for i in range(ms.n):
        comp = ms.nodal_values[i].reshape(-1, 2)[tab.elements]
        qp = np.einsum("ga,eac->egc", tab.N, comp)
        mag = float(np.sum(tab.wdetJ * np.linalg.norm(qp, axis=-1))) / area
        if abs(mag - 1.0) > 1e-3:
            raise ModeError(f"mode {i} mean magnitude {mag} != 1")
    if ms.n >= 2:
        M = tab.gramian()
        cols = ms.nodal_values
        G = cols @ (M @ cols.T)
        d = np.sqrt(np.diag(G))
        C = G / np.outer(d, d)
        off = np.abs(C - np.diag(np.diag(C)))
        if np.max(off) > 0.05:
            raise ModeError(f"modes are not near-orthogonal (max {np.max(off):.3f})")


def square_mode_set(mesh: MeshT6, l: float) -> PatternModeSet:
    return discretize_and_normalize(mesh, [lambda X: eval_square_mode(X, l)])


def hex_mode_set(mesh: MeshT6, l: float) -> PatternModeSet:
    fields = [lambda X, k=k: eval_hex_modes(X, l)[..., k, :] for k in range(3)]
    return discretize_and_normalize(mesh, fields)


def pattern_from_modes(vhat) -> str:
    """Classify normalized mode magnitudes (max = 1) into pattern labels.

    Returns "I", "II", "III", "mixed", or "none" (nothing activated); the
    activation threshold is 0.05 and 'equal' means within 5% of each other.
    """
    v = np.abs(np.asarray(vhat, dtype=float))
    if v.size == 1:
        return "I" if v[0] > 0.05 else "none"
    if v.size != 3:
        raise ValueError("expected 1 or 3 mode magnitudes")
    theta = 0.05
    v1, v2, v3 = v
    big = v > theta
    close = lambda a, b: abs(a - b) <= 0.05 * max(a, b, 1e-30)
    if not big.any():
        return "none"
    if big[0] and not big[1] and not big[2]:
        return "I"
    if not big[0] and big[1] and big[2] and close(v2, v3):
        return "II"
    if big.all() and close(v1, v2) and close(v2, v3) and close(v1, v3):
        return "III"
    return "mixed"
