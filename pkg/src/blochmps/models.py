"""Nearest-neighbour spin-1/2 chain models.

A model is a two-site term ``h01`` acting on sites ``(0, 1)``; the full
periodic Hamiltonian is ``sum_l T^l h01 T^-l``, optionally plus a global
product operator ``strength * prod_j op_j``.  Basis ordering of ``h01`` is
``|i_left i_right>`` with the left site slowest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .linalg import asymmetry

ID2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": ID2, "X": SX, "Y": SY, "Z": SZ}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    h01: np.ndarray
    d: int = 2
    perturbation: tuple | None = None  # (single-site operator, strength)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        h = np.asarray(self.h01, dtype=complex)
        if h.shape != (self.d**2, self.d**2):
            raise ValidationError(f"h01 must be {self.d**2}x{self.d**2}, got {h.shape}", "h01")
        if asymmetry(h) > 1e-12:
            raise ValidationError("h01 is not Hermitian", "h01")
        h.setflags(write=False)
        object.__setattr__(self, "h01", h)
        if self.perturbation is not None:
            op, lam = self.perturbation
            op = np.asarray(op, dtype=complex)
            if op.shape != (self.d, self.d):
                raise ValidationError(f"perturbation operator must be {self.d}x{self.d}", "perturbation")
            op.setflags(write=False)
            object.__setattr__(self, "perturbation", (op, float(lam)))

    @property
    def product_op(self):
        return None if self.perturbation is None else self.perturbation[0]

    @property
    def product_strength(self):
        return 0.0 if self.perturbation is None else self.perturbation[1]

    def describe(self) -> dict:
        return {"name": self.name, "params": dict(sorted(self.params.items()))}

    def key(self) -> str:
        """Stable hash of the model contents (two-site term, perturbation, params)."""
        sha = hashlib.sha256()
        sha.update(json.dumps(self.describe(), sort_keys=True).encode())
        sha.update(np.ascontiguousarray(self.h01).tobytes())
        if self.perturbation is not None:
            sha.update(np.ascontiguousarray(self.perturbation[0]).tobytes())
            sha.update(repr(self.perturbation[1]).encode())
        return sha.hexdigest()[:16]

    def with_perturbation(self, op, strength, **params):
        merged = dict(self.params, **params)
        return ModelSpec(self.name, self.h01, self.d, (op, strength), merged)


def ising_model(g: float, symmetric_field=False) -> ModelSpec:
    """``H = -sum Z_i Z_{i+1} - g sum X_i``.

    By default the whole field sits on the left site of ``h01`` so every site
    is counted once in the translation sum; ``symmetric_field`` splits it
    evenly between the two sites instead (same total Hamiltonian).
    """
    g = float(g)
    if symmetric_field:
        h = -np.kron(SZ, SZ) - 0.5 * g * (np.kron(SX, ID2) + np.kron(ID2, SX))
    else:
        h = -np.kron(SZ, SZ) - g * np.kron(SX, ID2)
    return ModelSpec("ising", h, params={"g": g})


def ising_model_xbasis(g: float) -> ModelSpec:
    """``H' = -sum X_i X_{i+1} - g sum Z_i``, the Hadamard-rotated Ising chain."""
    g = float(g)
    return ModelSpec("ising_x", -np.kron(SX, SX) - g * np.kron(SZ, ID2), params={"g": g})


def heisenberg_model() -> ModelSpec:
    h = 0.25 * (np.kron(SX, SX) + np.kron(SY, SY) + np.kron(SZ, SZ))
    return ModelSpec("heisenberg", h)


def heisenberg_transformed(lam: float = 0.0, sign: int = 1) -> ModelSpec:
    """Heisenberg chain after ``sigma^y`` on every odd site, plus ``sign*lam*P_y``.

    ``h01 = (-XX + YY - ZZ)/4``.  With ``lam != 0`` the parity operator
    ``P_y = prod_j Y_j`` is added with strength ``sign * lam``, giving the
    ``H'`` +/- ``lam P_y`` pair used to separate parity sectors.  Only
    meaningful on chains with an even number of sites.
    """
    if sign not in (1, -1):
        raise ValidationError("sign must be +1 or -1", "sign")
    h = 0.25 * (-np.kron(SX, SX) + np.kron(SY, SY) - np.kron(SZ, SZ))
    lam = float(lam)
    if lam == 0.0:
        return ModelSpec("heisenberg_t", h, params={"lam": 0.0, "sign": sign})
    return ModelSpec("heisenberg_t", h, perturbation=(SY, sign * lam), params={"lam": lam, "sign": sign})


def default_splitting(n_sites: int) -> float:
    return 0.1 * n_sites


def build_model(name: str, **params) -> ModelSpec:
    """Model factory used by the CLI and config files."""
    if name == "ising":
        return ising_model(params.get("g", 1.0), params.get("symmetric_field", False))
    if name == "ising_x":
        return ising_model_xbasis(params.get("g", 1.0))
    if name == "heisenberg":
        return heisenberg_model()
    if name == "heisenberg_t":
        return heisenberg_transformed(params.get("lam", 0.0), params.get("sign", 1))
    raise ValidationError(f"unknown model {name!r}", "model")


def operator_schmidt(h01: np.ndarray, d: int = 2, tol=1e-14):
    """Split a two-site operator into ``sum_r left_r (x) right_r``.

    Returns a list of ``(left, right)`` pairs of ``d x d`` matrices.
    """
    h = np.asarray(h01).reshape(d, d, d, d)  # (i1, i2, j1, j2)
    mat = h.transpose(0, 2, 1, 3).reshape(d * d, d * d)  # (i1 j1), (i2 j2)
    u, s, vh = np.linalg.svd(mat)
    terms = []
    for r in range(len(s)):
        if s[r] <= tol * max(s[0], 1.0):
            break
        left = (u[:, r] * np.sqrt(s[r])).reshape(d, d)
        right = (vh[r, :] * np.sqrt(s[r])).reshape(d, d)
        terms.append((left, right))
    return terms
