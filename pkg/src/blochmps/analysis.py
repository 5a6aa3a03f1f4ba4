"""Exact Ising spectrum, multiplet grouping and accuracy measures.

The transverse-field Ising ring ``H = -sum Z_i Z_{i+1} - g sum X_i`` maps to
free fermions whose boundary condition depends on the fermion parity
``prod_j X_j``.  Even parity uses half-integer mode indices ``j + 1/2``
(antiperiodic fermions), odd parity integer indices ``j`` (periodic).  In
both sectors mode ``q`` has momentum ``2 pi q / N`` and paired modes carry
``eps(theta) = 2 sqrt(1 + g^2 - 2 g cos theta)``.  The odd sector also has
the unpaired modes ``theta = 0`` and ``theta = pi``, whose signed energies are
``2(g - 1)`` and ``2(g + 1)``.  An eigenstate is a set of occupied modes with
the right fermion-number parity.  Its momentum is the sum of the occupied
mode indices mod N.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .ed import ExactSpectrum, LabeledLevel, degenerate_blocks
from .errors import ValidationError

DEGENERACY_TOL = 1e-8
MAX_FULL_ISING = 24


def ising_mode_energy(theta, g):
    return 2.0 * np.sqrt(1.0 + g * g - 2.0 * g * np.cos(theta))


@dataclass(frozen=True)
class _Sector:
    name: str
    parity: int  # eigenvalue of prod_j X_j
    indices: tuple  # mode index q (float); momentum 2 pi q / N
    energies: tuple  # energy change when the mode is occupied
    vacuum: float  # energy with every mode empty


def _sectors(g, n_sites):
    N = n_sites
    even_q = tuple(j + 0.5 for j in range(N))
    even_e = tuple(float(ising_mode_energy(2 * math.pi * q / N, g)) for q in even_q)
    vac_even = -g * N + sum(g - math.cos(2 * math.pi * q / N) - e / 2 for q, e in zip(even_q, even_e))

    odd_q, odd_e, vac_odd = [], [], -g * N
    for j in range(N):
        theta = 2 * math.pi * j / N
        if j == 0:
            e = 2.0 * (g - 1.0)
        elif 2 * j == N:
            e = 2.0 * (g + 1.0)
        else:
            e = float(ising_mode_energy(theta, g))
            vac_odd += g - math.cos(theta) - e / 2
        odd_q.append(float(j))
        odd_e.append(e)
    return (
        _Sector("even", 1, even_q, even_e, vac_even),
        _Sector("odd", -1, tuple(odd_q), tuple(odd_e), vac_odd),
    )


def _sector_states(sec: _Sector, n_sites, cutoff):
    """Occupations with the sector's fermion parity and energy ``<= cutoff``.

    Modes with negative energy are filled in the reference configuration and
    toggling any mode costs ``|e|``; a depth-first search over toggles sorted
    by cost prunes everything above the cutoff.
    """
    e = np.asarray(sec.energies)
    base_occ = e < 0
    base = sec.vacuum + float(e[base_occ].sum())
    cost = np.abs(e)
    order = np.argsort(cost, kind="stable")
    want_odd = sec.parity == -1
    out = []

    def visit(pos, energy, toggled):
        occ = base_occ.copy()
        occ[list(toggled)] ^= True
        if (int(occ.sum()) % 2 == 1) == want_odd:
            modes = tuple(sec.indices[i] for i in np.flatnonzero(occ))
            k = int(round(sum(modes))) % n_sites
            out.append((energy, k, modes))
        for nxt in range(pos, len(order)):
            m = order[nxt]
            if energy + cost[m] > cutoff:
                break
            visit(nxt + 1, energy + cost[m], toggled + (m,))

    if base <= cutoff:
        visit(0, base, ())
    return out


def _sector_minimum(sec: _Sector):
    e = np.asarray(sec.energies)
    base = sec.vacuum + float(e[e < 0].sum())
    if (int(np.count_nonzero(e < 0)) % 2 == 1) == (sec.parity == -1):
        return base
    return base + float(np.min(np.abs(e)))


def ising_exact_spectrum(g, n_sites, window=None, tol=DEGENERACY_TOL) -> ExactSpectrum:
    """Free-fermion spectrum of the periodic transverse-field Ising ring.

    ``window`` is ``None`` (all ``2^N`` levels), a float (levels within that
    energy of the ground state) or an int (the lowest that many levels).
    """
    if n_sites < 2 or n_sites % 2:
        raise ValidationError("the Ising oracle needs an even number of sites", "n_sites")
    g = float(g)
    sectors = _sectors(g, n_sites)
    if window is None and n_sites > MAX_FULL_ISING:
        raise ValidationError(f"full spectrum limited to N <= {MAX_FULL_ISING}; pass a window", "window")

    def collect(cutoff):
        states = []
        for sec in sectors:
            states.extend((e, k, modes, sec) for e, k, modes in _sector_states(sec, n_sites, cutoff))
        return states

    if window is None:
        states = collect(math.inf)
    else:
        e0 = min(_sector_minimum(sec) for sec in sectors)
        if isinstance(window, (int, np.integer)) and not isinstance(window, bool):
            if window < 1:
                raise ValidationError("level count must be positive", "window")
            span = 1.0
            while True:
                states = collect(e0 + span + 1e-12)
                if len(states) >= window or len(states) == 2**n_sites:
                    break
                span *= 2
        else:
            states = collect(e0 + float(window) + 1e-12)

    states.sort(key=lambda s: (s[0], s[1]))
    if isinstance(window, (int, np.integer)) and not isinstance(window, bool):
        states = states[:window]

    energies = np.array([s[0] for s in states])
    momenta = np.array([s[1] for s in states])
    degen = np.ones(len(states), dtype=int)
    for k in set(momenta.tolist()):
        idx = np.flatnonzero(momenta == k)
        for blk in degenerate_blocks(energies[idx], tol):
            degen[idx[list(blk)]] = len(blk)
    levels = [
        LabeledLevel(float(e), int(k), sec.parity, int(degen[i]), modes, sec.name)
        for i, (e, k, modes, sec) in enumerate(states)
    ]
    return ExactSpectrum({"name": "ising", "params": {"g": g}, "method": "free-fermion"}, n_sites, levels)


# --------------------------------------------------------------------------
# multiplets


MULTIPLET_NAMES = {1: "singlet", 3: "triplet", 5: "quintuplet", 7: "septuplet"}


@dataclass
class Multiplet:
    k: int
    energy: float
    size: int
    members: list  # level indices (ExactSpectrum) or branch indices (dispersion)

    @property
    def name(self):
        return MULTIPLET_NAMES.get(self.size, f"{self.size}-fold")


def multiplet_grouping(spec, tol=DEGENERACY_TOL):
    """Group levels at equal momentum whose consecutive energy gaps are ``<= tol``.

    Accepts an :class:`ExactSpectrum` or a dispersion result (anything with
    ``branches`` carrying ``k`` and ``energies``).  Groups come out sorted by
    energy.
    """
    if tol < 0:
        raise ValidationError("tolerance must be non-negative", "tol")
    groups = []
    if isinstance(spec, ExactSpectrum):
        by_k = {}
        for i, lv in enumerate(spec.levels):
            by_k.setdefault(lv.k, []).append(i)
        for k, idx in by_k.items():
            idx.sort(key=lambda i: spec.levels[i].energy)
            e = np.array([spec.levels[i].energy for i in idx])
            for blk in degenerate_blocks(e, tol):
                members = [idx[j] for j in blk]
                groups.append(Multiplet(k, float(e[list(blk)].mean()), len(members), members))
    else:
        for mb in spec.branches:
            e = np.asarray(mb.energies)
            for blk in degenerate_blocks(e, tol):
                groups.append(Multiplet(mb.k, float(e[list(blk)].mean()), len(blk), list(blk)))
    groups.sort(key=lambda m: (m.energy, m.k))
    return groups


# --------------------------------------------------------------------------
# accuracy measures


def _check_orthonormal(u, name, tol=1e-8):
    u = np.asarray(u)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2:
        raise ValidationError("basis must be a matrix of column vectors", name)
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[1]))) if u.shape[1] else 0.0
    if err > tol:
        raise ValidationError(f"basis is not orthonormal (error {err:.2e})", name)
    return u


def canonical_angle_distance(u, v) -> float:
    """Sine of the largest canonical angle between ``span(u)`` and ``span(v)``.

    Computed as ``||(1 - v v^†) u||_2``, which stays accurate for nearly
    coincident subspaces where ``sqrt(1 - sigma_min^2)`` loses digits.
    Subspaces of different dimension are at distance 1.
    """
    u = _check_orthonormal(u, "u")
    v = _check_orthonormal(v, "v")
    if u.shape[0] != v.shape[0]:
        raise ValidationError("subspaces live in different spaces", "v")
    if u.shape[1] != v.shape[1]:
        return 1.0
    if u.shape[1] == 0:
        return 0.0
    resid = u - v @ (v.conj().T @ u)
    return float(min(np.linalg.norm(resid, 2), 1.0))


def relative_precision(e_mps, e_exact) -> float:
    """``|e_mps - e_exact| / |e_exact|``; the absolute error when ``e_exact == 0``."""
    diff = abs(e_mps - e_exact)
    if e_exact == 0:
        warnings.warn("exact energy is zero; reporting the absolute difference", RuntimeWarning, stacklevel=2)
        return float(diff)
    return float(diff / abs(e_exact))


# --------------------------------------------------------------------------
# comparison report


def compare_spectra(result, exact: ExactSpectrum, bound_tol=1e-10, exact_vectors=None):
    """Per-momentum comparison of a dispersion result with an exact spectrum.

    The ``i``-th returned level at momentum ``k`` is paired with the ``i``-th
    exact level in the same momentum sector.  Returns a dict with the
    precision table, the lowest-branch variational-bound violations and,
    when ``exact_vectors`` (an :class:`ExactSpectrum` with eigenvectors) is
    given and the result carries coefficient vectors, the canonical-angle
    distance of each returned subspace to the matching exact one.
    """
    if result.n_sites != exact.n_sites:
        raise ValidationError(f"N differs: {result.n_sites} vs {exact.n_sites}", "n_sites")
    table, violations, angles = [], [], []
    for mb in result.branches:
        idx = exact.sector(mb.k)
        ex_e = [exact.levels[i].energy for i in idx]
        for i in range(min(len(mb), len(ex_e))):
            e, x = float(mb.energies[i]), ex_e[i]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rp = relative_precision(e, x)
            table.append({"k": mb.k, "branch": i, "energy": e, "exact": x, "relative_precision": rp})
        if len(mb) and ex_e and mb.energies[0] < ex_e[0] - bound_tol:
            violations.append({"k": mb.k, "energy": float(mb.energies[0]), "exact": ex_e[0]})
        if exact_vectors is not None and mb.vectors is not None and len(mb):
            from .excitations import branch_state_vector

            n = min(len(mb), len(idx))
            sel = exact_vectors.sector(mb.k)[:n]
            u = exact_vectors.vectors[:, sel]
            v = np.stack([branch_state_vector(result, mb.k, i) for i in range(n)], axis=1)
            q, _ = np.linalg.qr(v)
            angles.append({"k": mb.k, "dimension": n, "distance": canonical_angle_distance(u, q)})
    worst = max((row["relative_precision"] for row in table), default=0.0)
    return {"table": table, "violations": violations, "angles": angles, "max_relative_precision": worst}
