"""Exact diagonalization of small periodic chains.

Operators are built as scipy sparse matrices in the computational basis
(site 0 = most significant digit).  The spectrum is obtained block by block
in momentum sectors, so every eigenvector is an exact eigenvector of ``T``;
degenerate blocks are additionally rotated into eigenvectors of a conserved
product operator (the ``Y``-parity) when one is supplied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .models import SY, ModelSpec

MAX_ED_SITES = 16


def _check_sites(d, n_sites, limit=MAX_ED_SITES):
    if n_sites < 2:
        raise ValidationError("need at least two sites", "n_sites")
    if d**n_sites > 2**limit:
        raise ValidationError(f"d**N = {d**n_sites} exceeds the ED limit 2**{limit}", "n_sites")


@lru_cache(maxsize=32)
def translation_map(n_sites, d=2) -> np.ndarray:
    """``perm[s]`` is the basis index of ``T|s>``."""
    s = np.arange(d**n_sites)
    return s // d + (s % d) * d ** (n_sites - 1)


def translation_operator(n_sites, d=2) -> sp.csr_matrix:
    dim = d**n_sites
    perm = translation_map(n_sites, d)
    return sp.csr_matrix((np.ones(dim), (perm, np.arange(dim))), shape=(dim, dim))


def two_site_operator(h, n_sites, p, q, d=2) -> sp.csr_matrix:
    """``h`` acting on sites ``(p, q)`` with ``p`` the left factor of ``h``."""
    if p == q:
        raise ValidationError("sites must differ", "q")
    h = np.asarray(h).reshape(d, d, d, d)  # out_p, out_q, in_p, in_q
    dim = d**n_sites
    s = np.arange(dim)
    wp, wq = d ** (n_sites - 1 - p), d ** (n_sites - 1 - q)
    ip, iq = (s // wp) % d, (s // wq) % d
    rest = s - ip * wp - iq * wq
    rows, cols, vals = [], [], []
    for op_ in range(d):
        for oq in range(d):
            amp = h[op_, oq, ip, iq]
            nz = amp != 0
            rows.append(rest[nz] + op_ * wp + oq * wq)
            cols.append(s[nz])
            vals.append(amp[nz])
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


def product_operator(o, n_sites) -> sp.csr_matrix:
    """``prod_j o_j`` on every site."""
    o = sp.csr_matrix(np.asarray(o, dtype=complex))
    out = o
    for _ in range(n_sites - 1):
        out = sp.kron(out, o, format="csr")
    return out


def site_product_operator(o, n_sites, sites) -> sp.csr_matrix:
    """``prod_{j in sites} o_j`` with identity elsewhere."""
    d = np.asarray(o).shape[0]
    sites = set(sites)
    out = sp.identity(1, dtype=complex, format="csr")
    for j in range(n_sites):
        f = sp.csr_matrix(np.asarray(o, dtype=complex)) if j in sites else sp.identity(d, dtype=complex)
        out = sp.kron(out, f, format="csr")
    return out


def parity_operator(n_sites) -> sp.csr_matrix:
    """``P_y = prod_j sigma^y_j``."""
    return product_operator(SY, n_sites)


def odd_site_rotation(n_sites) -> sp.csr_matrix:
    """``U = prod_{j odd} sigma^y_j`` (1-based odd sites, i.e. 0, 2, 4, ...)."""
    return site_product_operator(SY, n_sites, range(0, n_sites, 2))


def hamiltonian(model: ModelSpec, n_sites) -> sp.csr_matrix:
    """``sum_l T^l h01 T^-l`` (+ the product perturbation) as a sparse matrix."""
    _check_sites(model.d, n_sites)
    dim = model.d**n_sites
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for l in range(n_sites):
        h = h + two_site_operator(model.h01, n_sites, l, (l + 1) % n_sites, model.d)
    if model.perturbation is not None:
        h = h + model.product_strength * product_operator(model.product_op, n_sites)
    return h.tocsr()


# --------------------------------------------------------------------------
# momentum sectors


@lru_cache(maxsize=32)
def _orbits(n_sites, d):
    perm = translation_map(n_sites, d)
    dim = d**n_sites
    orbit = np.empty((n_sites, dim), dtype=np.int64)
    orbit[0] = np.arange(dim)
    for l in range(1, n_sites):
        orbit[l] = perm[orbit[l - 1]]
    rep = orbit.min(axis=0)
    back = orbit == orbit[0]
    back[0] = False
    period = np.where(back.any(axis=0), back.argmax(axis=0), n_sites)
    return orbit, rep, period


def momentum_basis(n_sites, k, d=2) -> sp.csc_matrix:
    """Orthonormal basis of the sector ``T = exp(-2 pi i k / N)`` as sparse columns."""
    orbit, rep, period = _orbits(n_sites, d)
    reps = np.flatnonzero((rep == np.arange(d**n_sites)) & ((k * period) % n_sites == 0))
    rows, cols, vals = [], [], []
    for c, r in enumerate(reps):
        R = period[r]
        ls = np.arange(R)
        rows.append(orbit[ls, r])
        cols.append(np.full(R, c))
        vals.append(np.exp(2j * np.pi * k * ls / n_sites) / np.sqrt(R))
    if not reps.size:
        return sp.csc_matrix((d**n_sites, 0), dtype=complex)
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    return sp.csc_matrix((vals, (rows, cols)), shape=(d**n_sites, len(reps)))


# --------------------------------------------------------------------------
# labeled spectra


@dataclass
class LabeledLevel:
    energy: float
    k: int
    parity: int = 0  # +1 / -1, 0 when not defined
    degeneracy: int = 1
    modes: tuple | None = None
    sector: str | None = None


@dataclass
class ExactSpectrum:
    model: dict
    n_sites: int
    levels: list
    vectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def energies(self):
        return np.array([lv.energy for lv in self.levels])

    @property
    def momenta(self):
        return np.array([lv.k for lv in self.levels], dtype=int)

    @property
    def parities(self):
        return np.array([lv.parity for lv in self.levels], dtype=int)

    def sector(self, k, parity=None):
        """Indices of the levels at momentum ``k`` (and parity), ascending in energy."""
        idx = [i for i, lv in enumerate(self.levels) if lv.k == k and (parity is None or lv.parity == parity)]
        return sorted(idx, key=lambda i: self.levels[i].energy)

    def sector_minimum(self, k):
        return min(self.levels[i].energy for i in self.sector(k))

    def truncate(self, max_levels=None, cutoff=None):
        """Keep the lowest ``max_levels`` and/or levels within ``cutoff`` of the ground energy."""
        keep = list(range(len(self.levels)))
        if cutoff is not None and self.levels:
            e0 = self.levels[0].energy
            keep = [i for i in keep if self.levels[i].energy <= e0 + cutoff]
        if max_levels is not None:
            keep = keep[:max_levels]
        vectors = None if self.vectors is None else self.vectors[:, keep]
        return ExactSpectrum(self.model, self.n_sites, [self.levels[i] for i in keep], vectors)


def degenerate_blocks(values, tol):
    """Split a sorted array into runs whose consecutive gaps are ``<= tol``."""
    blocks, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > tol:
            blocks.append(range(start, i))
            start = i
    return blocks


def ed_spectrum(model: ModelSpec, n_sites, keep_vectors=False, parity_op="auto", tol=1e-8) -> ExactSpectrum:
    """Full spectrum labeled by momentum, parity and (per-sector) degeneracy.

    ``parity_op`` is a ``d x d`` operator whose product over all sites is
    used as the parity label; ``"auto"`` uses ``sigma^y`` when it commutes
    with the Hamiltonian and ``None`` disables labeling.
    """
    d = model.d
    _check_sites(d, n_sites)
    h = hamiltonian(model, n_sites)
    par = None
    if parity_op is not None:
        op = SY if isinstance(parity_op, str) else parity_op
        cand = product_operator(op, n_sites)
        comm = h @ cand - cand @ h
        scale = max(abs(h).max(), 1.0)
        if comm.nnz == 0 or abs(comm).max() <= 1e-10 * scale:
            par = cand
        elif not isinstance(parity_op, str):
            raise ValidationError("parity operator does not commute with the Hamiltonian", "parity_op")

    energies, momenta, parities, degens, vecs = [], [], [], [], []
    for k in range(n_sites):
        basis = momentum_basis(n_sites, k, d)
        if basis.shape[1] == 0:
            continue
        hk = (basis.conj().T @ (h @ basis)).toarray()
        w, u = np.linalg.eigh(0.5 * (hk + hk.conj().T))
        full = basis @ u
        plabel = np.zeros(len(w), dtype=int)
        for blk in degenerate_blocks(w, tol):
            sl = slice(blk.start, blk.stop)
            if par is not None:
                x = full[:, sl]
                pb = x.conj().T @ (par @ x)
                pw, pu = np.linalg.eigh(0.5 * (pb + pb.conj().T))
                full[:, sl] = x @ pu
                plabel[sl] = np.where(pw > 0, 1, -1)
            degens.extend([len(blk)] * len(blk))
        energies.append(w)
        momenta.append(np.full(len(w), k))
        parities.append(plabel)
        if keep_vectors:
            vecs.append(full)

    energies = np.concatenate(energies)
    order = np.argsort(energies, kind="stable")
    momenta = np.concatenate(momenta)[order]
    parities = np.concatenate(parities)[order]
    degens = np.asarray(degens)[order]
    levels = [
        LabeledLevel(float(energies[i]), int(momenta[j]), int(parities[j]), int(degens[j]))
        for j, i in enumerate(order)
    ]
    vectors = np.hstack(vecs)[:, order] if keep_vectors else None
    return ExactSpectrum(model.describe(), n_sites, levels, vectors)


def momentum_of_state(v, n_sites, d=2):
    """Snap ``<v|T|v>`` to the nearest ``exp(-2 pi i k / N)``; returns ``(k, residual)``."""
    v = np.asarray(v)
    v = v / np.linalg.norm(v)
    z = np.vdot(v, v[np.argsort(translation_map(n_sites, d))])
    k = int(round(-np.angle(z) * n_sites / (2 * np.pi))) % n_sites
    return k, float(abs(z - np.exp(-2j * np.pi * k / n_sites)))


def parity_of_state(v, n_sites):
    """Snap ``<v|P_y|v>`` to +/-1; returns ``(parity, residual)``."""
    v = np.asarray(v)
    v = v / np.linalg.norm(v)
    z = np.vdot(v, parity_operator(n_sites) @ v)
    p = 1 if z.real >= 0 else -1
    return p, float(abs(z - p))


def total_spin_squared(n_sites) -> sp.csr_matrix:
    """``S_tot^2`` for spin-1/2 sites (eigenvalues ``S(S+1)``)."""
    from .models import SX, SZ

    dim = 2**n_sites
    s2 = sp.identity(dim, dtype=complex, format="csr") * (0.75 * n_sites)
    heis = 0.25 * (np.kron(SX, SX) + np.kron(SY, SY) + np.kron(SZ, SZ))
    for p in range(n_sites):
        for q in range(p + 1, n_sites):
            s2 = s2 + 2 * two_site_operator(heis, n_sites, p, q)
    return s2.tocsr()


def spin_multiplets(spectrum: ExactSpectrum, k, spin, n_sites=None, tol=1e-8):
    """Energy-ordered eigenbases of the spin-``spin`` multiplets at momentum ``k``.

    Needs retained eigenvectors.  Accidentally degenerate levels are split
    by diagonalizing ``S_tot^2`` inside each degenerate block.
    """
    if spectrum.vectors is None:
        raise ValidationError("spectrum was computed without eigenvectors", "spectrum")
    n_sites = n_sites or spectrum.n_sites
    s2 = total_spin_squared(n_sites)
    idx = spectrum.sector(k)
    e = np.array([spectrum.levels[i].energy for i in idx])
    target = spin * (spin + 1)
    out = []
    for blk in degenerate_blocks(e, tol):
        x = spectrum.vectors[:, [idx[j] for j in blk]]
        w, u = np.linalg.eigh(x.conj().T @ (s2 @ x))
        sel = np.abs(w - target) < 1e-6
        if np.any(sel):
            out.append((float(e[list(blk)].mean()), x @ u[:, sel]))
    return out
