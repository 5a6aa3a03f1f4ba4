"""Translation-invariant MPS machinery.

Conventions
-----------
* A site tensor is a complex array of shape ``(d, D, D)`` indexed
  ``[i, alpha, beta]`` (physical, left bond, right bond).  Its vectorization
  is the C-order flattening, i.e. flat index ``i*D**2 + alpha*D + beta``.
* State vectors have length ``d**N`` with site 0 the slowest index.
* ``T`` shifts a state one site to the right:
  ``T|i_1 i_2 ... i_N> = |i_N i_1 ... i_{N-1}>``, so a Bloch state built with
  momentum ``k`` has ``T``-eigenvalue ``exp(-2j*pi*k/N)``.
* Transfer matrices are ``D^2 x D^2`` with the ket bond index slowest:
  ``E_O[(a, a'), (b, b')] = sum_{i, i'} O[i', i] A[i, a, b] conj(A[i', a', b'])``.

Network matrices
----------------
The quadratic forms that build the effective matrices are all of the shape
``vec(B)^† M vec(B)`` where the ket carries ``B`` at site 0, the bra carries
``B`` at site ``m`` and every other tensor is ``A``:

* norm:    ``<phi(B)| T^-m |phi(B)>``
* ham:     ``<phi(B)| T^-m h_{n,n+1} |phi(B)>``
* parity:  ``<phi(B)| T^-m prod_j o_j |phi(B)>``

Row index of ``M`` is the conjugated (bra) copy of ``B``, column index the
ket copy.  Each network is contracted exactly from precomputed powers of the
transfer matrix at ``O(d^2 D^6)`` per network.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .models import ModelSpec, operator_schmidt

MAX_DENSE_DIM = 2**16
CHUNK_BYTES = 2**20  # small chunks stay cache resident; larger ones turn copy-bound
LAYOUT_VERSION = 1


# --------------------------------------------------------------------------
# site tensors and transfer matrices


def check_tensor(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 3 or a.shape[1] != a.shape[2] or min(a.shape) < 1:
        raise ValidationError(f"site tensor must have shape (d, D, D), got {a.shape}", "tensor")
    if not np.all(np.isfinite(a)):
        raise ValidationError("site tensor has non-finite entries", "tensor")
    return a.astype(complex, copy=False)


def vec(a) -> np.ndarray:
    return check_tensor(a).reshape(-1)


def unvec(v, d, D) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape(d, D, D)


def random_tensor(d, D, rng=None, real=False, symmetric=False) -> np.ndarray:
    rng = np.random.default_rng(rng)
    a = rng.standard_normal((d, D, D))
    if not real:
        a = a + 1j * rng.standard_normal((d, D, D))
    if symmetric:
        a = 0.5 * (a + a.transpose(0, 2, 1))
    return a.astype(complex)


def transfer_matrix(a, op=None) -> np.ndarray:
    """``E = sum_i A_i (x) conj(A_i)``, or ``E_O`` with ``op`` inserted."""
    a = check_tensor(a)
    d, D = a.shape[0], a.shape[1]
    if op is None:
        ket = a
    else:
        op = np.asarray(op)
        if op.shape != (d, d):
            raise ValidationError(f"operator must be {d}x{d}, got {op.shape}", "op")
        ket = np.tensordot(op, a, axes=(1, 0))  # [i', a, b]
    e = np.einsum("iab,icd->acbd", ket, a.conj())
    return e.reshape(D * D, D * D)


def dominant_eigenvalue(e) -> complex:
    w = np.linalg.eigvals(e)
    return w[np.argmax(np.abs(w))]


def normalize_tensor(a) -> np.ndarray:
    """Rescale ``a`` so the dominant transfer eigenvalue has modulus one."""
    a = check_tensor(a)
    lam = abs(dominant_eigenvalue(transfer_matrix(a)))
    if lam == 0.0:
        raise ValidationError("transfer matrix is nilpotent; cannot normalize", "tensor")
    return a / math.sqrt(lam)


def transfer_powers(e, pmax) -> np.ndarray:
    """Stack ``[E^0, E^1, ..., E^pmax]``."""
    e = np.asarray(e)
    out = np.empty((pmax + 1,) + e.shape, dtype=np.result_type(e, complex))
    out[0] = np.eye(e.shape[0])
    for p in range(1, pmax + 1):
        out[p] = out[p - 1] @ e
    return out


def transfer_power_approx(e, p, rank, cond_limit=1e10):
    """``E^p`` from the ``rank`` largest-magnitude eigenpairs of ``E``.

    Returns ``(matrix, exact_fallback)``.  When the eigenvector matrix is too
    ill-conditioned to trust (near-defective ``E``) the exact power is
    returned instead and ``exact_fallback`` is True.
    """
    e = np.asarray(e, dtype=complex)
    dim = e.shape[0]
    if not 1 <= rank <= dim:
        raise ValidationError(f"rank must lie in [1, {dim}]", "rank")
    if p < 0:
        raise ValidationError("power must be non-negative", "p")
    if p == 0:
        return np.eye(dim, dtype=complex), False
    w, v = np.linalg.eig(e)
    if np.linalg.cond(v) > cond_limit:
        warnings.warn("transfer matrix is close to defective; using the exact power", RuntimeWarning)
        return np.linalg.matrix_power(e, p), True
    order = np.argsort(-np.abs(w), kind="stable")
    w, v = w[order], v[:, order]
    vinv = np.linalg.inv(v)
    approx = (v[:, :rank] * w[:rank] ** p) @ vinv[:rank, :]
    return approx, False


# --------------------------------------------------------------------------
# dense state vectors (verification only)


def _check_dense(d, n_sites):
    if n_sites < 1:
        raise ValidationError("need at least one site", "n_sites")
    if d**n_sites > MAX_DENSE_DIM:
        raise ValidationError(f"d**N = {d**n_sites} exceeds the dense limit {MAX_DENSE_DIM}", "n_sites")


def mps_state_vector(tensors) -> np.ndarray:
    """Coefficients ``Tr(M1_{i1} M2_{i2} ... MN_{iN})`` for a ring of site tensors."""
    tensors = [check_tensor(t) for t in tensors]
    d, D = tensors[0].shape[0], tensors[0].shape[1]
    _check_dense(d, len(tensors))
    psi = tensors[0]  # (d^k, D, D)
    for t in tensors[1:]:
        psi = np.einsum("xab,ibc->xiac", psi, t).reshape(-1, D, D)
    return np.einsum("xaa->x", psi)


def ti_mps_state_vector(a, n_sites) -> np.ndarray:
    return mps_state_vector([a] * n_sites)


def impurity_state_vector(a, b, n_sites) -> np.ndarray:
    """``|phi_A(B)>``: tensor ``b`` on site 0 and ``a`` everywhere else."""
    return mps_state_vector([b] + [a] * (n_sites - 1))


def translate(v, n_sites, d=2, shift=1) -> np.ndarray:
    """Apply ``T^shift`` to a dense state vector."""
    shift %= n_sites
    if shift == 0:
        return np.array(v, copy=True)
    psi = np.asarray(v).reshape((d,) * n_sites)
    perm = [(j - shift) % n_sites for j in range(n_sites)]
    return np.transpose(psi, perm).reshape(-1)


def bloch_state_vector(a, b, k, n_sites) -> np.ndarray:
    """``(1/sqrt N) sum_n exp(2 pi i k n / N) T^n |phi_A(B)>``."""
    if not 0 <= k < n_sites:
        raise ValidationError(f"momentum index must lie in [0, {n_sites})", "k")
    a = check_tensor(a)
    d = a.shape[0]
    phi = impurity_state_vector(a, b, n_sites)
    out = np.zeros_like(phi)
    for n in range(n_sites):
        out += np.exp(2j * np.pi * k * n / n_sites) * translate(phi, n_sites, d, n)
    return out / math.sqrt(n_sites)


# --------------------------------------------------------------------------
# batched exact contraction of the open networks


def _dress_ket_open(a, op):
    """Site with open ket slot: bra is ``conj(A)`` seen through ``op``. -> [j, a', b']"""
    return np.tensordot(op.T, a.conj(), axes=(1, 0))


def _dress_bra_open(a, op):
    """Site with open bra slot: ket is ``op A``. -> [i', a, b]"""
    return np.tensordot(op, a, axes=(1, 0))


def _contract_apart(p1, p2, w0, wm):
    """Networks with the ket slot at site 0 and the bra slot at site m > 0.

    p1: products over sites 1..m-1, p2: over m+1..N-1, both (B, D^2, D^2).
    w0: (B, d, D, D) open-ket site, wm: (B, d, D, D) open-bra site.
    """
    nb, d, D = w0.shape[0], w0.shape[1], w0.shape[2]
    # U[am1, am1', a0 | j, a1'] = sum_a0' P2[am1, am1', a0, a0'] w0[j, a0', a1']
    u = p2.reshape(nb, D**3, D) @ w0.transpose(0, 2, 1, 3).reshape(nb, D, d * D)
    # T[a1, a1', am' | i', am1] = sum_am P1[a1, a1', am, am'] wm[i', am, am1]
    p1t = p1.reshape(nb, D, D, D, D).transpose(0, 1, 2, 4, 3).reshape(nb, D**3, D)
    t = p1t @ wm.transpose(0, 2, 1, 3).reshape(nb, D, d * D)
    # contract over am1 and a1'
    t = t.reshape(nb, D, D, D, d, D).transpose(0, 4, 3, 1, 2, 5).reshape(nb, d * D * D, D * D)
    u = u.reshape(nb, D, D, D, d, D).transpose(0, 5, 1, 2, 4, 3).reshape(nb, D * D, D * d * D)
    m = (t @ u).reshape(nb, d, D, D, D, d, D)  # [i', am', a1, am1', j, a0]
    return m.transpose(0, 1, 2, 4, 5, 6, 3).reshape(nb, d * D * D, d * D * D)


def _contract_coincident(p, op):
    """Networks with both open slots on site 0. p: (B, D^2, D^2), op: (B, d, d)."""
    nb, d = op.shape[0], op.shape[1]
    D = math.isqrt(p.shape[1])
    q = p.reshape(nb, D, D, D, D).transpose(0, 4, 2, 3, 1)  # [a', b', a, b]
    m = np.einsum("zij,zxyuv->zixyjuv", op, q)
    return m.reshape(nb, d * D * D, d * D * D)


@dataclass
class _Plan:
    """Everything needed to contract one family of networks in batches.

    ``powers`` are powers of the background transfer matrix (identity or a
    product operator on every site), ``blocks`` the inserted runs
    ``[1, E_L, E_R, E_L E_R]`` and ``ops`` the single-site operators
    ``[background, L, R]`` that dress the open sites.
    """

    a: np.ndarray
    powers: np.ndarray
    blocks: np.ndarray
    ops: np.ndarray

    def __post_init__(self):
        self.ket_open = np.stack([_dress_ket_open(self.a, o) for o in self.ops])
        self.bra_open = np.stack([_dress_bra_open(self.a, o) for o in self.ops])

    @staticmethod
    def segment(start, stop, inserts):
        """(x, block, y) for the product over sites start..stop-1."""
        length = stop - start
        inside = sorted(s for s in inserts if start <= s < stop)
        if not inside:
            return length, 0, 0
        kinds = tuple(inserts[s] for s in inside)
        block = {(1,): 1, (2,): 2, (1, 2): 3}[kinds]
        x = inside[0] - start
        return x, block, length - x - len(inside)

    @staticmethod
    def describe(m, inserts, n_sites):
        """Index tuple for the network with bra slot at m and given inserts."""
        op0 = inserts.get(0, 0)
        if m == 0:
            x, b, y = _Plan.segment(1, n_sites, inserts)
            return (0, op0, op0, x, b, y, 0, 0, 0)
        opm = inserts.get(m, 0)
        x1, b1, y1 = _Plan.segment(1, m, inserts)
        x2, b2, y2 = _Plan.segment(m + 1, n_sites, inserts)
        return (m, op0, opm, x1, b1, y1, x2, b2, y2)

    def _product(self, x, b, y):
        return self.powers[x] @ self.blocks[b] @ self.powers[y]

    def contract(self, rows):
        rows = np.asarray(rows, dtype=np.intp).reshape(-1, 9)
        d, D = self.a.shape[0], self.a.shape[1]
        out = np.empty((len(rows), d * D * D, d * D * D), dtype=complex)
        same = rows[:, 0] == 0
        if np.any(same):
            r = rows[same]
            p = self._product(r[:, 3], r[:, 4], r[:, 5])
            out[same] = _contract_coincident(p, self.ops[r[:, 1]])
        if np.any(~same):
            r = rows[~same]
            p1 = self._product(r[:, 3], r[:, 4], r[:, 5])
            p2 = self._product(r[:, 6], r[:, 7], r[:, 8])
            w0 = self.ket_open[r[:, 1]]
            wm = self.bra_open[r[:, 2]]
            out[~same] = _contract_apart(p1, p2, w0, wm)
        return out


@lru_cache(maxsize=64)
def _bond_rows(n_sites, m_start, m_stop):
    """Descriptors of H_0nm for m in [m_start, m_stop) and all n, ordered (m, n)."""
    rows = [
        _Plan.describe(m, {n: 1, (n + 1) % n_sites: 2}, n_sites)
        for m in range(m_start, m_stop)
        for n in range(n_sites)
    ]
    out = np.asarray(rows, dtype=np.intp)
    out.setflags(write=False)
    return out


def _plan(a, n_sites, background=None, left=None, right=None):
    a = check_tensor(a)
    d = a.shape[0]
    eye = np.eye(d, dtype=complex)
    bg = eye if background is None else np.asarray(background, dtype=complex)
    e = transfer_matrix(a, None if background is None else bg)
    powers = transfer_powers(e, n_sites)
    ident = np.eye(e.shape[0], dtype=complex)
    if left is None:
        blocks = np.stack([ident])
        ops = np.stack([bg])
    else:
        el, er = transfer_matrix(a, left), transfer_matrix(a, right)
        blocks = np.stack([ident, el, er, el @ er])
        ops = np.stack([bg, np.asarray(left, complex), np.asarray(right, complex)])
    return _Plan(a, powers, blocks, ops)


def _check_site(idx, n_sites, name):
    if not 0 <= idx < n_sites:
        raise ValidationError(f"{name}={idx} outside [0, {n_sites})", name)


def norm_network(a, m, n_sites) -> np.ndarray:
    """Matrix of ``<phi_A(B)| T^-m |phi_A(B)>`` as a form in ``vec(B)``."""
    _check_site(m, n_sites, "m")
    plan = _plan(a, n_sites)
    return plan.contract([plan.describe(m, {}, n_sites)])[0]


def parity_network(a, o, m, n_sites) -> np.ndarray:
    """Matrix of ``<phi_A(B)| T^-m prod_j o_j |phi_A(B)>``."""
    _check_site(m, n_sites, "m")
    a = check_tensor(a)
    o = np.asarray(o, dtype=complex)
    if o.shape != (a.shape[0],) * 2:
        raise ValidationError("operator dimension does not match the tensor", "o")
    plan = _plan(a, n_sites, background=o)
    return plan.contract([plan.describe(m, {}, n_sites)])[0]


def ham_network(a, h, n, m, n_sites) -> np.ndarray:
    """Matrix of ``<phi_A(B)| T^-m h_{n,n+1} |phi_A(B)>`` (sites mod N)."""
    _check_site(n, n_sites, "n")
    _check_site(m, n_sites, "m")
    a = check_tensor(a)
    d = a.shape[0]
    h = np.asarray(h, dtype=complex)
    if h.shape != (d * d, d * d):
        raise ValidationError(f"two-site operator must be {d*d}x{d*d}", "h")
    if n_sites < 2:
        raise ValidationError("a two-site term needs at least two sites", "n_sites")
    total = 0
    for left, right in operator_schmidt(h, d):
        plan = _plan(a, n_sites, left=left, right=right)
        inserts = {n: 1, (n + 1) % n_sites: 2}
        total = total + plan.contract([plan.describe(m, inserts, n_sites)])[0]
    return total


# --------------------------------------------------------------------------
# full network sets


@dataclass
class NetworkSet:
    """All open networks for one ``(A, model, N)``.

    ``norm[m]``, ``ham[n, m]`` and ``parity[m]`` (only when the model has a
    product perturbation) are ``dD^2 x dD^2`` matrices.
    """

    n_sites: int
    d: int
    D: int
    norm: np.ndarray
    ham: np.ndarray
    parity: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    _ham_sum: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self):
        return self.d * self.D * self.D

    def ham_summed(self) -> np.ndarray:
        """``sum_n ham[n, m]`` for every ``m``; this is all the assembly needs."""
        if self._ham_sum is None:
            self._ham_sum = np.sum(self.ham, axis=0)
        return self._ham_sum


def network_bytes(n_sites, d, D, with_parity=False) -> int:
    dim = d * D * D
    count = n_sites * n_sites + n_sites * (2 if with_parity else 1)
    return count * dim * dim * 16


def _run_chunks(plan, chunks, out, threads, accumulate=False):
    """Contract ``chunks`` of (target_index, rows) into ``out``.

    Chunks must target disjoint parts of ``out``.
    """

    def work(chunk):
        target, rows = chunk
        if isinstance(rows, tuple):
            # rows ordered (m, n) but stored as [n, m]
            rows, n_m = rows
            res = plan.contract(rows)
            res = res.reshape(n_m, -1, *res.shape[1:]).swapaxes(0, 1)
        else:
            res = plan.contract(rows)
        if accumulate:
            out[target] += res
        else:
            out[target] = res

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        for chunk in chunks:
            work(chunk)


def build_networks(a, model: ModelSpec, n_sites, threads=1, out=None) -> NetworkSet:
    """Contract the full sets ``{N_0m}``, ``{H_0nm}`` (and ``{P_0m}``).

    ``out`` may supply preallocated (e.g. memory-mapped) arrays under the
    keys ``norm``, ``ham`` and ``parity``.  Results do not depend on
    ``threads``: the work is split into the same chunks either way.
    """
    a = check_tensor(a)
    d, D = a.shape[0], a.shape[1]
    if d != model.d:
        raise ValidationError(f"tensor has d={d} but the model has d={model.d}", "tensor")
    if n_sites < 2:
        raise ValidationError("need at least two sites", "n_sites")
    dim = d * D * D
    out = {} if out is None else out
    norm = out.get("norm")
    if norm is None:
        norm = np.empty((n_sites, dim, dim), dtype=complex)
    ham = out.get("ham")
    if ham is None:
        ham = np.empty((n_sites, n_sites, dim, dim), dtype=complex)

    plan = _plan(a, n_sites)
    rows = [plan.describe(m, {}, n_sites) for m in range(n_sites)]
    _run_chunks(plan, [(slice(None), rows)], norm, 1)

    # group bra positions so each chunk holds at most CHUNK_BYTES of networks
    terms = operator_schmidt(model.h01, d)
    per_m = n_sites * dim * dim * 16
    step = max(1, min(n_sites, CHUNK_BYTES // per_m))
    if threads > 1:
        step = max(1, min(step, -(-n_sites // threads)))
    ham[...] = 0.0
    for left, right in terms:
        plan = _plan(a, n_sites, left=left, right=right)
        chunks = []
        for m0 in range(0, n_sites, step):
            ms = range(m0, min(m0 + step, n_sites))
            rows = _bond_rows(n_sites, ms.start, ms.stop)
            chunks.append(((slice(None), slice(ms.start, ms.stop)), (rows, len(ms))))
        _run_chunks(plan, chunks, ham, threads, accumulate=True)

    parity = None
    if model.perturbation is not None:
        parity = out.get("parity")
        if parity is None:
            parity = np.empty((n_sites, dim, dim), dtype=complex)
        plan = _plan(a, n_sites, background=model.product_op)
        rows = [plan.describe(m, {}, n_sites) for m in range(n_sites)]
        _run_chunks(plan, [(slice(None), rows)], parity, 1)

    return NetworkSet(n_sites, d, D, norm, ham, parity)
