"""Momentum-resolved excitation spectra from the single-impurity ansatz.

For every momentum ``k`` the effective matrices

    N_eff(k) = sum_m exp(-2 pi i k m / N) N_0m
    H_eff(k) = sum_{n,m} exp(-2 pi i k m / N) H_0nm  (+ lam * sum_m ... P_0m)

are assembled from one precomputed :class:`~blochmps.mps.NetworkSet` and the
generalized eigenproblem ``H_eff B = E N_eff B`` is solved on the
well-conditioned part of ``N_eff``.
"""

from __future__ import annotations

import hashlib
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, NullSpaceWarning, ParityWarning, ValidationError
from .linalg import asymmetry, gev_regularized, hermitize
from .models import ModelSpec, heisenberg_model, heisenberg_transformed
from .mps import NetworkSet, build_networks, check_tensor, normalize_tensor

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-11
ASYMMETRY_LIMIT = 1e-8
PARITY_TOL = 0.01
DEGENERACY_TOL = 1e-8


def tensor_hash(a) -> str:
    a = np.ascontiguousarray(check_tensor(a))
    sha = hashlib.sha256(repr(a.shape).encode())
    sha.update(a.tobytes())
    return sha.hexdigest()[:16]


def expected_null_dim(D, k) -> int:
    """Gauge null-space dimension of ``N_eff(k)`` for an injective ``A``.

    ``B_i = exp(-2 pi i k/N) A_i X - X A_i`` yields a vanishing Bloch state for
    every ``D x D`` matrix ``X``; at ``k = 0`` the choice ``X = 1`` gives
    ``B = 0`` and drops out.
    """
    return D * D if k != 0 else D * D - 1


def phases(k, n_sites):
    return np.exp(-2j * np.pi * k * np.arange(n_sites) / n_sites)


@dataclass
class EffectivePair:
    k: int
    h_eff: np.ndarray
    n_eff: np.ndarray
    p_eff: np.ndarray | None = None
    asymmetry: float = 0.0


def assemble_effective(nets: NetworkSet, k, product_strength=0.0) -> EffectivePair:
    """Phase-weighted sums of the network set at momentum ``k``.

    The sums are Hermitian up to round-off; they are symmetrized and the
    largest relative asymmetry is recorded.  Anything above ``1e-8`` means
    the networks are inconsistent and raises.
    """
    N = nets.n_sites
    if not 0 <= k < N:
        raise ValidationError(f"momentum index must lie in [0, {N})", "k")
    if nets.norm is None or nets.ham is None:
        raise ValidationError("network set is incomplete", "networks")
    w = phases(k, N)
    n_eff = np.tensordot(w, nets.norm, axes=1)
    h_eff = np.tensordot(w, nets.ham_summed(), axes=1)
    p_eff = None
    if nets.parity is not None:
        p_eff = np.tensordot(w, nets.parity, axes=1)
        if product_strength:
            h_eff = h_eff + product_strength * p_eff
    elif product_strength:
        raise ValidationError("product perturbation requested but no parity networks", "networks")
    asym = max(asymmetry(n_eff), asymmetry(h_eff), 0.0 if p_eff is None else asymmetry(p_eff))
    if asym > ASYMMETRY_LIMIT:
        raise NumericalError(f"effective matrices at k={k} are not Hermitian (asymmetry {asym:.3e})")
    return EffectivePair(
        k,
        hermitize(h_eff),
        hermitize(n_eff),
        None if p_eff is None else hermitize(p_eff),
        asym,
    )


@dataclass
class MomentumBranches:
    """Solutions at one (output) momentum, ascending in energy.

    ``vectors[:, i]`` is ``vec(B_i)`` normalized to ``B^† N_eff B = 1`` in
    the momentum sector ``k_source[i]`` of the run it came from.
    """

    k: int
    energies: np.ndarray
    vectors: np.ndarray
    discarded: int
    expected_null: int
    metric_norms: np.ndarray
    parity: np.ndarray | None = None
    k_source: np.ndarray | None = None
    sector: np.ndarray | None = None
    flags: list = field(default_factory=list)

    def __len__(self):
        return len(self.energies)


def solve_fixed_momentum(pair: EffectivePair, eps=DEFAULT_EPS, n_branches=None, D=None) -> MomentumBranches:
    """Regularized generalized eigenproblem at one momentum."""
    res = gev_regularized(pair.h_eff, pair.n_eff, eps)
    dim = pair.n_eff.shape[0]
    if D is None:
        D = int(round(np.sqrt(dim / 2)))
    expected = expected_null_dim(D, pair.k)
    if res.discarded != expected:
        warnings.warn(
            f"k={pair.k}: discarded {res.discarded} directions, gauge count is {expected}",
            NullSpaceWarning,
            stacklevel=2,
        )
    b = len(res.values) if n_branches is None else n_branches
    if b > len(res.values):
        raise NumericalError(
            f"k={pair.k}: only {len(res.values)} non-singular directions, {b} branches requested"
        )
    vecs = res.vectors[:, :b]
    parity = None
    if pair.p_eff is not None:
        parity = np.real(np.einsum("ij,ik,kj->j", vecs.conj(), pair.p_eff, vecs))
    return MomentumBranches(
        k=pair.k,
        energies=res.values[:b].copy(),
        vectors=vecs,
        discarded=res.discarded,
        expected_null=expected,
        metric_norms=res.metric_norms[:b].copy(),
        parity=parity,
        k_source=np.full(b, pair.k),
        sector=np.zeros(b, dtype=int),
        flags=[""] * b,
    )


@dataclass
class DispersionResult:
    model: dict
    n_sites: int
    d: int
    D: int
    eps: float
    a_hash: str
    branches: list
    a: np.ndarray | None = field(default=None, repr=False)
    a_energy: float | None = None
    extra: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def energies(self, branch=0):
        """``E_branch(k)`` for every k (NaN where fewer branches exist)."""
        return np.array([mb.energies[branch] if len(mb) > branch else np.nan for mb in self.branches])

    def lowest(self):
        return self.energies(0)

    def degenerate_groups(self, tol=DEGENERACY_TOL):
        from .analysis import multiplet_grouping

        return multiplet_grouping(self, tol)


def max_branches(d, D) -> int:
    """Largest branch count available at every momentum (``k != 0`` is the binding case)."""
    return d * D * D - D * D


def dispersion(
    model: ModelSpec,
    a,
    n_sites,
    n_branches=None,
    eps=DEFAULT_EPS,
    nets: NetworkSet | None = None,
    threads=1,
    normalize=True,
) -> DispersionResult:
    """Lowest ``n_branches`` levels at every momentum for fixed backbone ``a``.

    The network set is built once (or taken from ``nets``) and reused for all
    ``N`` momenta.
    """
    from .ground import rayleigh_energy

    a = check_tensor(a)
    if normalize:
        a = normalize_tensor(a)
    d, D = a.shape[0], a.shape[1]
    limit = max_branches(d, D)
    if n_branches is None:
        n_branches = limit
    if not 1 <= n_branches <= limit:
        raise ValidationError(f"branch count must lie in [1, {limit}] for d={d}, D={D}", "branches")

    timings = {}
    if nets is None:
        t0 = time.perf_counter()
        nets = build_networks(a, model, n_sites, threads=threads)
        timings["networks"] = time.perf_counter() - t0
        log.info("network build: N=%d D=%d took %.3fs", n_sites, D, timings["networks"])
    elif (nets.n_sites, nets.d, nets.D) != (n_sites, d, D):
        raise ValidationError("network set does not match (N, d, D)", "networks")

    t0 = time.perf_counter()
    branches = []
    for k in range(n_sites):
        pair = assemble_effective(nets, k, model.product_strength)
        branches.append(solve_fixed_momentum(pair, eps, n_branches, D))
    timings["solve"] = time.perf_counter() - t0
    log.info("solve: %d momenta took %.3fs", n_sites, timings["solve"])

    return DispersionResult(
        model=model.describe(),
        n_sites=n_sites,
        d=d,
        D=D,
        eps=eps,
        a_hash=tensor_hash(a),
        branches=branches,
        a=a,
        a_energy=rayleigh_energy(a, model, n_sites),
        extra={"model_key": model.key()},
        timings=timings,
    )


# --------------------------------------------------------------------------
# Heisenberg: parity splitting and momentum relabeling


def relabel_momentum(k_prime, parity, n_sites) -> int:
    """Momentum after undoing the odd-site ``sigma^y`` rotation.

    Parity +1 keeps ``k'``; parity -1 shifts it by ``N/2`` (mod N).
    """
    if n_sites % 2:
        raise ValidationError("relabeling needs an even number of sites", "n_sites")
    if parity not in (1, -1):
        raise ValidationError("parity must be +1 or -1", "parity")
    return int(k_prime) % n_sites if parity == 1 else (int(k_prime) + n_sites // 2) % n_sites


def heisenberg_split_dispersion(
    a_minus,
    a_plus,
    lam,
    n_sites,
    n_branches,
    eps=DEFAULT_EPS,
    threads=1,
    nets=None,
    keep_foreign=False,
) -> DispersionResult:
    """Spectrum of the Heisenberg chain from the ``H' -/+ lam P_y`` pair.

    ``H' - lam P_y`` pushes parity +1 states down and ``H' + lam P_y`` parity
    -1 states.  Each returned state is unshifted with its own measured
    parity (``E' = E - s lam <P_y>``, exact for the Rayleigh quotient), its
    momentum is relabeled from the measured sign of ``<P_y>``, and both runs
    are merged per momentum.  States whose parity misses the sector sign by
    more than 0.01 are flagged.  A state whose parity has the opposite sign
    to its run's target belongs to the other run; it is dropped (and listed
    in ``extra["rejected"]``) unless ``keep_foreign`` is set.

    ``a_plus`` may be the same tensor as ``a_minus``; a ground tensor of the
    unperturbed ``H'`` serves both runs well.
    """
    if n_sites % 2:
        raise ValidationError("the rotated Heisenberg chain needs an even number of sites", "n_sites")
    if lam <= 0:
        raise ValidationError("splitting strength must be positive", "lam")
    nets = nets or {}
    runs = {}
    for sign, a in ((-1, a_minus), (1, a_plus)):
        model = heisenberg_transformed(lam, sign)
        runs[sign] = dispersion(model, a, n_sites, n_branches, eps, nets=nets.get(sign), threads=threads)

    pooled = {k: [] for k in range(n_sites)}
    rejected = []
    for sign, res in runs.items():
        target = -sign
        for mb in res.branches:
            for i in range(len(mb)):
                p_meas = float(mb.parity[i])
                p = 1 if p_meas >= 0 else -1
                if p != target and not keep_foreign:
                    # the other run owns this sector; keeping it would double count
                    rejected.append(
                        {"k_prime": mb.k, "sector": sign, "branch": i,
                         "energy": float(mb.energies[i] - sign * lam * p_meas), "parity": p_meas}
                    )
                    continue
                flag = ""
                if abs(p_meas - target) > PARITY_TOL:
                    flag = "parity"
                    warnings.warn(
                        f"sector {sign:+d}, k'={mb.k}, branch {i}: <P_y> = {p_meas:.4f}",
                        ParityWarning,
                        stacklevel=2,
                    )
                energy = mb.energies[i] - sign * lam * p_meas
                k = relabel_momentum(mb.k, p, n_sites)
                pooled[k].append((energy, mb.vectors[:, i], mb.metric_norms[i], p_meas, mb.k, sign, flag, mb.discarded))

    branches = []
    for k in range(n_sites):
        entries = sorted(pooled[k], key=lambda e: e[0])
        if entries:
            cols = list(zip(*entries))
            vecs = np.stack(cols[1], axis=1)
        else:
            cols = [[]] * 8
            vecs = np.zeros((runs[-1].d * runs[-1].D**2, 0), dtype=complex)
        mb = MomentumBranches(
            k=k,
            energies=np.array(cols[0], dtype=float),
            vectors=vecs,
            discarded=int(runs[-1].branches[k].discarded),
            expected_null=expected_null_dim(runs[-1].D, k),
            metric_norms=np.array(cols[2], dtype=float),
            parity=np.array(cols[3], dtype=float),
            k_source=np.array(cols[4], dtype=int),
            sector=np.array(cols[5], dtype=int),
            flags=list(cols[6]),
        )
        branches.append(mb)

    first = runs[-1]
    return DispersionResult(
        model={"name": "heisenberg", "params": {}},
        n_sites=n_sites,
        d=first.d,
        D=first.D,
        eps=eps,
        a_hash=first.a_hash,
        branches=branches,
        a=first.a,
        a_energy=first.a_energy,
        extra={
            "model_key": heisenberg_model().key(),
            "lam": float(lam),
            "a_plus": runs[1].a,
            "a_plus_hash": runs[1].a_hash,
            "runs": runs,
            "rejected": rejected,
        },
        timings={key: runs[-1].timings.get(key, 0) + runs[1].timings.get(key, 0) for key in ("networks", "solve")},
    )


def branch_state_vector(result: DispersionResult, k, i) -> np.ndarray:
    """Dense normalized state of branch ``i`` at momentum ``k`` (small N only).

    For a split Heisenberg result the state is rotated back to the original
    frame with the odd-site ``sigma^y`` product.
    """
    from .ed import odd_site_rotation
    from .mps import bloch_state_vector, unvec

    mb = result.branches[k]
    b = unvec(mb.vectors[:, i], result.d, result.D)
    k_src = int(mb.k_source[i]) if mb.k_source is not None else k
    runs = result.extra.get("runs")
    if runs is None:
        v = bloch_state_vector(result.a, b, k_src, result.n_sites)
    else:
        a = runs[int(mb.sector[i])].a
        v = odd_site_rotation(result.n_sites) @ bloch_state_vector(a, b, k_src, result.n_sites)
    return v / np.linalg.norm(v)
