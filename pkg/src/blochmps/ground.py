"""Translation-invariant ground-state backbone.

The energy of ``|phi(A)>`` on a ring of ``N`` sites is the Rayleigh quotient

    f(A) = [N Tr(E_h E^{N-2}) + lam Tr(E_o^N)] / Tr(E^N)

with ``E_h = sum_r E_{L_r} E_{R_r}`` built from the operator-Schmidt split of
the two-site term.  Its gradient with respect to ``conj(A)`` is ``N`` times
the derivative at a single site, obtained by opening that site in each of
the traces above.  Everything costs ``O(N D^6)``.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalError, ValidationError
from .models import ModelSpec, operator_schmidt
from .mps import check_tensor, normalize_tensor, random_tensor, transfer_matrix

log = logging.getLogger(__name__)

TENSOR_FORMAT = "blochmps-tensor"
TENSOR_VERSION = 1
DEGENERATE_NORM = 1e-14


def _pieces(a, model: ModelSpec, n_sites):
    """Transfer matrices and the open-site environments of one site."""
    a = check_tensor(a)
    d = a.shape[0]
    if d != model.d:
        raise ValidationError(f"tensor has d={d}, model has d={model.d}", "tensor")
    if n_sites < 3:
        raise ValidationError("need at least three sites", "n_sites")
    terms = operator_schmidt(model.h01, d)
    e = transfer_matrix(a)
    el = [transfer_matrix(a, left) for left, _ in terms]
    er = [transfer_matrix(a, right) for _, right in terms]
    eh = sum(x @ y for x, y in zip(el, er))

    pw = [np.eye(e.shape[0], dtype=complex)]
    for _ in range(n_sites - 1):
        pw.append(pw[-1] @ e)
    return a, terms, e, el, er, eh, pw


def _energy_parts(a, model, n_sites):
    a, terms, e, el, er, eh, pw = _pieces(a, model, n_sites)
    den = np.trace(pw[n_sites - 1] @ e).real
    if not np.isfinite(den) or den < DEGENERATE_NORM:
        raise NumericalError(f"state norm {den:.3e} is degenerate")
    num = n_sites * np.trace(eh @ pw[n_sites - 2]).real
    if model.perturbation is not None:
        eo = transfer_matrix(a, model.product_op)
        num += model.product_strength * np.trace(np.linalg.matrix_power(eo, n_sites)).real
    return num, den


def rayleigh_energy(a, model: ModelSpec, n_sites) -> float:
    """``<phi_A|H|phi_A> / <phi_A|phi_A>`` on a ring of ``n_sites``."""
    num, den = _energy_parts(a, model, n_sites)
    return float(num / den)


def _open_site(a, op, env):
    """``d Tr(E_op P) / d conj(A)`` for the rest-of-ring product ``P = env``."""
    d, D = a.shape[0], a.shape[1]
    p = env.reshape(D, D, D, D)  # [b, b', a, a']
    # grad[i', a', b'] = sum_{i,a,b} op[i', i] A[i, a, b] P[b, b', a, a']
    t = np.einsum("iab,bcad->idc", a, p)
    return op @ t.reshape(d, D * D) if op is not None else t.reshape(d, D * D)


def energy_and_gradient(a, model: ModelSpec, n_sites):
    """Energy and ``df/d conj(A)`` (shape of ``a``).

    For real parameters ``A = X + iY`` the gradient is
    ``(2 Re g, 2 Im g)``.
    """
    a, terms, e, el, er, eh, pw = _pieces(a, model, n_sites)
    d, D = a.shape[0], a.shape[1]
    N = n_sites
    den = np.trace(pw[N - 1] @ e).real
    if not np.isfinite(den) or den < DEGENERATE_NORM:
        raise NumericalError(f"state norm {den:.3e} is degenerate")
    num = N * np.trace(eh @ pw[N - 2]).real

    # bond terms not touching the open site
    env = np.zeros_like(e)
    for n in range(1, N - 1):
        env += pw[n - 1] @ eh @ pw[N - 2 - n]
    g_num = _open_site(a, None, env)
    # bonds (0, 1) and (N-1, 0)
    for (left, right), x_l, x_r in zip(terms, el, er):
        g_num = g_num + _open_site(a, left, x_r @ pw[N - 2])
        g_num = g_num + _open_site(a, right, pw[N - 2] @ x_l)

    if model.perturbation is not None:
        o, lam = model.product_op, model.product_strength
        eo = transfer_matrix(a, o)
        eo_pow = np.linalg.matrix_power(eo, N - 1)
        num += lam * np.trace(eo_pow @ eo).real
        g_num = g_num + lam * _open_site(a, o, eo_pow)

    g_den = _open_site(a, None, pw[N - 1])
    f = num / den
    grad = N * (g_num - f * g_den) / den
    return float(f), grad.reshape(d, D, D)


# --------------------------------------------------------------------------
# parametrization


class _Params:
    """Map between real parameter vectors and site tensors."""

    def __init__(self, d, D, real=False, symmetric=False):
        self.d, self.D, self.real, self.symmetric = d, D, real, symmetric
        if symmetric:
            self.iu = np.triu_indices(D)
            per = len(self.iu[0])
        else:
            per = D * D
        self.n_complex = d * per
        self.size = self.n_complex if real else 2 * self.n_complex

    def _mat(self, z):
        d, D = self.d, self.D
        if not self.symmetric:
            return z.reshape(d, D, D)
        a = np.zeros((d, D, D), dtype=complex)
        a[:, self.iu[0], self.iu[1]] = z.reshape(d, -1)
        a[:, self.iu[1], self.iu[0]] = z.reshape(d, -1)
        return a

    def to_tensor(self, x):
        z = x.astype(complex) if self.real else x[: self.n_complex] + 1j * x[self.n_complex :]
        return self._mat(z)

    def from_tensor(self, a):
        z = a[:, self.iu[0], self.iu[1]].reshape(-1) if self.symmetric else a.reshape(-1)
        return z.real.copy() if self.real else np.concatenate([z.real, z.imag])

    def gradient(self, g):
        """Real-parameter gradient from ``df/d conj(A)``."""
        if self.symmetric:
            gs = g + g.transpose(0, 2, 1)
            diag = np.arange(self.D)
            gs[:, diag, diag] = g[:, diag, diag]
            z = gs[:, self.iu[0], self.iu[1]].reshape(-1)
        else:
            z = g.reshape(-1)
        return 2 * z.real if self.real else np.concatenate([2 * z.real, 2 * z.imag])


# --------------------------------------------------------------------------
# optimization


@dataclass
class GroundResult:
    a: np.ndarray
    energy: float
    grad_norm: float
    iterations: int
    converged: bool
    restart_energies: list = field(default_factory=list)
    seed: int | None = None


def _gd_armijo(fun, x, max_iters, grad_tol, step0=1.0, shrink=0.5, c1=1e-4):
    f, g = fun(x)
    step = step0
    it = 0
    for it in range(1, max_iters + 1):
        gn2 = g @ g
        if math.sqrt(gn2) < grad_tol:
            return x, f, g, it - 1, True
        while True:
            x_new = x - step * g
            f_new, g_new = fun(x_new)
            if f_new <= f - c1 * step * gn2 or step < 1e-16:
                break
            step *= shrink
        x, f, g = x_new, f_new, g_new
        step = min(step / shrink, 1e3)
    return x, f, g, it, bool(np.linalg.norm(g) < grad_tol)


def _single_run(model, D, n_sites, rng, max_iters, grad_tol, method, real, symmetric):
    p = _Params(model.d, D, real, symmetric)
    a0 = random_tensor(model.d, D, rng, real=real, symmetric=symmetric)

    def fun(x):
        a = p.to_tensor(x)
        # the energy is scale invariant; keep the trace sums O(1)
        scale = np.linalg.norm(x)
        f, g = energy_and_gradient(a / scale, model, n_sites)
        gx = p.gradient(g) / scale
        return f, gx - (gx @ x) * x / scale**2

    x0 = p.from_tensor(normalize_tensor(a0))
    if method == "gd":
        x, f, g, iters, ok = _gd_armijo(fun, x0, max_iters, grad_tol)
    elif method == "lbfgs":
        res = minimize(
            fun,
            x0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iters, "gtol": grad_tol, "ftol": 1e-15, "maxcor": 30},
        )
        x, f, g, iters = res.x, res.fun, res.jac, res.nit
        ok = bool(np.max(np.abs(g)) < grad_tol)
    else:
        raise ValidationError(f"unknown optimizer {method!r}", "method")
    a = normalize_tensor(p.to_tensor(x))
    _, g = energy_and_gradient(a, model, n_sites)
    gnorm = float(np.linalg.norm(p.gradient(g)))
    return GroundResult(a, float(f), gnorm, int(iters), ok or gnorm < grad_tol)


def optimize_ground_tensor(
    model: ModelSpec,
    D,
    n_sites,
    max_iters=2000,
    grad_tol=1e-6,
    restarts=5,
    seed=0,
    method="lbfgs",
    real=False,
    symmetric=False,
    threads=1,
) -> GroundResult:
    """Minimize ``rayleigh_energy`` over one site tensor; best of ``restarts``.

    Each restart draws its own generator from ``SeedSequence(seed)`` so the
    result does not depend on ``threads``.  ``method`` is ``"lbfgs"`` or
    ``"gd"`` (steepest descent with an Armijo backtracking line search).
    """
    if D < 1:
        raise ValidationError("bond dimension must be at least 1", "D")
    if restarts < 1:
        raise ValidationError("need at least one restart", "restarts")
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(restarts)]

    def run(rng):
        return _single_run(model, D, n_sites, rng, max_iters, grad_tol, method, real, symmetric)

    if threads > 1 and restarts > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, rngs))
    else:
        results = [run(r) for r in rngs]
    energies = [r.energy for r in results]
    best = results[int(np.argmin(energies))]
    best.restart_energies = energies
    best.seed = seed
    if not best.converged:
        log.warning("ground-state optimization not converged: |grad| = %.3e", best.grad_norm)
    log.info("ground state D=%d N=%d: E=%.12f (restarts %s)", D, n_sites, best.energy, energies)
    return best


# --------------------------------------------------------------------------
# tensor files


def save_tensor(path, a, **meta):
    """Write ``a`` to a self-describing JSON file."""
    a = check_tensor(a)
    doc = {
        "format": TENSOR_FORMAT,
        "version": TENSOR_VERSION,
        "d": int(a.shape[0]),
        "D": int(a.shape[1]),
        "layout": "A[i, alpha, beta], C order",
        "real": a.real.reshape(-1).tolist(),
        "imag": a.imag.reshape(-1).tolist(),
        "meta": meta,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_tensor(path):
    """Read a tensor file; returns ``(a, meta)``.  Plain ``.npy`` files are also accepted."""
    path = Path(path)
    if path.suffix == ".npy":
        return check_tensor(np.load(path)), {}
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read tensor file {path}: {exc}", "tensor") from exc
    if doc.get("format") != TENSOR_FORMAT:
        raise ValidationError("not a tensor file", "tensor")
    if doc.get("version") != TENSOR_VERSION:
        raise ValidationError(f"unsupported tensor file version {doc.get('version')}", "tensor")
    d, D = doc["d"], doc["D"]
    re_, im_ = np.asarray(doc["real"], dtype=float), np.asarray(doc["imag"], dtype=float)
    if re_.size != d * D * D or im_.size != d * D * D:
        raise ValidationError("tensor file entry count does not match (d, D)", "tensor")
    return check_tensor((re_ + 1j * im_).reshape(d, D, D)), doc.get("meta", {})
