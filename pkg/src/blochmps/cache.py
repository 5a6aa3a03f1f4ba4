"""On-disk network cache and the memory guard.

A cache entry is a directory named after the entry key, holding
``manifest.json`` plus one ``.npy`` file per network family (``norm``,
``ham``, ``parity``).  Arrays are opened memory-mapped on load, so a warm
rerun touches only what the assembly reads.  Entries are written into a
temporary directory and renamed into place, so a crashed build never leaves
a half-written entry behind.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ResourceError, ValidationError
from .excitations import tensor_hash
from .models import ModelSpec
from .mps import LAYOUT_VERSION, NetworkSet, build_networks, check_tensor, network_bytes

log = logging.getLogger(__name__)

CACHE_FORMAT = "blochmps-networks"
DEFAULT_BUDGET = 2 * 2**30


def memory_requirement(model: ModelSpec, n_sites, D) -> int:
    return network_bytes(n_sites, model.d, D, model.perturbation is not None)


def check_budget(model: ModelSpec, n_sites, D, budget=DEFAULT_BUDGET, spill=False):
    """Raise :class:`ResourceError` when the network set would not fit in ``budget`` bytes."""
    need = memory_requirement(model, n_sites, D)
    if budget is not None and need > budget and not spill:
        raise ResourceError(
            f"network set needs {need / 2**20:.3g} MiB, budget is {budget / 2**20:.3g} MiB "
            "(enable spilling to disk or raise the budget)"
        )
    return need


def entry_key(model: ModelSpec, a, n_sites) -> dict:
    a = check_tensor(a)
    return {
        "model": model.key(),
        "n_sites": int(n_sites),
        "d": int(a.shape[0]),
        "D": int(a.shape[1]),
        "layout": LAYOUT_VERSION,
        "tensor": tensor_hash(a),
    }


def _key_hash(key) -> str:
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:20]


class NetworkCache:
    """Directory of cached network sets keyed by (model, N, D, layout, tensor)."""

    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, key) -> Path:
        return self.root / _key_hash(key)

    def load(self, model: ModelSpec, a, n_sites):
        """Cached :class:`NetworkSet` or ``None``."""
        key = entry_key(model, a, n_sites)
        path = self.path_for(key)
        manifest = path / "manifest.json"
        if not manifest.exists():
            return None
        try:
            meta = json.loads(manifest.read_text())
        except json.JSONDecodeError:
            log.warning("ignoring unreadable cache manifest %s", manifest)
            return None
        if meta.get("format") != CACHE_FORMAT or meta.get("key") != key:
            log.warning("cache entry %s does not match its key; ignoring it", path)
            return None
        arrays = {name: np.load(path / f"{name}.npy", mmap_mode="r") for name in meta["arrays"]}
        return NetworkSet(
            key["n_sites"], key["d"], key["D"], arrays["norm"], arrays["ham"], arrays.get("parity"), meta=meta
        )

    def build(self, model: ModelSpec, a, n_sites, threads=1, budget=DEFAULT_BUDGET, spill=False):
        """Build a network set straight into a new cache entry and return it memory-mapped."""
        a = check_tensor(a)
        D = a.shape[1]
        need = check_budget(model, n_sites, D, budget, spill)
        key = entry_key(model, a, n_sites)
        final = self.path_for(key)
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=".build-", dir=self.root))
        try:
            dim = model.d * D * D
            shapes = {"norm": (n_sites, dim, dim), "ham": (n_sites, n_sites, dim, dim)}
            if model.perturbation is not None:
                shapes["parity"] = (n_sites, dim, dim)
            out = {
                name: np.lib.format.open_memmap(tmp / f"{name}.npy", mode="w+", dtype=complex, shape=shape)
                for name, shape in shapes.items()
            }
            t0 = time.perf_counter()
            build_networks(a, model, n_sites, threads=threads, out=out)
            elapsed = time.perf_counter() - t0
            for arr in out.values():
                arr.flush()
            del out
            meta = {
                "format": CACHE_FORMAT,
                "version": __version__,
                "key": key,
                "model": model.describe(),
                "arrays": sorted(shapes),
                "bytes": need,
                "build_seconds": elapsed,
            }
            (tmp / "manifest.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
            if final.exists():
                shutil.rmtree(final)
            os.replace(tmp, final)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        log.info("network build: N=%d D=%d took %.3fs (cached in %s)", n_sites, D, elapsed, final)
        return self.load(model, a, n_sites)

    def get_or_build(self, model: ModelSpec, a, n_sites, threads=1, budget=DEFAULT_BUDGET, spill=False):
        """Returns ``(networks, was_cached)``."""
        nets = self.load(model, a, n_sites)
        if nets is not None:
            log.info("network cache hit: %s; skipping build", self.path_for(entry_key(model, a, n_sites)))
            return nets, True
        return self.build(model, a, n_sites, threads, budget, spill), False


def networks_for(model: ModelSpec, a, n_sites, cache_dir=None, threads=1, budget=DEFAULT_BUDGET, spill=False):
    """Network set from the cache when one is configured, else built in memory.

    Spilling without a cache directory uses a temporary one.
    """
    if cache_dir is None and spill:
        cache_dir = tempfile.mkdtemp(prefix="blochmps-spill-")
    if cache_dir is not None:
        nets, hit = NetworkCache(cache_dir).get_or_build(model, a, n_sites, threads, budget, spill)
        return nets, {"cache_hit": hit, "networks": 0.0 if hit else nets.meta.get("build_seconds", 0.0)}
    a = check_tensor(a)
    check_budget(model, n_sites, a.shape[1], budget, spill)
    if a.shape[0] != model.d:
        raise ValidationError("tensor and model disagree on d", "tensor")
    t0 = time.perf_counter()
    nets = build_networks(a, model, n_sites, threads=threads)
    elapsed = time.perf_counter() - t0
    log.info("network build: N=%d D=%d took %.3fs", n_sites, a.shape[1], elapsed)
    return nets, {"cache_hit": False, "networks": elapsed}
