"""JSON and CSV serialization of dispersion results and exact spectra.

CSV files start with ``#`` comment lines carrying the package version and the
config hash, followed by a header row.  Floats are written with 17
significant digits, enough to round-trip a double exactly, so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from . import __version__
from .ed import ExactSpectrum, LabeledLevel
from .errors import ValidationError
from .excitations import DispersionResult, MomentumBranches

DISPERSION_COLUMNS = ("k", "branch", "energy", "discarded", "parity", "k_relabel")
SPECTRUM_COLUMNS = ("k", "branch", "energy", "parity", "degeneracy", "sector", "modes")


def fmt(x) -> str:
    return format(float(x), ".17g")


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _complex_list(a):
    a = np.asarray(a)
    return {"shape": list(a.shape), "real": a.real.reshape(-1).tolist(), "imag": a.imag.reshape(-1).tolist()}


def _from_complex_list(doc):
    return (np.asarray(doc["real"]) + 1j * np.asarray(doc["imag"])).reshape(doc["shape"])


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _header_lines(kind, chash):
    return f"# blochmps {__version__} {kind}\n# config_hash={chash}\n"


# --------------------------------------------------------------------------
# dispersion results


def dispersion_rows(res: DispersionResult):
    """``(k, branch, energy, discarded, parity, k_relabel)`` for every returned state."""
    rows = []
    for mb in res.branches:
        for i in range(len(mb)):
            parity = "" if mb.parity is None else fmt(mb.parity[i])
            k_src = mb.k if mb.k_source is None else int(mb.k_source[i])
            rows.append((k_src, i, fmt(mb.energies[i]), mb.discarded, parity, mb.k))
    return rows


def dispersion_to_csv(res: DispersionResult, path=None, chash="") -> str:
    """CSV text (also written to ``path`` when given).

    ``k`` is the momentum sector the state was computed in and ``k_relabel``
    its physical momentum; they differ only for relabeled Heisenberg states.
    Rows are grouped by ``k_relabel`` and ``branch`` counts within it.
    """
    buf = io.StringIO()
    buf.write(_header_lines("dispersion", chash))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DISPERSION_COLUMNS)
    w.writerows(dispersion_rows(res))
    text = buf.getvalue()
    if path is not None:
        _write(path, text)
    return text


def dispersion_to_dict(res: DispersionResult, chash="", with_vectors=True) -> dict:
    branches = []
    for mb in res.branches:
        entry = {
            "k": mb.k,
            "energies": [float(e) for e in mb.energies],
            "discarded": mb.discarded,
            "expected_null": mb.expected_null,
            "metric_norms": [float(x) for x in mb.metric_norms],
            "parity": None if mb.parity is None else [float(p) for p in mb.parity],
            "k_source": None if mb.k_source is None else [int(x) for x in mb.k_source],
            "sector": None if mb.sector is None else [int(x) for x in mb.sector],
            "flags": list(mb.flags),
        }
        if with_vectors:
            entry["vectors"] = _complex_list(mb.vectors)
        branches.append(entry)
    tensors = {}
    if res.a is not None:
        tensors["a"] = _complex_list(res.a)
    if res.extra.get("a_plus") is not None:
        tensors["a_plus"] = _complex_list(res.extra["a_plus"])
    extra = {k: v for k, v in res.extra.items() if k in ("lam", "rejected", "a_plus_hash")}
    return {
        "format": "blochmps-dispersion",
        "version": __version__,
        "config_hash": chash,
        "model": res.model,
        "model_key": res.extra.get("model_key"),
        "n_sites": res.n_sites,
        "d": res.d,
        "D": res.D,
        "eps": res.eps,
        "a_hash": res.a_hash,
        "a_energy": res.a_energy,
        "timings": res.timings,
        "extra": extra,
        "tensors": tensors,
        "branches": branches,
    }


def dispersion_to_json(res: DispersionResult, path=None, chash="", with_vectors=True) -> str:
    text = json.dumps(dispersion_to_dict(res, chash, with_vectors), indent=1)
    if path is not None:
        _write(path, text)
    return text


def dispersion_from_json(path_or_text) -> DispersionResult:
    doc = _load_doc(path_or_text, "blochmps-dispersion")
    branches = []
    for b in doc["branches"]:
        vecs = _from_complex_list(b["vectors"]) if "vectors" in b else None
        branches.append(
            MomentumBranches(
                k=b["k"],
                energies=np.asarray(b["energies"], dtype=float),
                vectors=vecs,
                discarded=b["discarded"],
                expected_null=b["expected_null"],
                metric_norms=np.asarray(b["metric_norms"], dtype=float),
                parity=None if b["parity"] is None else np.asarray(b["parity"], dtype=float),
                k_source=None if b["k_source"] is None else np.asarray(b["k_source"], dtype=int),
                sector=None if b["sector"] is None else np.asarray(b["sector"], dtype=int),
                flags=b["flags"],
            )
        )
    tensors = {k: _from_complex_list(v) for k, v in doc.get("tensors", {}).items()}
    extra = dict(doc.get("extra", {}))
    extra["model_key"] = doc.get("model_key")
    extra["config_hash"] = doc.get("config_hash")
    if "a_plus" in tensors:
        extra["a_plus"] = tensors["a_plus"]
    return DispersionResult(
        model=doc["model"],
        n_sites=doc["n_sites"],
        d=doc["d"],
        D=doc["D"],
        eps=doc["eps"],
        a_hash=doc["a_hash"],
        branches=branches,
        a=tensors.get("a"),
        a_energy=doc.get("a_energy"),
        extra=extra,
        timings=doc.get("timings", {}),
    )


# --------------------------------------------------------------------------
# exact spectra


def _modes_text(modes):
    return "" if modes is None else " ".join(fmt(q) for q in modes)


def spectrum_rows(spec: ExactSpectrum):
    """Rows sorted by energy; ``branch`` counts levels within each momentum."""
    seen = {}
    rows = []
    for lv in spec.levels:
        b = seen.get(lv.k, 0)
        seen[lv.k] = b + 1
        rows.append((lv.k, b, fmt(lv.energy), lv.parity, lv.degeneracy, lv.sector or "", _modes_text(lv.modes)))
    return rows


def spectrum_to_csv(spec: ExactSpectrum, path=None, chash="") -> str:
    buf = io.StringIO()
    buf.write(_header_lines("spectrum", chash))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SPECTRUM_COLUMNS)
    w.writerows(spectrum_rows(spec))
    text = buf.getvalue()
    if path is not None:
        _write(path, text)
    return text


def spectrum_to_json(spec: ExactSpectrum, path=None, chash="", model_key=None) -> str:
    doc = {
        "format": "blochmps-spectrum",
        "version": __version__,
        "config_hash": chash,
        "model": spec.model,
        "model_key": model_key,
        "n_sites": spec.n_sites,
        "levels": [
            {
                "energy": lv.energy,
                "k": lv.k,
                "parity": lv.parity,
                "degeneracy": lv.degeneracy,
                "modes": None if lv.modes is None else list(lv.modes),
                "sector": lv.sector,
            }
            for lv in spec.levels
        ],
    }
    text = json.dumps(doc, indent=1)
    if path is not None:
        _write(path, text)
    return text


def spectrum_from_json(path_or_text):
    """Returns ``(spectrum, model_key)``."""
    doc = _load_doc(path_or_text, "blochmps-spectrum")
    levels = [
        LabeledLevel(
            lv["energy"],
            lv["k"],
            lv["parity"],
            lv["degeneracy"],
            None if lv["modes"] is None else tuple(lv["modes"]),
            lv["sector"],
        )
        for lv in doc["levels"]
    ]
    return ExactSpectrum(doc["model"], doc["n_sites"], levels), doc.get("model_key")


def _load_doc(path_or_text, fmt_name):
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and not path_or_text.lstrip().startswith("{")):
        try:
            text = Path(path_or_text).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read {path_or_text}: {exc}", "path") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"not valid JSON: {exc}", "path") from exc
    if doc.get("format") != fmt_name:
        raise ValidationError(f"expected a {fmt_name} document, got {doc.get('format')!r}", "path")
    return doc
