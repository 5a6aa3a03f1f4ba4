"""Command-line interface.

Subcommands ``ground``, ``dispersion``, ``exact``, ``compare`` and ``bench``.
Every option can also be given in a JSON config file (``--config``) under the
option's long name with dashes replaced by underscores; flags given on the
command line win.  Exit codes: 0 success, 2 invalid input, 3 numerical
failure, 4 resource refusal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BlochMPSError, ValidationError
from .models import build_model, default_splitting, heisenberg_model, heisenberg_transformed, ising_model

log = logging.getLogger("blochmps")

DEFAULTS = {
    "model": "ising",
    "g": 1.0,
    "n_sites": 10,
    "D": 4,
    "branches": 1,
    "eps": 1e-11,
    "seed": 0,
    "restarts": 5,
    "max_iters": 2000,
    "grad_tol": 1e-6,
    "method": "lbfgs",
    "real": False,
    "symmetric": False,
    "threads": 1,
    "lam": None,
    "tensor": None,
    "tensor_plus": None,
    "out": None,
    "out_dir": ".",
    "cache_dir": None,
    "memory_budget": 2048.0,
    "spill": False,
    "exact_method": "ed",
    "window": None,
    "levels": None,
    "mps": None,
    "exact": None,
    "angles": False,
    "d_list": [4, 8],
    "repeats": 3,
}

SPLIT_MODELS = ("heisenberg", "heisenberg_t")


# --------------------------------------------------------------------------
# configuration


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)


def _add_model(p):
    p.add_argument("--model", choices=["ising", "ising_x", "heisenberg", "heisenberg_t"])
    p.add_argument("--g", type=float, help="transverse field of the Ising chain")
    p.add_argument("--n-sites", "-N", type=int, dest="n_sites")
    p.add_argument("--lam", type=float, help="parity splitting strength (default 0.1 N)")


def _add_ground_opts(p):
    p.add_argument("-D", "--bond-dim", type=int, dest="D")
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--grad-tol", type=float)
    p.add_argument("--method", choices=["lbfgs", "gd"])
    p.add_argument("--real", action="store_const", const=True, help="restrict A to real entries")
    p.add_argument("--symmetric", action="store_const", const=True, help="restrict A_i to symmetric matrices")


def build_parser():
    parser = argparse.ArgumentParser(prog="blochmps", description="Momentum-resolved MPS excitation spectra.")
    parser.add_argument("--version", action="version", version=f"blochmps {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground", help="optimize a translation-invariant ground tensor")
    _add_common(p)
    _add_model(p)
    _add_ground_opts(p)
    p.add_argument("--out", help="tensor file to write (JSON)")

    p = sub.add_parser("dispersion", help="excitation spectrum at every momentum")
    _add_common(p)
    _add_model(p)
    _add_ground_opts(p)
    p.add_argument("--tensor", help="ground tensor file; optimized on the fly when absent")
    p.add_argument("--tensor-plus", help="separate tensor for the H'+lam P_y run (Heisenberg)")
    p.add_argument("--branches", "-b", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--cache-dir")
    p.add_argument("--memory-budget", type=float, help="MiB allowed for the network set")
    p.add_argument("--spill", action="store_const", const=True, help="spill the network set to disk")
    p.add_argument("--out-dir")

    p = sub.add_parser("exact", help="exact reference spectrum")
    _add_common(p)
    _add_model(p)
    p.add_argument("--exact-method", choices=["ed", "ising-analytic"])
    p.add_argument("--window", type=float, help="keep levels within this energy of the ground state")
    p.add_argument("--levels", type=int, help="keep the lowest this many levels")
    p.add_argument("--out-dir")

    p = sub.add_parser("compare", help="compare a dispersion result with an exact spectrum")
    _add_common(p)
    p.add_argument("--mps", help="dispersion JSON")
    p.add_argument("--exact", help="spectrum JSON")
    p.add_argument("--angles", action="store_const", const=True, help="also compute canonical-angle distances (ED)")
    p.add_argument("--out", help="report JSON (stdout when absent)")

    p = sub.add_parser("bench", help="time the network build for several bond dimensions")
    _add_common(p)
    _add_model(p)
    p.add_argument("--d-list", type=int, nargs="+")
    p.add_argument("--repeats", type=int)
    p.add_argument("--out", help="JSON report (stdout when absent)")
    return parser


def resolve_config(args) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config: {exc}", "config") from exc
        if not isinstance(loaded, dict):
            raise ValidationError("config must be a JSON object", "config")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValidationError(f"unknown keys {sorted(unknown)}", "config")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    cfg["command"] = args.command
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    for key in ("n_sites", "D", "branches", "restarts", "max_iters", "threads", "repeats"):
        if cfg.get(key) is not None and int(cfg[key]) < 1:
            raise ValidationError("must be a positive integer", key)
    if cfg["model"] in SPLIT_MODELS and cfg["n_sites"] % 2:
        raise ValidationError("the Heisenberg workflow needs an even number of sites", "n_sites")
    if cfg["eps"] < 0:
        raise ValidationError("must be non-negative", "eps")
    for key in ("tensor", "tensor_plus", "mps", "exact"):
        if cfg.get(key) and not Path(cfg[key]).is_file():
            raise ValidationError(f"file not found: {cfg[key]}", key)
    if cfg.get("out"):
        parent = Path(cfg["out"]).parent
        if not parent.is_dir():
            raise ValidationError(f"directory does not exist: {parent}", "out")
    if cfg["command"] in ("dispersion", "exact") and not Path(cfg["out_dir"]).is_dir():
        raise ValidationError(f"directory does not exist: {cfg['out_dir']}", "out_dir")


def _hash(cfg):
    from .io import config_hash

    # paths and parallelism do not change the numbers
    keep = {k: v for k, v in cfg.items() if k not in ("out", "out_dir", "cache_dir", "threads", "config", "command")}
    return config_hash(keep)


def model_from_config(cfg):
    if cfg["model"] in ("ising", "ising_x"):
        return build_model(cfg["model"], g=cfg["g"])
    if cfg["model"] == "heisenberg":
        return heisenberg_model()
    return heisenberg_transformed()


def _ground_model(cfg):
    """Model whose ground tensor backs the excitations (``H'`` for Heisenberg)."""
    if cfg["model"] in SPLIT_MODELS:
        return heisenberg_transformed()
    return model_from_config(cfg)


# --------------------------------------------------------------------------
# commands


def _optimize(cfg):
    from .ground import optimize_ground_tensor

    t0 = time.perf_counter()
    res = optimize_ground_tensor(
        _ground_model(cfg),
        cfg["D"],
        cfg["n_sites"],
        max_iters=cfg["max_iters"],
        grad_tol=cfg["grad_tol"],
        restarts=cfg["restarts"],
        seed=cfg["seed"],
        method=cfg["method"],
        real=cfg["real"],
        symmetric=cfg["symmetric"],
        threads=cfg["threads"],
    )
    elapsed = time.perf_counter() - t0
    log.info("stage ground: %.3fs (E=%.12f, |grad|=%.2e)", elapsed, res.energy, res.grad_norm)
    return res, elapsed


def cmd_ground(cfg):
    from .ground import save_tensor

    res, elapsed = _optimize(cfg)
    chash = _hash(cfg)
    summary = {
        "version": __version__,
        "config_hash": chash,
        "model": _ground_model(cfg).describe(),
        "n_sites": cfg["n_sites"],
        "D": cfg["D"],
        "energy": res.energy,
        "grad_norm": res.grad_norm,
        "iterations": res.iterations,
        "converged": res.converged,
        "restart_energies": res.restart_energies,
        "seed": cfg["seed"],
        "seconds": elapsed,
    }
    if cfg["out"]:
        save_tensor(cfg["out"], res.a, config_hash=chash, version=__version__, energy=res.energy)
        Path(cfg["out"]).with_suffix(".summary.json").write_text(json.dumps(summary, indent=1))
    print(json.dumps(summary, indent=1))
    return 0


def cmd_dispersion(cfg):
    from .cache import networks_for
    from .excitations import dispersion, heisenberg_split_dispersion
    from .ground import load_tensor
    from .io import dispersion_to_csv, dispersion_to_json
    from .mps import normalize_tensor

    stages = {}
    if cfg["tensor"]:
        a, _ = load_tensor(cfg["tensor"])
    else:
        gres, stages["ground"] = _optimize(cfg)
        a = gres.a
    a = normalize_tensor(a)
    if a.shape[1] != cfg["D"]:
        log.info("bond dimension taken from the tensor file: D=%d", a.shape[1])
        cfg["D"] = a.shape[1]
    budget = None if cfg["memory_budget"] is None else int(cfg["memory_budget"] * 2**20)
    N, b = cfg["n_sites"], cfg["branches"]

    if cfg["model"] in SPLIT_MODELS:
        lam = cfg["lam"] if cfg["lam"] is not None else default_splitting(N)
        a_plus = normalize_tensor(load_tensor(cfg["tensor_plus"])[0]) if cfg["tensor_plus"] else a
        nets, hits = {}, []
        t_net = 0.0
        for sign, ten in ((-1, a), (1, a_plus)):
            nets[sign], info = networks_for(
                heisenberg_transformed(lam, sign), ten, N, cfg["cache_dir"], cfg["threads"], budget, cfg["spill"]
            )
            hits.append(info["cache_hit"])
            t_net += info["networks"]
        stages["networks"] = t_net
        t0 = time.perf_counter()
        res = heisenberg_split_dispersion(a, a_plus, lam, N, b, cfg["eps"], cfg["threads"], nets=nets)
        stages["solve"] = time.perf_counter() - t0
        cache_hit = all(hits)
    else:
        model = model_from_config(cfg)
        nets, info = networks_for(model, a, N, cfg["cache_dir"], cfg["threads"], budget, cfg["spill"])
        stages["networks"] = info["networks"]
        cache_hit = info["cache_hit"]
        t0 = time.perf_counter()
        res = dispersion(model, a, N, b, cfg["eps"], nets=nets, normalize=False)
        stages["solve"] = time.perf_counter() - t0

    for name, secs in stages.items():
        log.info("stage %s: %.3fs", name, secs)
    if cache_hit:
        log.info("network build skipped (warm cache)")
    res.timings = dict(stages, cache_hit=cache_hit)
    chash = _hash(cfg)
    out = Path(cfg["out_dir"])
    stem = f"dispersion_{res.model['name']}_N{N}_D{res.D}"
    dispersion_to_json(res, out / f"{stem}.json", chash)
    dispersion_to_csv(res, out / f"{stem}.csv", chash)
    print(json.dumps({"json": str(out / f"{stem}.json"), "csv": str(out / f"{stem}.csv"),
                      "a_energy": res.a_energy, "timings": res.timings}, indent=1))
    return 0


def cmd_exact(cfg):
    from .analysis import ising_exact_spectrum
    from .ed import ed_spectrum
    from .io import spectrum_to_csv, spectrum_to_json

    N = cfg["n_sites"]
    window = cfg["levels"] if cfg["levels"] is not None else cfg["window"]
    t0 = time.perf_counter()
    if cfg["exact_method"] == "ising-analytic":
        if cfg["model"] != "ising":
            raise ValidationError("the analytic solution covers the Ising model only", "exact_method")
        spec = ising_exact_spectrum(cfg["g"], N, window)
        key = ising_model(cfg["g"]).key()
    else:
        model = model_from_config(cfg)
        spec = ed_spectrum(model, N)
        if window is not None:
            spec = spec.truncate(max_levels=cfg["levels"], cutoff=cfg["window"])
        key = model.key()
    log.info("stage exact: %.3fs (%d levels)", time.perf_counter() - t0, len(spec.levels))
    chash = _hash(cfg)
    out = Path(cfg["out_dir"])
    stem = f"exact_{cfg['exact_method']}_{cfg['model']}_N{N}"
    spectrum_to_json(spec, out / f"{stem}.json", chash, key)
    spectrum_to_csv(spec, out / f"{stem}.csv", chash)
    print(json.dumps({"json": str(out / f"{stem}.json"), "csv": str(out / f"{stem}.csv"),
                      "levels": len(spec.levels)}, indent=1))
    return 0


def cmd_compare(cfg):
    from .analysis import compare_spectra
    from .ed import ed_spectrum
    from .io import dispersion_from_json, spectrum_from_json

    if not cfg["mps"] or not cfg["exact"]:
        raise ValidationError("both --mps and --exact are required", "mps")
    res = dispersion_from_json(cfg["mps"])
    spec, key = spectrum_from_json(cfg["exact"])
    if res.n_sites != spec.n_sites:
        raise ValidationError(f"N differs: {res.n_sites} vs {spec.n_sites}", "exact")
    if key is not None and res.extra.get("model_key") is not None and key != res.extra["model_key"]:
        raise ValidationError("model hashes differ", "exact")
    vectors = None
    if cfg["angles"]:
        name = res.model["name"]
        model = heisenberg_model() if name == "heisenberg" else build_model(name, **res.model.get("params", {}))
        vectors = ed_spectrum(model, res.n_sites, keep_vectors=True)
    report = compare_spectra(res, spec, exact_vectors=vectors)
    report.update(version=__version__, n_sites=res.n_sites, model=res.model, D=res.D)
    text = json.dumps(report, indent=1)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    else:
        print(text)
    return 0


def cmd_bench(cfg):
    from threadpoolctl import threadpool_limits

    from .mps import build_networks, normalize_tensor, random_tensor

    model = model_from_config(cfg)
    rng = np.random.default_rng(cfg["seed"])
    N = cfg["n_sites"]
    times = {}
    with threadpool_limits(cfg["threads"]):
        for D in cfg["d_list"]:
            a = normalize_tensor(random_tensor(model.d, D, rng))
            build_networks(a, model, N)  # warm-up
            runs = []
            for _ in range(cfg["repeats"]):
                t0 = time.perf_counter()
                build_networks(a, model, N)
                runs.append(time.perf_counter() - t0)
            times[D] = min(runs)
            log.info("stage networks: N=%d D=%d best of %d: %.4fs", N, D, cfg["repeats"], times[D])
    ds = sorted(times)
    ratios = {f"{d1}->{d2}": times[d2] / times[d1] for d1, d2 in zip(ds, ds[1:])}
    report = {"version": __version__, "n_sites": N, "seconds": {str(d): t for d, t in times.items()}, "ratios": ratios}
    text = json.dumps(report, indent=1)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    else:
        print(text)
    return 0


COMMANDS = {
    "ground": cmd_ground,
    "dispersion": cmd_dispersion,
    "exact": cmd_exact,
    "compare": cmd_compare,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except BlochMPSError as exc:
        log.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
