"""Command-line experiment runner.

Subcommands: ``heisenberg-scan``, ``h4-scan``, ``adapt-run``, ``scf`` and
``fci``.  Configuration comes from an optional YAML file plus ``--set``
overrides (dotted keys for nesting, YAML values), e.g.::

    symadapt heisenberg-scan --set k_over_j=[0.1,1,10] --set settings=[HF] --out runs/xxz
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .adapt import AdaptConfig, AdaptTrace, TraceRow, run_adapt
from .experiments import (
    H4_SETTINGS,
    HEISENBERG_SETTINGS,
    h4_mean_field,
    heisenberg_broken_symmetry_hf,
    heisenberg_hf,
    prepare_h4,
    prepare_heisenberg,
    uhf_s_squared,
)
from .fci import fci_solve, sector_basis
from .lattice import XXZSpec, parity_operator, xxz_fermion_integrals
from .molecular import (
    Geometry,
    compute_integrals,
    fcidump_read,
    load_basis,
    lowdin_orthonormalize,
    read_xyz,
    spatial_to_spin_orbital,
)
from .operators import fermion_to_sparse
from .pools import s_squared_operator
from .plotting import plot_scan, plot_traces
from .scf import hf_solve, mp2_energy, stability_analysis

log = logging.getLogger("symadapt")

EXIT_OK = 0
EXIT_PARTIAL = 2

DEFAULTS = {
    "heisenberg-scan": {
        "k_over_j": [0.1, 1.0, 10.0],
        "settings": list(HEISENBERG_SETTINGS),
        "n_sites": 8,
        "adapt": {"max_operators": 80, "target_error": 1e-10},
        "plots": True,
    },
    "h4-scan": {
        "bond_lengths": [1.0, 2.0, 3.0],
        "settings": list(H4_SETTINGS),
        "adapt": {"max_operators": 60, "target_error": 1e-10},
        "plots": True,
    },
    "adapt-run": {
        "system": "xxz",
        "k_over_j": 1.0,
        "bond_length": 1.0,
        "setting": "HF",
        "n_sites": 8,
        "adapt": {"max_operators": 80},
        "plots": True,
    },
    "scf": {"system": "xxz", "k_over_j": 1.0, "bond_length": 1.0, "n_sites": 8, "xyz": None, "charge": 0},
    "fci": {"system": "fcidump", "fcidump": None, "nelec": None, "ms2": None, "states": 10,
            "k_over_j": 1.0, "bond_length": 1.0, "n_sites": 8},
}


class ConfigError(ValueError):
    pass


def _set_dotted(cfg: dict, key: str, value) -> None:
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key}: {p} is not a mapping")
    node[parts[-1]] = value


def _parse_value(raw: str):
    """YAML scalar or list, reading forms like ``1e-4`` as floats (YAML 1.1 would keep them strings)."""
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    if isinstance(value, list):
        return [_parse_value(str(v)) if isinstance(v, str) else v for v in value]
    return value


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(command: str, config_path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    if config_path:
        loaded = yaml.safe_load(Path(config_path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        cfg = _merge(cfg, loaded)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _set_dotted(cfg, key.strip(), _parse_value(raw))
    _validate(command, cfg)
    return cfg


def _validate(command: str, cfg: dict) -> None:
    if command == "heisenberg-scan":
        grid, menu = cfg["k_over_j"], HEISENBERG_SETTINGS
    elif command == "h4-scan":
        grid, menu = cfg["bond_lengths"], H4_SETTINGS
    else:
        grid, menu = [0], None
    if not isinstance(grid, list) or not grid:
        raise ConfigError("parameter grid must be a nonempty list")
    if menu is not None:
        bad = [s for s in cfg["settings"] if s not in menu]
        if bad:
            raise ConfigError(f"invalid settings {bad}; choose from {list(menu)}")
    if command == "adapt-run":
        menu = HEISENBERG_SETTINGS if cfg["system"] == "xxz" else H4_SETTINGS
        if cfg["setting"] not in menu:
            raise ConfigError(f"setting {cfg['setting']!r} invalid for {cfg['system']}")
    known = {f.name for f in fields(AdaptConfig)}
    unknown = set(cfg.get("adapt", {})) - known
    if unknown:
        raise ConfigError(f"unknown adapt options {sorted(unknown)}")
    AdaptConfig(**cfg.get("adapt", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n")


def _point_dir(system: str, value: float, setting: str) -> str:
    tag = "kj" if system == "xxz" else "R"
    return f"{system}_{tag}{value:g}_{setting.replace('/', '-').replace('+', 'p')}"


def _adapt_job(system: str, value: float, setting: str, adapt_opts: dict, n_sites: int, out: str) -> dict:
    """One grid point; returns its manifest entry and writes its files."""
    name = _point_dir(system, value, setting)
    folder = Path(out) / name
    folder.mkdir(parents=True, exist_ok=True)
    if system == "xxz":
        pp = prepare_heisenberg(value, setting, n_sites)
    else:
        pp = prepare_h4(value, setting)
    trace = run_adapt(pp.problem, AdaptConfig(**adapt_opts))
    (folder / "spectrum.csv").write_text(pp.spectrum.to_csv())
    _write_json(folder / "summary.json", pp.summary)
    (folder / "trace.csv").write_text(trace.to_csv())
    (folder / "trace.json").write_text(trace.to_json() + "\n")
    return {
        "point": name,
        "system": system,
        "value": value,
        "setting": setting,
        "status": "ok",
        "converged_by": trace.converged_by,
        "stalled_in_trough": trace.stalled_in_trough,
        "n_params": len(trace.op_ids),
        "gap": pp.spectrum.gap,
        "summary": pp.summary,
        "files": sorted(f"{name}/{p.name}" for p in folder.iterdir()),
    }


def _safe_job(args) -> dict:
    system, value, setting = args[:3]
    try:
        return _adapt_job(*args)
    except Exception as exc:  # grid point failures are reported, not fatal
        return {
            "point": _point_dir(system, value, setting),
            "system": system,
            "value": value,
            "setting": setting,
            "status": "failed",
            "error": f"{type(exc).__name__}: {exc}",
            "traceback": traceback.format_exc(),
        }


def _run_jobs(jobs: list[tuple], n_workers: int) -> list[dict]:
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(_safe_job, jobs))
    return [_safe_job(j) for j in jobs]


def _scan_figures(system: str, results: list[dict], out: Path, adapt_units: str) -> list[str]:
    fig_dir = out / "figures"
    fig_dir.mkdir(exist_ok=True)
    written = []
    ok = [r for r in results if r["status"] == "ok"]
    for value in sorted({r["value"] for r in ok}):
        traces = {}
        gap = None
        for r in ok:
            if r["value"] != value:
                continue
            d = json.loads((out / r["point"] / "trace.json").read_text())
            rows = [TraceRow(**row) for row in d.pop("rows")]
            traces[r["setting"]] = AdaptTrace(rows=rows, **d)
            gap = r["gap"]
        tag = "kj" if system == "xxz" else "R"
        path = plot_traces(traces, fig_dir / f"{system}_{tag}{value:g}_adapt.png", gap=gap,
                           title=f"{system} {tag}={value:g}")
        written.append(str(path.relative_to(out)))
    by_value = {}
    for r in ok:
        by_value.setdefault(r["value"], r["summary"])
    grid = sorted(by_value)
    if system == "xxz":
        series = {
            "HF": [by_value[v]["hf_energy"] - by_value[v]["fci_energy"] for v in grid],
            "MP2": [None if by_value[v].get("mp2_energy") is None else by_value[v]["mp2_energy"] - by_value[v]["fci_energy"] for v in grid],
            "E1 - E0": [by_value[v]["fci_gap"] for v in grid],
        }
        path = plot_scan(grid, series, fig_dir / "xxz_classical.png", "K/J", f"error ({adapt_units})", logx=True)
    else:
        series = {
            "rHF": [by_value[v]["rhf_energy"] - by_value[v]["fci_energy"] for v in grid],
            "uHF": [by_value[v]["uhf_energy"] - by_value[v]["fci_energy"] for v in grid],
            "rMP2": [by_value[v]["mp2_energy"] - by_value[v]["fci_energy"] for v in grid],
            "E1 - E0": [by_value[v]["fci_gap"] for v in grid],
        }
        path = plot_scan(grid, series, fig_dir / "h4_classical.png", "H-H distance (angstrom)", "error (hartree)")
    written.append(str(path.relative_to(out)))
    return written


def _manifest(command: str, cfg: dict, results: list[dict], figures: list[str]) -> dict:
    entries = sorted(({k: v for k, v in r.items() if k != "traceback"} for r in results), key=lambda r: r["point"])
    return {
        "command": command,
        "version": __version__,
        "config": cfg,
        "adapt_thresholds": asdict(AdaptConfig(**cfg.get("adapt", {}))),
        "points": entries,
        "figures": sorted(figures),
        "failed": sorted(r["point"] for r in results if r["status"] != "ok"),
    }


def run_scan(command: str, cfg: dict, out: Path, n_workers: int = 1) -> int:
    system = "xxz" if command == "heisenberg-scan" else "h4"
    grid = cfg["k_over_j"] if system == "xxz" else cfg["bond_lengths"]
    jobs = [(system, float(v), s, cfg["adapt"], cfg.get("n_sites", 8), str(out)) for v in grid for s in cfg["settings"]]
    out.mkdir(parents=True, exist_ok=True)
    results = _run_jobs(jobs, n_workers)
    for r in results:
        if r["status"] != "ok":
            log.error("grid point %s failed: %s", r["point"], r["error"])
    figures = _scan_figures(system, results, out, "|J|" if system == "xxz" else "hartree") if cfg.get("plots") else []
    _write_json(out / "manifest.json", _manifest(command, cfg, results, figures))
    return EXIT_OK if all(r["status"] == "ok" for r in results) else EXIT_PARTIAL


def run_single(cfg: dict, out: Path) -> int:
    system = cfg["system"]
    value = float(cfg["k_over_j"] if system == "xxz" else cfg["bond_length"])
    out.mkdir(parents=True, exist_ok=True)
    result = _safe_job((system, value, cfg["setting"], cfg["adapt"], cfg["n_sites"], str(out)))
    figures = _scan_figures(system, [result], out, "|J|" if system == "xxz" else "hartree") if cfg.get("plots") and result["status"] == "ok" else []
    _write_json(out / "manifest.json", _manifest("adapt-run", cfg, [result], figures))
    if result["status"] != "ok":
        log.error("%s", result["error"])
        return EXIT_PARTIAL
    return EXIT_OK


def run_scf(cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    if cfg["system"] == "xxz":
        kj = float(cfg["k_over_j"])
        ints = xxz_fermion_integrals(XXZSpec.from_ratio(kj, cfg["n_sites"]))
        sol = heisenberg_hf(kj, cfg["n_sites"])
        bs, lowest = heisenberg_broken_symmetry_hf(kj, sol, cfg["n_sites"])
        summary = {
            "system": "xxz", "k_over_j": kj, "hf_energy": sol.e_total, "stability_eigenvalue": lowest,
            "bs_hf_energy": bs.e_total, "mp2_energy": sol.e_total + mp2_energy(sol, ints), "notes": sol.notes + bs.notes,
        }
    else:
        if cfg.get("xyz"):
            geom = read_xyz(Path(cfg["xyz"]).read_text())
            geom = Geometry(geom.atoms, int(cfg.get("charge", 0)))
            ao, S = compute_integrals(geom, load_basis("sto-3g"))
            ints, _ = lowdin_orthonormalize(ao, S)
            nelec = geom.n_electrons
            rhf = hf_solve(ints, nelec, "restricted")
            lowest, _ = stability_analysis(rhf, ints)
            summary = {"system": "xyz", "n_electrons": nelec, "rhf_energy": rhf.e_total,
                       "rhf_stability_eigenvalue": lowest, "mp2_energy": rhf.e_total + mp2_energy(rhf, ints)}
        else:
            R = float(cfg["bond_length"])
            mf = h4_mean_field(R)
            summary = {
                "system": "h4", "bond_length": R, "rhf_energy": mf.rhf.e_total, "uhf_energy": mf.uhf.e_total,
                "uhf_s_squared": uhf_s_squared(mf.uhf), "rhf_stability_eigenvalue": mf.rhf_stability,
                "mp2_energy": mf.rhf.e_total + mp2_energy(mf.rhf, mf.ints),
            }
    _write_json(out / "scf.json", summary)
    _write_json(out / "manifest.json", {"command": "scf", "version": __version__, "config": cfg, "files": ["scf.json"]})
    return EXIT_OK


def run_fci(cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    units = "hartree"
    if cfg["system"] == "fcidump":
        if not cfg.get("fcidump"):
            raise ConfigError("fci on an FCIDUMP needs fcidump=PATH")
        ints = fcidump_read(Path(cfg["fcidump"]).read_text())
        nelec = cfg.get("nelec") or ints.nelec
        ms2 = cfg.get("ms2") if cfg.get("ms2") is not None else (ints.ms2 or 0)
        if nelec is None:
            raise ConfigError("electron count missing from FCIDUMP and config")
        so = spatial_to_spin_orbital(ints)
        basis = sector_basis(so.n_orb, int(nelec), (int(nelec) + int(ms2)) // 2)
        ham = so
    elif cfg["system"] == "xxz":
        ham = xxz_fermion_integrals(XXZSpec.from_ratio(float(cfg["k_over_j"]), cfg["n_sites"]))
        basis = sector_basis(cfg["n_sites"], cfg["n_sites"] // 2)
        units = "|J|"
    else:
        geom = Geometry.linear_chain(4, float(cfg["bond_length"]))
        ao, S = compute_integrals(geom, load_basis("sto-3g"))
        ints, _ = lowdin_orthonormalize(ao, S)
        ham = spatial_to_spin_orbital(ints)
        basis = sector_basis(8, 4, 2)
    k = min(int(cfg["states"]), basis.dim)
    if cfg["system"] == "xxz":
        res = fci_solve(ham, basis, k, parity=parity_operator(cfg["n_sites"]), units=units)
    else:
        res = fci_solve(ham, basis, k, s_squared=fermion_to_sparse(s_squared_operator(basis.n_modes // 2)), units=units)
    (out / "spectrum.csv").write_text(res.to_csv())
    _write_json(out / "manifest.json", {"command": "fci", "version": __version__, "config": cfg, "files": ["spectrum.csv"]})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symadapt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration entry (dotted keys for nesting)")
        p.add_argument("--out", default=f"runs/{name}", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel grid-point workers")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args.config, args.overrides)
    except (ConfigError, TypeError, ValueError, yaml.YAMLError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    try:
        if args.command in ("heisenberg-scan", "h4-scan"):
            return run_scan(args.command, cfg, out, args.jobs)
        if args.command == "adapt-run":
            return run_single(cfg, out)
        if args.command == "scf":
            return run_scf(cfg, out)
        return run_fci(cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
