"""Command-line front end: ``fockcages {graph,zeromodes,spectrum,dynamics,verify}``.

Every run writes its artifacts plus ``manifest.json`` (resolved config and
model hashes) into ``--out``. Exit codes: 0 success, 1 verification failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import cages as cages_mod
from .dynamics import QuenchSetup, TimeGrid, dynamics_manifest, evolve_series, saturation, write_dynamics_csv
from .fockgraph import biadjacency, build_krylov_graph, export_graph, full_census, largest_sector
from .model import PRESETS, ModelError, ModelSpec, parse_bitstring, preset, spec_from_dict
from .spectral import (
    dense_spectrum,
    entanglement_profile,
    gap_ratio,
    momentum_sectors,
    write_eigenvalues,
    write_entanglement,
    write_rstats,
)
from .zeromodes import backtracking_search, charge_flow_search, kernel_dimensions, verify_zero_mode, write_solutions

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2

DEFAULTS = {
    "model": "single_cage",
    "L": None,
    "bc": None,
    "seed_state": None,
    "tmax": 1e3,
    "samples": 1000,
    "window": 0.5,
    "max_support": None,
    "max_solutions": 16,
    "search": "none",
    "sublattice": "A",
    "restarts": 100,
    "timeout": None,
    "momentum": False,
    "rng_seed": 0,
    "out": "out",
    "format": None,
}

_FAMILY_SCHEMA = {
    "type": "object",
    "required": ["controls"],
    "properties": {
        "controls": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["offset"],
                "properties": {"offset": {"type": "integer"}, "polarity": {"enum": ["occupied", "empty"]}},
                "additionalProperties": False,
            },
        },
        "sign": {"enum": [1, -1]},
        "sites": {"enum": ["all", "even", "odd"]},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "oneOf": [
                {"enum": sorted(PRESETS)},
                {
                    "type": "object",
                    "required": ["families"],
                    "properties": {
                        "name": {"type": "string"},
                        "bc": {"enum": ["open", "periodic"]},
                        "coupling": {"type": "number"},
                        "families": {"type": "array", "minItems": 1, "items": _FAMILY_SCHEMA},
                        "wraps": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
                        "L": {"type": "integer"},
                    },
                    "additionalProperties": False,
                },
            ]
        },
        "L": {"oneOf": [{"type": "integer", "minimum": 2}, {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}}]},
        "bc": {"enum": ["open", "periodic", None]},
        "seed_state": {"type": ["string", "null"]},
        "tmax": {"type": "number", "exclusiveMinimum": 0},
        "samples": {"type": "integer", "minimum": 3},
        "window": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "max_support": {"type": ["integer", "null"], "minimum": 1},
        "max_solutions": {"type": ["integer", "null"], "minimum": 1},
        "search": {"enum": ["none", "backtracking", "charge-flow", "both"]},
        "sublattice": {"enum": ["A", "B"]},
        "restarts": {"type": "integer", "minimum": 1},
        "timeout": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "momentum": {"type": "boolean"},
        "rng_seed": {"type": "integer"},
        "out": {"type": "string"},
        "format": {"enum": ["csv", "json", "dot", "graphml", None]},
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


# --- configuration -------------------------------------------------------------

def _parse_L(text: str) -> list[int]:
    """``8``, ``8,10,12`` or ``6..12`` (even steps when both ends are even)."""
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split(".."))
            step = 2 if lo % 2 == 0 and hi % 2 == 0 else 1
            return list(range(lo, hi + 1, step))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse L list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with any of the options below")
    common.add_argument("--model", help=f"preset name: {', '.join(sorted(PRESETS))}")
    common.add_argument("--L", type=_parse_L, help="size, comma list or lo..hi range")
    common.add_argument("--bc", choices=["open", "periodic"])
    common.add_argument("--seed-state", dest="seed_state", help="bitstring (site 0 rightmost) or a named state")
    common.add_argument("--rng-seed", dest="rng_seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=["csv", "json", "dot", "graphml"])

    p = argparse.ArgumentParser(prog="fockcages", description="Fock-space cages in constrained spin chains")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("graph", parents=[common], help="sector census and graph export")
    z = sub.add_parser("zeromodes", parents=[common], help="exact kernel dimensions and cage searches")
    z.add_argument("--search", choices=["none", "backtracking", "charge-flow", "both"])
    z.add_argument("--sublattice", choices=["A", "B"])
    z.add_argument("--max-support", dest="max_support", type=int)
    z.add_argument("--max-solutions", dest="max_solutions", type=int)
    z.add_argument("--restarts", type=int)
    z.add_argument("--timeout", type=float, help="backtracking wall-clock limit in seconds")
    s = sub.add_parser("spectrum", parents=[common], help="eigenvalues, gap ratios and entanglement")
    s.add_argument("--momentum", action="store_true", default=None, help="also pool momentum-resolved gap ratios")
    d = sub.add_parser("dynamics", parents=[common], help="quench return probability and magnetization")
    d.add_argument("--tmax", type=float)
    d.add_argument("--samples", type=int)
    d.add_argument("--window", type=float, help="averaging fraction at the end of the series")
    sub.add_parser("verify", parents=[common], help="exact annihilation check of the cage catalog")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"schema error in {args.config}: {exc.message}") from None
        if isinstance(data.get("L"), int):
            data["L"] = [data["L"]]
        cfg.update(data)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if isinstance(cfg["model"], str) and cfg["model"] not in PRESETS:
        raise ConfigError(f"unknown model {cfg['model']!r}; choose from {sorted(PRESETS)}")
    if cfg["L"] is None and args.command != "verify":
        cfg["L"] = [8]
    if cfg["L"] is not None and not cfg["L"]:
        raise ConfigError("no system size given")
    cfg["command"] = args.command
    return cfg


def model_for(cfg: dict, L: int) -> ModelSpec:
    m = cfg["model"]
    if isinstance(m, str):
        return preset(m, L, cfg["bc"])
    d = dict(m, L=L)
    if cfg["bc"]:
        d["bc"] = cfg["bc"]
    return spec_from_dict(d)


def named_state(cfg: dict, spec: ModelSpec) -> int | None:
    """Initial bitstring: explicit, named, or the model's default quench state.

    Names: ``single`` (one particle at site L//2), ``adjacent`` (particles at
    L//2 - 1 and L//2), ``pair`` (particles at sites 0 and 1).
    """
    L = spec.L
    named = {"single": 1 << (L // 2), "adjacent": 3 << (L // 2 - 1), "pair": 0b11}
    text = cfg["seed_state"]
    if text is None:
        return {"single_cage": named["single"], "o1_cage": named["pair"]}.get(spec.name)
    if text in named:
        return named[text]
    bits, n = parse_bitstring(text)
    if n != L:
        raise ConfigError(f"seed state {text} has length {n}, model has L={L}")
    return bits


def _sector(cfg: dict, spec: ModelSpec):
    seed = named_state(cfg, spec) if cfg["seed_state"] is not None else None
    return build_krylov_graph(spec, seed) if seed is not None else largest_sector(spec)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _write_manifest(out: Path, cfg: dict, specs: list[ModelSpec], extra: dict | None = None) -> None:
    from importlib.metadata import PackageNotFoundError, packages_distributions, version

    try:
        ver = version(packages_distributions().get("fockcages", ["fockcages"])[0])
    except PackageNotFoundError:
        ver = "unknown"
    manifest = {
        "config": {k: v for k, v in cfg.items()},
        "version": ver,
        "models": [{"L": s.L, "hash": s.content_hash(), "spec": s.to_dict()} for s in specs],
    }
    if extra:
        manifest.update(extra)
    _write_json(out / "manifest.json", manifest)


# --- commands ------------------------------------------------------------------

def cmd_graph(cfg: dict, out: Path) -> int:
    fmt = cfg["format"] or "dot"
    if fmt == "csv":
        raise ConfigError("graph export supports dot, graphml or json")
    specs = []
    for L in cfg["L"]:
        spec = model_for(cfg, L)
        specs.append(spec)
        census = full_census(spec)
        _write_json(out / f"census_L{L}.json", census.to_dict())
        graph = _sector(cfg, spec)
        export_graph(graph, out / f"graph_L{L}.{fmt}", format=fmt)
        sizes = census.sizes
        print(f"L={L}: {len(sizes)} components, largest {sizes[0]}, singletons {len(census.singletons)}")
    _write_manifest(out, cfg, specs)
    return EXIT_OK


def cmd_zeromodes(cfg: dict, out: Path) -> int:
    specs, rows, failed = [], [], False
    for L in cfg["L"]:
        spec = model_for(cfg, L)
        specs.append(spec)
        graph = _sector(cfg, spec)
        bi = biadjacency(graph)
        report = kernel_dimensions(bi, rng_seed=cfg["rng_seed"])
        _write_json(out / f"kernel_L{L}.json", report.to_dict())
        rows.append((L, report))
        print(f"L={L}: dim ker H = {report.dim_ker_H} (|A|={report.n_a}, |B|={report.n_b}, {report.method})")
        if cfg["search"] == "none":
            continue
        found, status = [], {}
        if cfg["search"] in ("backtracking", "both"):
            res = backtracking_search(
                bi, cfg["sublattice"], cfg["max_solutions"], cfg["max_support"], timeout=cfg["timeout"]
            )
            found += list(res)
            status["backtracking"] = {"complete": res.complete, "solutions": len(res), "nodes_visited": res.nodes_visited}
        if cfg["search"] in ("charge-flow", "both"):
            vec = charge_flow_search(
                bi, rng_seed=cfg["rng_seed"], restarts=cfg["restarts"], sublattice=cfg["sublattice"],
                max_support=cfg["max_support"],
            )
            if vec is not None:
                found.append(vec)
            status["charge_flow"] = {"found": vec is not None, "restarts": cfg["restarts"]}
        write_solutions(spec, found, out / f"solutions_L{L}.json")
        _write_json(out / f"search_L{L}.json", status)
        failed |= not all(verify_zero_mode(spec, v) for v in found)
    if len(rows) > 1:
        with open(out / "dzero.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "n_a", "n_b", "rank", "d_zero", "imbalance", "method"])
            for L, r in rows:
                w.writerow([L, r.n_a, r.n_b, r.rank, r.dim_ker_H, r.bound, r.method])
    _write_manifest(out, cfg, specs)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_spectrum(cfg: dict, out: Path) -> int:
    specs, summary = [], []
    for L in cfg["L"]:
        spec = model_for(cfg, L)
        specs.append(spec)
        graph = _sector(cfg, spec)
        spec_ = dense_spectrum(graph, want_vectors=True)
        write_eigenvalues(spec_, out / f"eigenvalues_L{L}.csv")
        kept = gap_ratio(spec_)
        dropped = gap_ratio(spec_, drop_zero_multiplet=True)
        write_rstats(kept, out / f"rstats_L{L}.csv")
        write_rstats(dropped, out / f"rstats_L{L}_dropzero.csv")
        prof = entanglement_profile(spec_, graph)
        write_entanglement(prof, out / f"entanglement_L{L}.csv")
        row = {
            "L": L,
            "dim": len(graph),
            "zero_count": spec_.zero_count(),
            "mean_r": kept.mean_r,
            "mean_r_dropzero": dropped.mean_r,
            "page": prof.page,
            "cut": prof.cut,
        }
        if cfg["momentum"] and spec.bc == "periodic":
            row["mean_r_momentum"] = gap_ratio(momentum_sectors(graph), drop_zero_multiplet=True).mean_r
        summary.append(row)
        print(f"L={L}: dim {row['dim']}, zero modes {row['zero_count']}, <r> = {row['mean_r']:.4f}")
    _write_json(out / "spectrum_summary.json", summary)
    _write_manifest(out, cfg, specs)
    return EXIT_OK


def cmd_dynamics(cfg: dict, out: Path) -> int:
    grid = TimeGrid(cfg["tmax"], cfg["samples"])
    specs, table = [], []
    for L in cfg["L"]:
        spec = model_for(cfg, L)
        specs.append(spec)
        seed = named_state(cfg, spec)
        if seed is None:
            raise ConfigError(f"model {spec.name} has no default initial state; pass --seed-state")
        setup = QuenchSetup(spec, seed, grid)
        series = evolve_series(setup)
        write_dynamics_csv(series, out / f"dynamics_L{L}.csv")
        man = dynamics_manifest(setup, series, cfg["window"])
        _write_json(out / f"dynamics_L{L}.json", man)
        row = {
            "L": L,
            "method": man["method"],
            "L_return_sat": saturation(series[0], cfg["window"], min_time=0.0),
            "Z_total_sat": saturation(series[1], cfg["window"], min_time=0.0),
        }
        table.append(row)
        print(f"L={L}: saturation {row['L_return_sat']:.6g}, Z_total/L {row['Z_total_sat'] / L:.4f} ({row['method']})")
    with open(out / "saturation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "L_return_sat", "Z_total_sat", "Z_per_site_sat", "method"])
        for r in table:
            w.writerow([r["L"], f"{r['L_return_sat']:.10g}", f"{r['Z_total_sat']:.10g}", f"{r['Z_total_sat'] / r['L']:.10g}", r["method"]])
    extra = {}
    if len(table) > 1:
        Ls = np.log([r["L"] for r in table])
        sats = np.log([r["L_return_sat"] for r in table])
        extra["loglog_slope"] = float(np.polyfit(Ls, sats, 1)[0])
        print(f"log-log slope of saturation vs L: {extra['loglog_slope']:.3f}")
    _write_manifest(out, cfg, specs, extra)
    return EXIT_OK


def cmd_verify(cfg: dict, out: Path) -> int:
    """Annihilation check of every catalog cage; ``--L`` caps the sizes."""
    L_max = max(cfg["L"]) if cfg["L"] else 16
    entries = cages_mod.catalog(
        L_single=range(4, min(16, L_max) + 1),
        L_multi=range(4, min(14, L_max) + 1, 2),
        L_o1=range(8, min(16, L_max) + 1, 2),
    )
    records, bad = [], 0
    for spec, cage in entries:
        check = verify_zero_mode(spec, cage.amplitudes)
        records.append({"model": spec.name, "L": spec.L, "family": cage.family, "support": len(cage.support), "ok": check.ok})
        bad += not check.ok
    _write_json(out / "verify.json", records)
    _write_manifest(out, cfg, [])
    print(f"{len(records) - bad}/{len(records)} catalog cages annihilated exactly")
    return EXIT_VERIFY if bad else EXIT_OK


COMMANDS = {
    "graph": cmd_graph,
    "zeromodes": cmd_zeromodes,
    "spectrum": cmd_spectrum,
    "dynamics": cmd_dynamics,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
