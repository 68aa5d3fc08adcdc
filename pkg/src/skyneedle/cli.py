"""Command-line interface: simulate | calibrate | test | power | roc.

Configuration comes from a TOML or JSON file plus flag overrides; every
randomized command requires (or records) an explicit seed, and all outputs
embed the resolved config hash, the frame hash, and the tool version so
runs are replayable byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, sphere
from .calibration import NullDistributionTable, build_tables, replicate_rngs
from .catalogs import Catalog, CatalogError, read_catalog, write_catalog
from .coverage import ExposureCoverage, UniformCoverage, sample_null
from .density import ThresholdRule
from .needlets import NeedletFrame, make_window
from .procedures import (
    IsotropyEngine,
    StatisticsSpec,
    jstar,
    multiple_decide,
    scalar_decide,
    twopc_scan_pvalue,
)

TABLE_KEYS = ("multiple", "plugin", "nn", "twopc")


class ConfigError(Exception):
    exit_code = 2


class DataError(Exception):
    exit_code = 3


DEFAULT_CONFIG = {
    "seed": None,
    "n": 100,
    "alpha": 0.05,
    "replicates": 10000,
    "data_frame": sphere.GALACTIC,
    "coeff_method": "binned",
    "tables_dir": "tables",
    "frame": {"bandwidth": 2.0, "spline_order": 15, "j_max": None},
    "coverage": {"kind": "uniform"},
    "multiple": {"norms": ["1", "2star", "inf"], "j_max": 6},
    "plugin": {"norms": ["1", "2", "inf"], "j_max": 6, "lam": 1.0, "rho": 1.0},
    "nn": True,
    "twopc": {"deltas_deg": [3.0, 10.0, 30.0]},
    "alternative": {"kind": "null"},
    "power": {"replicates": 1000, "alternatives": []},
}


def _deep_update(base, other):
    out = dict(base)
    for k, v in other.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    text = p.read_bytes()
    if p.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib as toml
    except ImportError:
        import tomli as toml
    return toml.loads(text.decode())


def resolve_config(args):
    cfg = _deep_update(DEFAULT_CONFIG, load_config(getattr(args, "config", None)))
    for key in ("seed", "n", "alpha", "replicates", "tables_dir"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    if cfg["seed"] is None:
        cfg["seed"] = int(np.random.SeedSequence().entropy % (2**32))
    cfg["seed"] = int(cfg["seed"])
    return cfg


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str).encode()).hexdigest()[:16]


def build_coverage(cfg):
    cov = cfg["coverage"]
    kind = cov.get("kind", "uniform")
    if kind == "uniform":
        return UniformCoverage()
    if kind == "exposure":
        return ExposureCoverage(cov.get("site_lat_deg", -35.2), cov.get("max_zenith_deg", 60.0))
    raise ConfigError(f"unknown coverage kind {kind!r}")


def build_frame(cfg):
    need_2star = "2star" in cfg["multiple"]["norms"]
    j_max = cfg["frame"].get("j_max")
    if j_max is None:
        j_max = max(cfg["multiple"]["j_max"] + (1 if need_2star else 0), cfg["plugin"]["j_max"])
    window = make_window(cfg["frame"].get("bandwidth", 2.0), cfg["frame"].get("spline_order", 15))
    return NeedletFrame(window, j_max)


def build_spec(cfg):
    return StatisticsSpec(
        multiple_J=int(cfg["multiple"]["j_max"]),
        multiple_norms=tuple(cfg["multiple"]["norms"]),
        plugin_J=int(cfg["plugin"]["j_max"]),
        plugin_norms=tuple(cfg["plugin"]["norms"]),
        plugin_rule=ThresholdRule(cfg["plugin"].get("lam", 1.0), cfg["plugin"].get("rho", 1.0)),
        nn=bool(cfg["nn"]),
        twopc_deltas_deg=tuple(cfg["twopc"]["deltas_deg"]),
    )


def build_alternative(alt_cfg, coverage, rng):
    from .simulate import (
        BumpAlternative,
        EnergySpectrum,
        MagneticFieldModel,
        PropagationAlternative,
        SourceMixtureAlternative,
    )

    kind = alt_cfg.get("kind", "null")
    if kind == "null":
        return None
    if kind == "bump":
        center = alt_cfg.get("center_lonlat_deg", [0.0, 0.0])
        return BumpAlternative(
            weight=float(alt_cfg["weight"]),
            width_rad=np.deg2rad(float(alt_cfg["width_deg"])),
            center=sphere.lonlat_to_xyz(center[0], center[1]),
        )
    if kind == "sources":
        spec = SourceMixtureAlternative(
            n_sources=int(alt_cfg["n_sources"]),
            width_rad=np.deg2rad(float(alt_cfg["width_deg"])),
            coverage=coverage,
        )
        spec.realize_sources(rng)
        return spec
    if kind == "physical":
        spec = PropagationAlternative(
            n_sources=int(alt_cfg["n_sources"]),
            spectrum=EnergySpectrum(
                index=float(alt_cfg.get("spectral_index", 4.2)),
                e_min=float(alt_cfg.get("e_min_ev", 6.0e19)),
                e_max=float(alt_cfg.get("e_max_ev", 1.0e21)),
            ),
            fields=MagneticFieldModel(**alt_cfg.get("fields", {})),
            coverage=coverage,
            r_max_mpc=float(alt_cfg.get("r_max_mpc", 70.0)),
        )
        spec.realize_sources(rng)
        return spec
    raise ConfigError(f"unknown alternative kind {kind!r}")


def draw_alternative(alt, coverage, n, rng, data_frame):
    from .simulate import (
        BumpAlternative,
        PropagationAlternative,
        SourceMixtureAlternative,
        sample_bump_mixture,
        sample_source_mixture,
        simulate_propagation,
    )

    if alt is None:
        return sample_null(coverage, n, rng, data_frame), None
    if isinstance(alt, BumpAlternative):
        return sample_bump_mixture(alt, n, rng), None
    if isinstance(alt, SourceMixtureAlternative):
        return sample_source_mixture(alt, n, rng, data_frame), None
    if isinstance(alt, PropagationAlternative):
        return simulate_propagation(alt, n, rng, data_frame)
    raise ConfigError("unsupported alternative object")


# ---------------------------------------------------------------------------
# table storage


def table_path(tables_dir, key, n, cov_id):
    safe = key.replace(":", "-")
    return Path(tables_dir) / f"{safe}_n{n}_{cov_id}.tbl"


def save_tables(tables, tables_dir, n, cov_id):
    Path(tables_dir).mkdir(parents=True, exist_ok=True)
    paths = {}
    for key, tab in tables.items():
        p = table_path(tables_dir, key, n, cov_id)
        tab.save(p)
        paths[key] = str(p)
    return paths


def load_table(tables_dir, key, n, cov_id, frame_hash=None):
    p = table_path(tables_dir, key, n, cov_id)
    if not p.exists():
        raise DataError(
            f"missing null table {p} for n={n}; run 'skyneedle calibrate' with the same config first"
        )
    tab = NullDistributionTable.load(p)
    if tab.meta.get("n") != n:
        raise DataError(f"table {p} was built for n={tab.meta.get('n')}, catalog has n={n}; recalibrate")
    if frame_hash is not None and tab.meta.get("frame_hash") not in (None, frame_hash):
        raise DataError(f"table {p} was built with a different frame; recalibrate")
    return tab


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    cfg = resolve_config(args)
    coverage = build_coverage(cfg)
    rng = np.random.default_rng(cfg["seed"])
    alt = build_alternative(cfg["alternative"], coverage, rng)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    count = args.catalogs
    for r in range(count):
        dirs, energies = draw_alternative(alt, coverage, cfg["n"], rng, cfg["data_frame"])
        cat = Catalog(dirs=dirs, frame=cfg["data_frame"], energies=energies)
        write_catalog(outdir / f"catalog_{r:04d}.csv", cat)
    print(f"seed={cfg['seed']} config_hash={config_hash(cfg)} wrote {count} catalog(s) to {outdir}")
    return 0


def cmd_calibrate(args):
    cfg = resolve_config(args)
    coverage = build_coverage(cfg)
    spec = build_spec(cfg)
    frame = build_frame(cfg) if (spec.multiple_norms or spec.plugin_norms) else None
    tables = build_tables(
        frame,
        coverage,
        n=cfg["n"],
        R=cfg["replicates"],
        seed=cfg["seed"],
        spec=spec,
        data_frame=cfg["data_frame"],
        method=cfg["coeff_method"],
        n_jobs=args.jobs,
    )
    paths = save_tables(tables, cfg["tables_dir"], cfg["n"], coverage.coverage_id())
    if args.csv:
        for key, tab in tables.items():
            tab.to_csv(Path(paths[key]).with_suffix(".csv"))
    print(f"seed={cfg['seed']} config_hash={config_hash(cfg)}")
    for key in sorted(paths):
        print(f"  {key}: {paths[key]} (R={tables[key].R})")
    return 0


def cmd_test(args):
    cfg = resolve_config(args)
    coverage = build_coverage(cfg)
    spec = build_spec(cfg)
    frame = build_frame(cfg)
    try:
        catalog = read_catalog(args.catalog)
    except (OSError, CatalogError) as exc:
        raise DataError(str(exc)) from None
    dirs = catalog.in_frame(cfg["data_frame"])
    n = catalog.n
    alpha = cfg["alpha"]
    cov_id = coverage.coverage_id()
    fh = frame.frame_hash()
    engine = IsotropyEngine(frame, coverage, spec, cfg["data_frame"], cfg["coeff_method"])
    stats = engine.statistics(dirs)
    report = {
        "version": __version__,
        "config_hash": config_hash(cfg),
        "frame_hash": fh,
        "seed": cfg["seed"],
        "n": n,
        "alpha": alpha,
        "jstar_formula": jstar(n),
        "tables": {},
    }
    floor = args.min_replicates
    if spec.multiple_norms:
        block = {}
        for p in spec.multiple_norms:
            tab = load_table(cfg["tables_dir"], f"multiple:{p}", n, cov_id, fh)
            report["tables"][f"multiple:{p}"] = tab.table_id()
            per_j = {}
            for J in range(1, spec.multiple_J + 1):
                d = multiple_decide(stats["multiple"][p], tab, alpha, J=J, n=n, frame_hash=fh, min_replicates=floor)
                per_j[str(J)] = {"p_value": d.p_value, "reject": bool(d.reject), "firing_scale": d.diagnostics["firing_scale"]}
            block[p] = per_j
        report["multiple"] = block
    if spec.plugin_norms:
        block = {}
        for p in spec.plugin_norms:
            tab = load_table(cfg["tables_dir"], f"plugin:{p}", n, cov_id, fh)
            report["tables"][f"plugin:{p}"] = tab.table_id()
            per_j = {}
            for J in range(1, spec.plugin_J + 1):
                pv = tab.pvalue(stats["plugin"][p][J - 1], col=J - 1)
                per_j[str(J)] = {"p_value": pv, "reject": bool(pv <= alpha)}
            block[p] = per_j
        report["plugin"] = block
    if spec.nn:
        tab = load_table(cfg["tables_dir"], "nn", n, cov_id)
        report["tables"]["nn"] = tab.table_id()
        d = scalar_decide("nn", stats["nn"], tab, alpha, n=n, min_replicates=floor)
        report["nn"] = {"statistic": stats["nn"], "p_value": d.p_value, "reject": bool(d.reject)}
    if len(spec.twopc_deltas_deg):
        tab = load_table(cfg["tables_dir"], "twopc", n, cov_id)
        report["tables"]["twopc"] = tab.table_id()
        counts = stats["twopc"]
        pvals = [tab.pvalue(counts[c], col=c) for c in range(len(counts))]
        block = {
            "deltas_deg": list(spec.twopc_deltas_deg),
            "counts": [int(c) for c in counts],
            "p_values": pvals,
            "reject": [bool(p <= alpha) for p in pvals],
        }
        if len(counts) > 1:
            naive, argmin_deg, adjusted = twopc_scan_pvalue(counts, tab, min_replicates=floor)
            block["scan"] = {"naive_min_p": naive, "argmin_delta_deg": argmin_deg, "adjusted_p": adjusted}
        report["twopc"] = block
    text = json.dumps(report, sort_keys=True, indent=2, default=float)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _power_rows(cfg, args):
    coverage = build_coverage(cfg)
    spec = build_spec(cfg)
    frame = build_frame(cfg)
    cov_id = coverage.coverage_id()
    fh = frame.frame_hash()
    alts = cfg["power"]["alternatives"] or [cfg["alternative"]]
    reps = int(cfg["power"]["replicates"])
    floor = args.min_replicates
    rows = []
    for alt_cfg in alts:
        n = int(alt_cfg.get("n", cfg["n"]))
        engine = IsotropyEngine(frame, coverage, spec, cfg["data_frame"], cfg["coeff_method"])
        rng = np.random.default_rng(cfg["seed"])
        alt = build_alternative(alt_cfg, coverage, rng)
        rngs = replicate_rngs(cfg["seed"] + 1, reps)
        batch = []
        for r in rngs:
            dirs, _ = draw_alternative(alt, coverage, n, r, cfg["data_frame"])
            batch.append(engine.statistics(dirs))
        label = alt_cfg.get("label") or alt_cfg.get("kind", "null")
        for p in spec.multiple_norms:
            tab = load_table(cfg["tables_dir"], f"multiple:{p}", n, cov_id, fh)
            for J in range(1, spec.multiple_J + 1):
                pv = np.array([
                    multiple_decide(b["multiple"][p], tab, cfg["alpha"], J=J, n=n, frame_hash=fh, min_replicates=floor).p_value
                    for b in batch
                ])
                rows.append((label, n, "multiple", p, J, pv))
        for p in spec.plugin_norms:
            tab = load_table(cfg["tables_dir"], f"plugin:{p}", n, cov_id, fh)
            for J in range(1, spec.plugin_J + 1):
                pv = np.array([tab.pvalue(b["plugin"][p][J - 1], col=J - 1) for b in batch])
                rows.append((label, n, "plugin", p, J, pv))
        if spec.nn:
            tab = load_table(cfg["tables_dir"], "nn", n, cov_id)
            pv = np.array([tab.pvalue(b["nn"]) for b in batch])
            rows.append((label, n, "nn", "", None, pv))
        for c, d0 in enumerate(spec.twopc_deltas_deg):
            tab = load_table(cfg["tables_dir"], "twopc", n, cov_id)
            pv = np.array([tab.pvalue(b["twopc"][c], col=c) for b in batch])
            rows.append((label, n, "twopc", f"delta{d0}", None, pv))
    return rows, reps


def cmd_power(args):
    cfg = resolve_config(args)
    rows, reps = _power_rows(cfg, args)
    alpha = cfg["alpha"]
    lines = ["alternative,n,method,norm,jstar,alpha,rejections,replicates,power_percent"]
    for label, n, method, norm, J, pv in rows:
        rej = int(np.sum(pv <= alpha))
        lines.append(
            f"{label},{n},{method},{norm},{'' if J is None else J},{alpha},{rej},{reps},{100.0 * rej / reps:.6f}"
        )
    out = "\n".join(lines) + "\n"
    header = f"# seed={cfg['seed']} config_hash={config_hash(cfg)} version={__version__}\n"
    if args.out:
        Path(args.out).write_text(header + out)
    else:
        sys.stdout.write(header + out)
    return 0


def cmd_roc(args):
    cfg = resolve_config(args)
    rows, reps = _power_rows(cfg, args)
    lines = ["alternative,n,method,norm,jstar,alpha,power"]
    for label, n, method, norm, J, pv in rows:
        grid = np.concatenate([[0.0], np.unique(pv), [1.0]])
        for a in grid:
            power = float(np.mean(pv <= a))
            lines.append(f"{label},{n},{method},{norm},{'' if J is None else J},{a:.10g},{power:.6f}")
    out = "\n".join(lines) + "\n"
    header = f"# seed={cfg['seed']} config_hash={config_hash(cfg)} version={__version__}\n"
    if args.out:
        Path(args.out).write_text(header + out)
    else:
        sys.stdout.write(header + out)
    return 0


def make_parser():
    ap = argparse.ArgumentParser(prog="skyneedle", description="Needlet-based isotropy tests for directional data")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML or JSON configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int, help="catalog size")
        p.add_argument("--alpha", type=float)
        p.add_argument("--tables-dir", dest="tables_dir")
        p.add_argument("--min-replicates", type=int, default=1000, help="required null-table floor")

    p = sub.add_parser("simulate", help="write simulated catalog files")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--catalogs", type=int, default=1, help="number of catalogs to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="build Monte-Carlo null tables")
    common(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--csv", action="store_true", help="also export tables as CSV")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("test", help="test a catalog file against the null tables")
    common(p)
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("power", help="estimate rejection rates under configured alternatives")
    common(p)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("roc", help="emit (alpha, power) pairs per method")
    common(p)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_roc)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
