"""Command-line front end: ``nptorus <command> [flags]``.

Exit codes: 0 success, 1 numerical non-convergence, 2 configuration error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .asymptotics import certify_signs
from .cache import ResultCache, canonical_key
from .config import METHODS, ConfigError, RunConfig, build_config, load_config_file
from .geometry import DomainError, TorusShape, identity_deviations
from .modes import mode_table, numerical_range_record
from .quadrature import ConvergenceError
from .spectral import EigenSolverError, convergence_study, mode_spectrum

log = logging.getLogger("nptorus")

EXIT_OK, EXIT_NONCONVERGED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

NUMRANGE_HEADER = ["xi", "k", "l", "s_kl", "ds_kl", "I_spectral", "I_direct", "I_polar",
                   "lead_pred", "sign_verdict", "err_estimate"]
SPECTRUM_HEADER = ["xi", "k", "L", "index", "lambda_A", "lambda_np", "residual"]
ASYMPTOTICS_HEADER = ["xi", "axis", "index", "I_value", "lead_pred", "ratio", "margin"]
CONVERGENCE_HEADER = ["xi", "k", "L", "rank", "top", "bottom", "top_delta", "bottom_delta"]

# identity tolerances checked by geometry-check
GEOMETRY_TOLERANCES = {"fundamental_solution": 1e-12, "normal_projection": 1e-10,
                       "kernel_single": 1e-10, "kernel_np": 1e-10}
# the whole-spectrum cache entry has no single l; this marks it
ALL_MODES = -1


class OutputError(OSError):
    pass


def fmt(v) -> str:
    """17-significant-digit float text; ``None`` becomes an empty field."""
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def run_tasks(fn, tasks, jobs: int):
    """Apply ``fn`` to every task; results come back in task order."""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _cache(cfg: RunConfig, namespace: str) -> ResultCache:
    return ResultCache(cfg.cache_dir, namespace)


# ---------------------------------------------------------------- geometry

def cmd_geometry_check(cfg: RunConfig) -> int:
    report = {"tolerances": GEOMETRY_TOLERANCES, "results": []}
    ok = True
    for xi in cfg.xi:
        dev = identity_deviations(TorusShape(xi))
        passed = all(dev[name] <= tol for name, tol in GEOMETRY_TOLERANCES.items())
        ok &= passed
        report["results"].append({"xi": xi, "max_relative_deviation": dev, "passed": passed})
    report["passed"] = ok
    write_text(cfg.out_dir / "geometry_report.json", json_text(report))
    return EXIT_OK if ok else EXIT_NONCONVERGED


# ---------------------------------------------------------------- numrange

def _numrange_task(task):
    xi, k, l, methods, cfg_tol, cache_root = task
    rel_tol, abs_tol = cfg_tol
    cache = ResultCache(cache_root, "numrange")
    key = canonical_key(xi, k, l, 0, rel_tol, abs_tol)
    hit = cache.get_json(key)
    if hit is not None and all(hit.get(f"I_{m}") is not None for m in methods):
        return hit
    from .quadrature import QuadratureSpec
    spec = QuadratureSpec(rel_tol=rel_tol, abs_tol=abs_tol)
    shape = TorusShape(xi)
    table = mode_table(shape, [k], [l], spec)
    rec = numerical_range_record(shape, k, l, spec, methods, table)
    out = {
        "xi": xi, "k": k, "l": l, "s_kl": rec.s_kl, "ds_kl": rec.ds_kl, "I_spectral": rec.I_spectral,
        "I_direct": rec.I_direct, "I_polar": rec.I_polar, "lead_pred": rec.lead_pred,
        "sign_verdict": rec.sign_verdict, "err_estimate": rec.err_estimate, "converged": rec.converged,
    }
    if rec.converged:
        cache.put_json(key, out)
    return out


def cmd_numrange(cfg: RunConfig) -> int:
    tasks = [(xi, k, l, cfg.methods, (cfg.rel_tol, cfg.abs_tol),
              None if cfg.cache_dir is None else str(cfg.cache_dir))
             for xi in sorted(cfg.xi) for k in range(cfg.k_max + 1) for l in range(cfg.l_max + 1)]
    results = run_tasks(_numrange_task, tasks, cfg.jobs)
    rows = []
    failed = False
    for r, t in zip(results, tasks):
        wanted = set(t[3])
        failed |= not r["converged"]
        rows.append([r["xi"], r["k"], r["l"], r["s_kl"], r["ds_kl"], r["I_spectral"],
                     r["I_direct"] if "direct" in wanted else None,
                     r["I_polar"] if "polar" in wanted else None,
                     r["lead_pred"], r["sign_verdict"], r["err_estimate"]])
    write_text(cfg.out_dir / "numrange.csv", csv_text(NUMRANGE_HEADER, rows))
    return EXIT_NONCONVERGED if failed else EXIT_OK


# ---------------------------------------------------------------- spectrum

def _spectrum_task(task):
    xi, k, L, cfg_tol, cache_root = task
    rel_tol, abs_tol = cfg_tol
    cache = ResultCache(cache_root, "spectrum")
    key = canonical_key(xi, k, ALL_MODES, L, rel_tol, abs_tol)
    hit = cache.get_json(key)
    if hit is not None:
        return hit
    from .quadrature import QuadratureSpec
    spec = QuadratureSpec(rel_tol=rel_tol, abs_tol=abs_tol)
    shape = TorusShape(xi)
    try:
        block = mode_spectrum(shape, k, L, spec)
    except (ConvergenceError, EigenSolverError) as exc:
        return {"xi": xi, "k": k, "L": L, "error": str(exc)}
    out = {
        "xi": xi, "k": k, "L": L, "error": None,
        "records": [[r.index, r.lambda_A, r.lambda_np, r.residual] for r in block],
        "build_err_np": block.build_err_np, "contained": block.contained(),
        "positive": block.positive_count, "negative": block.negative_count,
    }
    cache.put_json(key, out)
    return out


def cmd_spectrum(cfg: RunConfig) -> int:
    tasks = [(xi, k, cfg.L, (cfg.rel_tol, cfg.abs_tol), None if cfg.cache_dir is None else str(cfg.cache_dir))
             for xi in sorted(cfg.xi) for k in range(cfg.k_max + 1)]
    results = run_tasks(_spectrum_task, tasks, cfg.jobs)
    rows = []
    summary = {"L": cfg.L, "per_xi": []}
    failed = False
    for xi in sorted(cfg.xi):
        entry = {"xi": xi, "per_k": {}, "failures": {}, "negative_count": 0, "positive_count": 0,
                 "all_contained": True, "max_build_err_np": 0.0}
        for r in (r for r in results if r["xi"] == xi):
            if r["error"]:
                failed = True
                entry["failures"][str(r["k"])] = r["error"]
                continue
            rows.extend([xi, r["k"], r["L"], *rec] for rec in r["records"])
            entry["per_k"][str(r["k"])] = {"positive": r["positive"], "negative": r["negative"]}
            entry["negative_count"] += r["negative"]
            entry["positive_count"] += r["positive"]
            entry["all_contained"] &= r["contained"]
            entry["max_build_err_np"] = max(entry["max_build_err_np"], r["build_err_np"])
        summary["per_xi"].append(entry)
    summary["negative_count"] = sum(e["negative_count"] for e in summary["per_xi"])
    write_text(cfg.out_dir / "spectrum.csv", csv_text(SPECTRUM_HEADER, rows))
    write_text(cfg.out_dir / "spectrum_summary.json", json_text(summary))
    return EXIT_NONCONVERGED if failed else EXIT_OK


# ---------------------------------------------------------------- asymptotics

def _asymptotics_task(task):
    xi, k_max, l_max, lscan_k, cfg_tol = task
    from .quadrature import QuadratureSpec
    spec = QuadratureSpec(rel_tol=cfg_tol[0], abs_tol=cfg_tol[1])
    kc, lcs = certify_signs(TorusShape(xi), k_max, l_max, spec, lscan_k)
    return xi, kc, lcs


def _axis_label(cert) -> str:
    return "k" if cert.mode_axis == "k" else f"l(k={cert.fixed_index})"


def cmd_asymptotics(cfg: RunConfig) -> int:
    if cfg.k_max < 8 or cfg.l_max < 8:
        raise ConfigError("asymptotic scans need --kmax and --lmax of at least 8")
    tasks = [(xi, cfg.k_max, cfg.l_max, cfg.lscan_k, (cfg.rel_tol, cfg.abs_tol)) for xi in sorted(cfg.xi)]
    results = run_tasks(_asymptotics_task, tasks, cfg.jobs)
    rows, certs = [], []
    for xi, kc, lcs in results:
        for cert in [kc, *lcs]:
            label = _axis_label(cert)
            for i, v, lead, m in zip(cert.indices, cert.values, cert.leads, cert.margins):
                rows.append([xi, label, i, v, lead, v / lead, m])
            certs.append(cert.to_dict())
            plot = "".join(f"{i} {format(v / lead, '.17g')}\n"
                           for i, v, lead in zip(cert.indices, cert.values, cert.leads))
            name = "k" if cert.mode_axis == "k" else f"l_k{cert.fixed_index}"
            write_text(cfg.out_dir / f"plot_xi{xi:g}_{name}.dat", plot)
    write_text(cfg.out_dir / "asymptotics.csv", csv_text(ASYMPTOTICS_HEADER, rows))
    write_text(cfg.out_dir / "certificates.json", json_text(certs))
    return EXIT_OK


# ---------------------------------------------------------------- convergence

def _convergence_task(task):
    xi, k, L_seq, cfg_tol = task
    from .quadrature import QuadratureSpec
    spec = QuadratureSpec(rel_tol=cfg_tol[0], abs_tol=cfg_tol[1])
    return convergence_study(TorusShape(xi), k, L_seq, spec)


def cmd_convergence(cfg: RunConfig) -> int:
    tasks = [(xi, k, cfg.L_seq, (cfg.rel_tol, cfg.abs_tol)) for xi in sorted(cfg.xi) for k in range(cfg.k_max + 1)]
    studies = run_tasks(_convergence_task, tasks, cfg.jobs)
    rows, summary = [], []
    for st in studies:
        for r in st.rows():
            rows.append([st.xi, st.k, r["L"], r["rank"], r["top"], r["bottom"], r["top_delta"], r["bottom_delta"]])
        summary.append({
            "xi": st.xi, "k": st.k, "L_sequence": st.L_sequence,
            "top_deltas_strictly_decreasing": st.top_monotone,
            "negative_counts": st.negative_counts,
            "top": [float(v) for v in st.top[:, 0]],
            "bottom": [float(v) for v in st.bottom[:, 0]],
        })
    write_text(cfg.out_dir / "convergence.csv", csv_text(CONVERGENCE_HEADER, rows))
    write_text(cfg.out_dir / "convergence_summary.json", json_text(summary))
    return EXIT_OK


COMMANDS = {
    "geometry-check": cmd_geometry_check,
    "numrange": cmd_numrange,
    "spectrum": cmd_spectrum,
    "asymptotics": cmd_asymptotics,
    "convergence": cmd_convergence,
}


def _int_list(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--xi", type=float, action="append", help="torus parameter (repeatable)")
    common.add_argument("--kmax", dest="k_max", type=int)
    common.add_argument("--lmax", dest="l_max", type=int)
    common.add_argument("--L", dest="L", type=int, help="truncation: modes l = -L..L")
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", dest="out_dir", type=Path)
    common.add_argument("--cache", dest="cache_dir", type=Path)
    common.add_argument("--method", choices=METHODS)
    common.add_argument("--config", type=Path, help="flat key = value configuration file")
    common.add_argument("--L-seq", dest="L_seq", type=_int_list, help="truncations for convergence, e.g. 16,32,64")
    common.add_argument("--lscan-k", dest="lscan_k", type=_int_list, help="k values for the l-axis scans")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nptorus", description="Neumann-Poincare spectra of tori by Fourier modes.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = build_config(file_values, flags)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
