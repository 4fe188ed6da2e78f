"""``dmol`` command line: forward solves, convergence tables, synthetic data and inversion.

Every command reads a TOML configuration (see :mod:`dmol.config`); ``--set
section.key=value`` overrides single keys. Exit status is 0 on success, 2 for
configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    angles_array,
    apply_overrides,
    build_inverse_config,
    build_problem,
    load_config,
    measurement_settings,
    output_dir,
)
from .errors import ConfigurationError, DMOLError, NumericalError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fmt(x) -> str:
    return f"{x:.16e}"


def dump_json(obj, indent: int = 0) -> str:
    """JSON text with every float written as ``%.16e``."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}"{k}": {dump_json(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, bool)) or v is None for v in obj):
            return "[" + ", ".join(dump_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dump_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return _fmt(x)
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write(path: Path, text: str) -> None:
    path.write_text(text + ("" if text.endswith("\n") else "\n"))


def _sampling(cfg: dict):
    s = cfg.get("sampling", {})
    if "rho" in s:
        rho = np.asarray(s["rho"], dtype=float)
    else:
        rho = np.linspace(float(s.get("rho_min", -4.0)), 0.0, int(s.get("n_rho", 9)))
    if "phi" in s:
        phi = angles_array(s["phi"])
    else:
        phi = None
    return rho, phi, int(s.get("n_phi", 16))


# -- commands ----------------------------------------------------------------------


def cmd_forward(cfg: dict, out: Path) -> dict:
    from .forward import gamma_index, solve_forward

    pb = build_problem(cfg).problem
    sol = solve_forward(pb)
    rho, phi, n_phi = _sampling(cfg)
    if phi is None:
        shape = pb.shape
        phi = shape.phi_min + shape.span * (np.arange(n_phi) + 0.5) / n_phi
    u = sol.evaluate_grid(rho, phi)
    real = sorted(float(g) for g in sol.modes.real_gammas)
    samples = {
        "rho": list(map(float, rho)),
        "phi": list(map(float, phi)),
        "u1": [list(map(float, row)) for row in u[0]],
        "u2": [list(map(float, row)) for row in u[1]],
    }
    spectrum = {
        "M": pb.M,
        "order": pb.order,
        "real_gammas": real,
        "gammas": [[float(g.real), float(g.imag)] for g in sol.modes.all_gammas()],
        "rcond": float(sol.rcond),
    }
    _write(out / "field.json", dump_json(samples))
    _write(out / "spectrum.json", dump_json(spectrum))
    positive = [g for g in real if g > 1e-8]
    summary = {"M": pb.M, "order": pb.order, "smallest_positive_gammas": positive[:3]}
    if len(real) >= 3:
        summary["gamma_3"] = gamma_index(sol, 3)
    return summary


def cmd_convergence(cfg: dict, out: Path, M_list=None) -> dict:
    from .forward import convergence_study

    bundle = build_problem(cfg)
    conv = cfg.get("convergence", {})
    M_list = M_list or conv.get("M_list")
    if not M_list:
        raise ConfigurationError("convergence: no M_list given ([convergence] M_list or --M)")
    reference = conv.get("reference", "exact" if bundle.exact is not None else "refined")
    if reference == "exact" and bundle.exact is None:
        raise ConfigurationError("convergence: reference 'exact' needs dirichlet kind 'crack_exact'")
    report = convergence_study(
        bundle.problem,
        M_list,
        int(conv.get("order", bundle.problem.order)),
        reference=reference,
        exact=bundle.exact,
        gamma_ref=conv.get("gamma_ref"),
        M_ref=int(conv.get("M_ref", 512)),
        order_ref=int(conv.get("order_ref", 2)),
        gamma_j=int(conv.get("gamma_index", 3)),
        with_h1=bool(conv.get("h1", True)),
    )
    report.write_csv(out / "errors.csv")
    return {
        "M": report.M,
        "eig_error": report.eig_error,
        "h1_rel": report.h1_rel,
        "M_ref_used": report.M_ref,
    }


def cmd_synthesize(cfg: dict, out: Path, delta=None, seed=None, data_path=None) -> dict:
    from .discretization import build_mesh
    from .inverse import MeasurementGrid, synthesize_measurements

    pb = build_problem(cfg).problem
    ms = measurement_settings(cfg)
    delta = ms["delta"] if delta is None else float(delta)
    seed = ms["seed"] if seed is None else int(seed)
    inv = build_inverse_config(cfg, pb)
    mesh = build_mesh(pb.domain, inv.M_forward, inv.order_forward, extra_nodes=inv.init.edges)
    if ms["n_ang"] % inv.m:
        raise ConfigurationError(f"measurement n_ang={ms['n_ang']} is not a multiple of m={inv.m}")
    grid = MeasurementGrid.build(
        pb.shape, ms["n_panels"], ms["n_rho_gauss"], ms["rho_min"], ms["n_ang"], ms["n_ang_gauss"], mesh.nodes
    )
    z = synthesize_measurements(pb.material, pb, delta, seed, grid=grid, M_ref=ms["M_ref"], order_ref=ms["order_ref"])
    path = Path(data_path) if data_path else out / "measurement.npz"
    z.save(path)
    return {"file": str(path), "delta": delta, "seed": seed, "M_ref_used": z.meta["M_ref"]}


def cmd_invert(cfg: dict, out: Path, data_path=None) -> dict:
    from .forward import SolveCounter
    from .inverse import MeasurementField, material_hash, run_inversion

    pb = build_problem(cfg).problem
    inv = build_inverse_config(cfg, pb)
    path = Path(data_path) if data_path else out / "measurement.npz"
    if not path.exists():
        raise ConfigurationError(f"measurement file {path} does not exist (run 'dmol synthesize' first)")
    z = MeasurementField.load(path)
    truth = pb.material if z.meta.get("truth_sha256") == material_hash(pb.material) else None
    counter = SolveCounter()
    res = run_inversion(inv, pb, z, truth=truth, counter=counter)
    res.write_history(out / "history.csv")
    _write(out / "coefficients.json", dump_json(res.coefficients_dict()))
    last = res.history[-1]
    return {
        "iterations": len(res.history),
        "stop_reason": res.stop_reason,
        "J": last["J"],
        "l1_rel_error": last["l1_rel_error"],
        "forward_solves": res.forward_solves,
    }


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmol", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="TOML configuration file")
        sp.add_argument("-o", "--out", help="output directory (overrides [output] dir)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    common(sub.add_parser("forward", help="solve one forward problem and write samples and spectrum"))
    sp = sub.add_parser("convergence", help="eigenvalue and H1 errors over a mesh sequence")
    common(sp)
    sp.add_argument("--M", type=int, nargs="+", dest="M_list", help="mesh sizes (overrides [convergence] M_list)")
    sp = sub.add_parser("synthesize", help="write a noisy measurement file for the configured truth")
    common(sp)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--data", help="measurement file to write")
    sp = sub.add_parser("invert", help="reconstruct sector coefficients from a measurement file")
    common(sp)
    sp.add_argument("--data", help="measurement file to read")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = apply_overrides(load_config(args.config), args.set)
        out = output_dir(cfg, args.out)
        if args.command == "forward":
            summary = cmd_forward(cfg, out)
        elif args.command == "convergence":
            summary = cmd_convergence(cfg, out, args.M_list)
        elif args.command == "synthesize":
            summary = cmd_synthesize(cfg, out, args.delta, args.seed, args.data)
        else:
            summary = cmd_invert(cfg, out, args.data)
    except NumericalError as exc:
        print(f"dmol: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DMOLError, KeyError, ValueError) as exc:
        print(f"dmol: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(dump_json(summary))
    logging.getLogger("dmol").info("finished in %.1f s", time.perf_counter() - t0)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
