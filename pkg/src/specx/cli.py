"""Command-line driver: experiment recipes, JSON/CSV persistence, and an
append-only results ledger.

Subcommands: eigs, maximize, glminmax, vc, steklov, index, sweep. A plain
key=value config file can seed any run; flags override it. SPECX_OUT
overrides --out. Exit codes: 0 ok, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys

import numpy as np

from . import __version__, glminmax, harmonic, index, mobius, spectra
from . import mesh as meshmod


class UsageError(ValueError):
    pass


def _parse_config_file(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {line!r}")
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _build_parser():
    p = argparse.ArgumentParser(
        prog="specx",
        description="Conformal eigenvalues, harmonic maps, and relaxed "
                    "min-max energies on triangle meshes")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--surface", choices=["sphere", "torus", "file"],
                        default=None)
        sp.add_argument("--subdiv", type=int, default=None)
        sp.add_argument("--tau", type=str, default=None,
                        help="torus modulus as re,im")
        sp.add_argument("--res", type=int, default=None)
        sp.add_argument("--mesh-file", type=str, default=None)
        sp.add_argument("--density", type=str, default=None,
                        help="per-vertex density file (one value per line)")
        sp.add_argument("--eps", type=str, default=None,
                        help="comma-separated epsilon schedule")
        sp.add_argument("--n", type=int, default=None,
                        help="target sphere dimension")
        sp.add_argument("--grid", type=int, default=None,
                        help="directions per grid shell")
        sp.add_argument("--holes", type=str, default=None,
                        help="hole count or range first..last")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--config", type=str, default=None)
        sp.add_argument("-k", "--count", type=int, default=None,
                        help="number of nontrivial eigenvalues")

    for name in ("eigs", "maximize", "glminmax", "vc", "steklov", "index"):
        add_common(sub.add_parser(name))
    sp = sub.add_parser("sweep")
    sp.add_argument("recipe", choices=["steklov-holes"])
    add_common(sp)
    return p


DEFAULTS = {
    "surface": "sphere", "subdiv": 3, "tau": "0,1", "res": 32,
    "mesh_file": None, "density": None, "eps": "0.2,0.1,0.05", "n": 2,
    "grid": 14, "holes": "1..8", "seed": 0, "out": "specx_out", "count": 5,
}

_INT_KEYS = {"subdiv", "res", "n", "grid", "seed", "count"}


class RunConfig:
    """Resolved configuration: defaults < config file < flags."""

    def __init__(self, args):
        merged = dict(DEFAULTS)
        if args.config:
            file_cfg = _parse_config_file(args.config)
            unknown = set(file_cfg) - set(DEFAULTS)
            if unknown:
                raise UsageError(f"unknown config keys: {sorted(unknown)}")
            merged.update(file_cfg)
        for key in DEFAULTS:
            val = getattr(args, key, None)
            if val is not None:
                merged[key] = val
        for key in _INT_KEYS:
            merged[key] = int(merged[key])
        merged["out"] = os.environ.get("SPECX_OUT", merged["out"])
        self.command = args.command
        self.recipe = getattr(args, "recipe", None)
        self.values = merged

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError as exc:
            raise AttributeError(key) from exc

    @property
    def tau_complex(self):
        try:
            re, im = (float(x) for x in str(self.tau).split(","))
        except ValueError as exc:
            raise UsageError(f"bad --tau {self.tau!r}: want re,im") from exc
        return complex(re, im)

    @property
    def eps_list(self):
        try:
            return [float(x) for x in str(self.eps).split(",") if x]
        except ValueError as exc:
            raise UsageError(f"bad --eps {self.eps!r}") from exc

    @property
    def holes_list(self):
        text = str(self.holes)
        try:
            if ".." in text:
                lo, hi = text.split("..")
                return list(range(int(lo), int(hi) + 1))
            return [int(x) for x in text.split(",") if x]
        except ValueError as exc:
            raise UsageError(f"bad --holes {self.holes!r}") from exc

    def to_json_dict(self):
        doc = {k: self.values[k] for k in sorted(self.values)}
        doc["command"] = self.command
        if self.recipe:
            doc["recipe"] = self.recipe
        return doc


def _build_mesh(cfg):
    if cfg.surface == "sphere":
        return meshmod.build_sphere_mesh(cfg.subdiv)
    if cfg.surface == "torus":
        return meshmod.build_torus_mesh(cfg.tau_complex, cfg.res)
    if not cfg.mesh_file:
        raise UsageError("--surface file needs --mesh-file")
    return meshmod.load_mesh(cfg.mesh_file)


def _load_density(cfg, mesh):
    if cfg.density is None:
        return None
    vals = np.loadtxt(cfg.density)
    if vals.shape != (mesh.num_vertices,):
        raise UsageError("density file length does not match the mesh")
    return meshmod.ConformalDensity(vals).validate(mesh)


def _base_map(cfg, mesh):
    dim = cfg.n + 1
    if cfg.surface == "torus":
        base = harmonic.torus_collapse_map(mesh)
    else:
        base = harmonic.identity_sphere_map(mesh)
    return harmonic.embed_map(base, dim) if dim > 3 else base


def _write_json(cfg, name, payload):
    os.makedirs(cfg.out, exist_ok=True)
    doc = {
        "config": cfg.to_json_dict(),
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "payload": payload,
    }
    path = os.path.join(cfg.out, name)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def _append_ledger(cfg, row):
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "results.csv")
    exists = os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if not exists:
            writer.writerow(["command", "surface", "seed", "quantity",
                             "value"])
        writer.writerow(row)
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_eigs(cfg):
    mesh = _build_mesh(cfg)
    density = _load_density(cfg, mesh)
    if mesh.is_closed:
        spec = spectra.laplace_eigs(mesh, density, k=cfg.count,
                                    seed=cfg.seed)
        kind = "laplace"
    else:
        spec = spectra.steklov_eigs(mesh, k=cfg.count, seed=cfg.seed)
        kind = "steklov"
    payload = spec.to_json_dict()
    payload["kind"] = kind
    _write_json(cfg, "eigs.json", payload)
    _append_ledger(cfg, [cfg.command, cfg.surface, cfg.seed,
                         f"{kind}_lambda1", repr(float(spec.values[1]))])
    return 0


def cmd_maximize(cfg):
    mesh = _build_mesh(cfg)
    rep = spectra.maximize_lambda1_conformal(mesh, seed=cfg.seed)
    _write_json(cfg, "maximize.json", rep.to_json_dict())
    _append_ledger(cfg, [cfg.command, cfg.surface, cfg.seed, "lambda_bar_1",
                         repr(float(rep.lambda_bar))])
    return 0


def cmd_glminmax(cfg):
    mesh = _build_mesh(cfg)
    scale = 1.0 / np.sqrt(meshmod.area(mesh))
    unit = mesh.scaled(scale)
    base = _base_map(cfg, mesh)
    lam1 = float(spectra.laplace_eigs(unit, k=1, seed=cfg.seed).values[1])
    results = []
    warm = None  # track the critical branch across the eps schedule
    for eps in cfg.eps_list:
        spec = glminmax.make_family_spec(unit, base, eps=eps,
                                         seed=cfg.seed, n_dirs=cfg.grid)
        rep = glminmax.minmax_upper(spec)
        start = warm if warm is not None else spec.member(rep.argmax)
        out = glminmax.gl_descend(unit, start, eps)
        warm = out["u"]
        _, agg = harmonic.tension_residual(
            unit, harmonic.SphereMap(harmonic.normalize_rows(warm.values)))
        rep.critical = {"u": warm, "E_eps": out["E_eps"],
                        "gradient_norm": out["gradient_norm"],
                        "tension_residual": agg,
                        "converged": out["converged"],
                        "iterations": out["iterations"]}
        ok, lhs, rhs = glminmax.sandwich_holds(spec, lam1, rep.sup_energy)
        doc = rep.to_json_dict()
        doc["sandwich"] = {"holds": bool(ok), "lhs": lhs, "rhs": rhs,
                           "lambda1": lam1}
        results.append(doc)
        os.makedirs(cfg.out, exist_ok=True)
        glminmax.sweep_to_csv(rep, os.path.join(
            cfg.out, f"glminmax_sweep_eps{eps}.csv"))
        _append_ledger(cfg, [cfg.command, cfg.surface, cfg.seed,
                             f"sup_energy_eps{eps}",
                             repr(float(rep.sup_energy))])
        if not ok:
            _write_json(cfg, "glminmax.json", results)
            raise spectra.SolverError("eigenvalue sandwich violated")
    _write_json(cfg, "glminmax.json", results)
    return 0


def cmd_vc(cfg):
    mesh = _build_mesh(cfg)
    base = _base_map(cfg, mesh)
    out = mobius.conformal_volume(mesh, base, n_dirs=cfg.grid, seed=cfg.seed)
    payload = {"V_c_estimate": float(out["V_c_estimate"]),
               "argmax": [float(x) for x in out["argmax"]],
               "refinement": [float(x) for x in out["refinement"]]}
    _write_json(cfg, "vc.json", payload)
    _append_ledger(cfg, [cfg.command, cfg.surface, cfg.seed, "V_c",
                         repr(payload["V_c_estimate"])])
    return 0


def _punctured(cfg, mesh, n_holes, radius_frac=0.5):
    centers = _hole_centers(mesh, n_holes, cfg.seed)
    spacing = np.sqrt(meshmod.area(mesh) / max(n_holes, 1))
    radius = radius_frac * 0.5 * spacing
    radius = max(radius, 2.1 * mesh.mean_edge_length)
    return meshmod.puncture(mesh, centers, radius)


def _hole_centers(mesh, count, seed):
    """Hole centers: exact lattice on flat tori for square counts, a
    golden-ratio lattice for other counts (both homogenisation-friendly),
    farthest-point sampling on meshes without a flat chart."""
    if not mesh.chart_meta:
        return _spread_centers(mesh, count, seed)
    res = int(mesh.chart_meta["res"])

    def grid_id(x, y):
        return (int(round(y * res)) % res) * res + int(round(x * res)) % res

    k = int(round(np.sqrt(count)))
    if k * k == count:
        return [grid_id((i + 0.5) / k, (j + 0.5) / k)
                for j in range(k) for i in range(k)]
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    return [grid_id((i + 0.5) / count, (i * golden) % 1.0)
            for i in range(count)]


def _spread_centers(mesh, count, seed):
    """Deterministic farthest-point sample of vertex indices."""
    rng = np.random.default_rng(seed)
    first = int(rng.integers(mesh.num_vertices))
    centers = [first]
    dist = meshmod.geodesic_distances(mesh, [first])[0]
    while len(centers) < count:
        nxt = int(np.argmax(dist))
        centers.append(nxt)
        dist = np.minimum(dist,
                          meshmod.geodesic_distances(mesh, [nxt])[0])
    return centers


def cmd_steklov(cfg):
    mesh = _build_mesh(cfg)
    if mesh.is_closed:
        holes = cfg.holes_list[0] if cfg.holes_list else 1
        mesh = _punctured(cfg, mesh, holes)
    spec = spectra.steklov_eigs(mesh, k=cfg.count, seed=cfg.seed)
    payload = spec.to_json_dict()
    payload["boundary_length"] = meshmod.curve_measure(mesh).mass
    _write_json(cfg, "steklov.json", payload)
    _append_ledger(cfg, [cfg.command, cfg.surface, cfg.seed, "sigma_bar_1",
                         repr(float(spec.values[1] * spec.mass))])
    return 0


def cmd_index(cfg):
    mesh = _build_mesh(cfg)
    base = _base_map(cfg, mesh)
    base = harmonic.harmonic_flow(mesh, base, steps=400)
    rep = index.index_report(mesh, base)
    _write_json(cfg, "index.json", rep.to_json_dict())
    _append_ledger(cfg, [cfg.command, cfg.surface, cfg.seed, "ind_S",
                         str(rep.ind_S)])
    return 0


TREND_SLACK = 0.025  # consecutive dips up to this fraction of the
# reference still count as a nondecreasing trend (a mesh-resolution-floor
# extra hole perturbs the eigenvalue by about this much)


def steklov_hole_sweep(mesh, counts, seed=0,
                       fracs=(0.3, 0.4, 0.5, 0.7)):
    """Best sigma_bar_1 per hole count.

    Candidates per count: the uniform layout over a radius grid, plus the
    previous best configuration with one minimal extra hole (which keeps
    the sweep nondecreasing up to the small-hole perturbation).
    Returns rows [(holes, sigma_bar_1, centers, radii)].
    """
    floor = 2.1 * mesh.mean_edge_length
    rows = []
    prev = None  # (centers, radii)

    def evaluate(centers, radii):
        sub = meshmod.puncture(mesh, centers, radii)
        spec = spectra.steklov_eigs(sub, k=1, seed=seed)
        return float(spec.values[1] * spec.mass)

    for holes in counts:
        spacing = np.sqrt(meshmod.area(mesh) / holes)
        best = None
        centers = _hole_centers(mesh, holes, seed)
        for frac in fracs:
            radius = max(frac * 0.5 * spacing, floor)
            try:
                val = evaluate(centers, radius)
            except meshmod.MeshError:
                continue
            if best is None or val > best[0]:
                best = (val, centers, [radius] * holes)
        if prev is not None and len(prev[0]) == holes - 1:
            dist = meshmod.geodesic_distances(mesh, prev[0]).min(axis=0)
            extra = int(np.argmax(dist))
            try:
                cand = (prev[0] + [extra], prev[1] + [floor])
                val = evaluate(*cand)
                if best is None or val > best[0]:
                    best = (val, cand[0], cand[1])
            except meshmod.MeshError:
                pass
        if best is None:
            raise spectra.SolverError(
                f"no feasible puncturing with {holes} holes")
        rows.append((holes, best[0], best[1], best[2]))
        prev = (list(best[1]), list(best[2]))
    return rows


def cmd_sweep(cfg):
    if cfg.recipe != "steklov-holes":
        raise UsageError(f"unknown sweep recipe {cfg.recipe!r}")
    mesh = _build_mesh(cfg)
    ref = spectra.maximize_lambda1_conformal(mesh, seed=cfg.seed)
    lam_ref = ref.lambda_bar
    rows = steklov_hole_sweep(mesh, cfg.holes_list, seed=cfg.seed)
    for holes, sigma_bar, _, _ in rows:
        _append_ledger(cfg, [cfg.command, cfg.surface, cfg.seed,
                             f"sigma_bar_1_holes{holes}", repr(sigma_bar)])
    values = [row[1] for row in rows]
    trend = all(b >= a - TREND_SLACK * lam_ref
                for a, b in zip(values, values[1:]))
    trend = trend and values[-1] > values[0]
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "steklov_holes.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["holes", "sigma_bar_1", "lambda_bar_1_ref",
                         "nondecreasing_trend"])
        for holes, sig, _, _ in rows:
            writer.writerow([holes, repr(sig), repr(lam_ref), trend])
    payload = {"rows": [[int(h), float(s)] for h, s, _, _ in rows],
               "nondecreasing_trend": bool(trend),
               "lambda_bar_ref": float(lam_ref)}
    _write_json(cfg, "sweep.json", payload)
    return 0


_COMMANDS = {
    "eigs": cmd_eigs, "maximize": cmd_maximize, "glminmax": cmd_glminmax,
    "vc": cmd_vc, "steklov": cmd_steklov, "index": cmd_index,
    "sweep": cmd_sweep,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        cfg = RunConfig(args)
        return _COMMANDS[args.command](cfg)
    except (UsageError, FileNotFoundError) as exc:
        print(f"specx: usage error: {exc}", file=sys.stderr)
        return 2
    except (meshmod.MeshError, spectra.SolverError, glminmax.FamilyError,
            harmonic.MapError, np.linalg.LinAlgError) as exc:
        print(f"specx: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
