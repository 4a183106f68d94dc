"""
Command-line front end.

``rombuckle offline <cfg>``
    High-fidelity sweeps, POD basis, optional DEIM model, sigma spectrum.
``rombuckle online <cfg>``
    Reduced (and DEIM) branches on the online grid, with high-fidelity
    comparison when enabled: diagram and error CSVs, SVG plots, report.
``rombuckle compare <csv> <csv>``
    Critical values, ordering table and largest output difference.
``rombuckle mesh-export <cfg>``
    Legacy VTK file of the scenario mesh.

Artifacts live in ``--out`` (default ``runs/<scenario name>``). Errors exit
with the code attached to their family in :mod:`rombuckle.errors`.
"""

import argparse
import csv
import json
import sys
import time
from collections import OrderedDict
from pathlib import Path

import numpy as np

from . import __version__, hyperreduction, mesh, rom, solver
from .errors import GridMismatchError, RomBuckleError, StaleArtifactError
from .plotting import write_svg
from .scenario import load_scenario

__all__ = ["run_offline", "run_online", "compare_branches", "mesh_export", "main"]

_BASE_COLUMNS = ("mu", "s", "newton_iters", "converged")


def _out_dir(sc, out):
    path = Path(out) if out is not None else Path("runs") / sc.name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_json(path):
    path = Path(path)
    return json.loads(path.read_text()) if path.exists() else {}


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _say(quiet, *args):
    if not quiet:
        print(*args)


def _fmt(v):
    return repr(float(v))


def _mu_star(branch, threshold):
    return solver.detect_critical(branch, threshold)


def _scale_factors(sc, n_train, n_online):
    out = {}
    if "full_scale_train" in sc.full_scale:
        out["train"] = sc.full_scale["full_scale_train"] / n_train
    if "full_scale_online" in sc.full_scale:
        out["online"] = sc.full_scale["full_scale_online"] / n_online
    return out


# -- offline ------------------------------------------------------------

def run_offline(scenario_file, out=None, quiet=False):
    """Offline phase; returns the report section written to ``report.json``."""
    sc = load_scenario(scenario_file)
    out = _out_dir(sc, out)
    m = sc.build_mesh()
    fp = m.fingerprint()
    settings, plan = sc.newton_settings(), sc.plan("offline")
    use_deim = sc.online["deim"]
    dsettings = hyperreduction.DeimSettings(
        sc.online["deim_eps"], sc.online["deim_modes"],
        jacobian=sc.online["deim_jacobian"], snapshot_source=sc.online["deim_source"])

    sets, forces, branches, series = [], [], [], []
    t0 = time.perf_counter()
    for bp in sc.branches("offline"):
        problem = sc.build_problem(bp, m)
        recorder = None
        if use_deim:
            recorder = hyperreduction.ResidualRecorder(
                problem, converged_only=dsettings.snapshot_source == "converged")
        snaps, branch = rom.collect_snapshots(
            problem, plan, settings, sc.make_seeding(problem), sc.functional,
            bp.tag(), recorder, sc.threshold, sc.stop_after)
        sets.append(snaps)
        if recorder is not None:
            forces.append(recorder.matrix())
        label = bp.label()
        solver.write_branch_csv(out / f"offline_{label}.csv", branch, sc.columns(bp))
        series.append((label, branch.mus, branch.values))
        mu_star = _mu_star(branch, sc.threshold)
        branches.append({"branch": label, "mu_star": mu_star,
                         "n_snapshots": snaps.n_snapshots,
                         "all_converged": bool(branch.converged.all()),
                         "wall_time": branch.wall_time})
        _say(quiet, f"offline {label}: {snaps.n_snapshots} snapshots, mu* = {mu_star}")
    t_hf = time.perf_counter() - t0

    S = rom.SnapshotSet.concatenate(sets)
    t1 = time.perf_counter()
    basis = rom.pod_compress(S, sc.offline["eps_pod"], sc.offline["pod_criterion"],
                             sc.offline["n_max"])
    basis.fingerprint = fp
    sections = OrderedDict(MESHFP=fp.encode())
    deim_info = None
    if use_deim:
        model = hyperreduction.deim_build(np.hstack(forces), dsettings)
        sections["DEIM"] = hyperreduction.pack_deim(model)
        support = model.support(sc.build_problem(sc.branches("offline")[0], m))
        deim_info = {"m": model.m, "available_modes": model.n_available,
                     "force_snapshots": int(sum(f.shape[1] for f in forces)),
                     "support_fraction": support.size / m.n_elements}
    t_compress = time.perf_counter() - t1

    rom.save_basis(out / "basis.bin", basis, sections)
    rom.write_sigma_csv(out / "sigma.csv", basis)
    np.save(out / "snapshots.npy", S.matrix)
    with open(out / "snapshot_params.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu", *sc.columns(sc.branches("offline")[0])])
        for p in S.params:
            w.writerow([_fmt(v) for v in p])
    write_svg(out / "offline_diagram.svg", series, xlabel="mu", ylabel=sc.functional,
              title=f"{sc.name}: offline branches")
    write_svg(out / "sigma.svg", [("sigma", np.arange(1, basis.sigma.size + 1), basis.sigma)],
              xlabel="k", ylabel="log10 sigma_k", title="singular values", logy=True)

    _write_json(out / "manifest.json", {
        "scenario": sc.name, "mesh_fingerprint": fp, "n_dofs": basis.n_dofs,
        "N": basis.N, "deim": use_deim, "functional": sc.functional})
    section = {
        "t_HF_offline": t_hf, "t_compress": t_compress, "N": basis.N,
        "eps_pod": sc.offline["eps_pod"], "n_snapshots": S.n_snapshots,
        "n_dofs": basis.n_dofs, "n_elements": m.n_elements, "branches": branches,
        "deim": deim_info,
        "desk_scale_factor": _scale_factors(sc, plan.n_points, sc.online["n_points"]),
    }
    report = _read_json(out / "report.json")
    report.update(scenario=sc.name, offline=section)
    _write_json(out / "report.json", report)
    _say(quiet, f"basis N = {basis.N}" + (f", DEIM m = {deim_info['m']}" if deim_info else "")
         + f"; artifacts in {out}")
    return section


# -- online -------------------------------------------------------------

def _load_artifacts(sc, out, m):
    path = out / "basis.bin"
    if not path.exists():
        raise StaleArtifactError(f"no basis in {out}; run the offline phase first")
    basis, sections = rom.load_basis(path)
    fp = m.fingerprint()
    stored = sections.get("MESHFP", b"").decode()
    manifest = _read_json(out / "manifest.json")
    if stored != fp or manifest.get("mesh_fingerprint", fp) != fp:
        raise StaleArtifactError("artifacts were built on a different mesh; "
                                 "rerun the offline phase")
    if basis.n_dofs != m.dim * m.n_nodes:
        raise StaleArtifactError("basis size does not match the mesh")
    basis.fingerprint = fp
    model = hyperreduction.unpack_deim(sections["DEIM"]) if "DEIM" in sections else None
    return basis, model


def _branch_rows(branch, cols):
    for p in branch.points:
        yield [_fmt(p.mu), *(_fmt(v) for v in cols.values()), _fmt(p.s),
               int(p.newton_iters), int(bool(p.converged))]


def run_online(scenario_file, out=None, quiet=False):
    """Online phase; returns the report section written to ``report.json``."""
    sc = load_scenario(scenario_file)
    out = _out_dir(sc, out)
    m = sc.build_mesh()
    basis, model = _load_artifacts(sc, out, m)
    use_deim = sc.online["deim"]
    if use_deim and model is None:
        raise StaleArtifactError("scenario enables DEIM but the artifacts hold no DEIM model")
    settings, plan = sc.newton_settings(), sc.plan("online")
    dsettings = hyperreduction.DeimSettings(
        sc.online["deim_eps"], sc.online["deim_modes"],
        jacobian=sc.online["deim_jacobian"], snapshot_source=sc.online["deim_source"])
    thr, stop = sc.threshold, sc.stop_after

    online_branches = sc.branches("online")
    col_names = list(sc.columns(online_branches[0]))
    diagram_rows, error_rows = [], []
    series, err_series, branches = [], [], []
    times = {"t_HF": 0.0, "t_RB": 0.0, "t_RB_DEIM": 0.0}
    points = {"t_HF": 0, "t_RB": 0, "t_RB_DEIM": 0}
    for bp in online_branches:
        problem = sc.build_problem(bp, m)
        seeding = sc.make_seeding(problem)
        cols, label = sc.columns(bp), bp.label()
        rb = solver.continuation_sweep(rom.ReducedProblem(problem, basis), plan, settings,
                                       seeding, sc.functional, threshold=thr, stop_after=stop)
        times["t_RB"] += rb.wall_time
        points["t_RB"] += len(rb.points)
        solver.write_branch_csv(out / f"online_{label}_rb.csv", rb, cols)
        info = {"branch": label, "mu_star_rb": rb.mu_star, "N": basis.N}
        primary = rb
        if use_deim:
            db, dsys = hyperreduction.deim_sweep(problem, basis, model, plan, settings,
                                                 dsettings, seeding, sc.functional, thr, stop)
            times["t_RB_DEIM"] += db.wall_time
            points["t_RB_DEIM"] += len(db.points)
            solver.write_branch_csv(out / f"online_{label}_deim.csv", db, cols)
            n = min(len(db.points), len(rb.points))
            rel = np.abs(db.values[:n] - rb.values[:n]) / np.maximum(np.abs(rb.values[:n]), 1e-300)
            info.update(mu_star_deim=db.mu_star, deim_m=dsys.model.m,
                        support_fraction=dsys.support_fraction,
                        max_rel_ds_deim_vs_rb=float(np.nanmax(rel[rb.values[:n] > 0]))
                        if np.any(rb.values[:n] > 0) else 0.0)
            primary = db
        diagram_rows += list(_branch_rows(primary, cols))
        series.append((label, primary.mus, primary.values))
        if sc.online["compare"]:
            hf = solver.continuation_sweep(problem, plan, settings, seeding, sc.functional,
                                           threshold=thr, stop_after=stop)
            times["t_HF"] += hf.wall_time
            points["t_HF"] += len(hf.points)
            solver.write_branch_csv(out / f"online_{label}_hf.csv", hf, cols)
            report = rom.rb_error_sweep(problem, basis, plan, full_branch=hf,
                                        reduced_branch=rb)
            for mu, err, a, b in zip(report.mus, report.errors, rb.points, hf.points):
                error_rows.append([_fmt(mu), *(_fmt(v) for v in cols.values()), _fmt(err),
                                   _fmt(a.s), _fmt(b.s)])
            err_series.append((label, report.mus, report.errors))
            info.update(mu_star_hf=hf.mu_star, error_max=report.max, error_mean=report.mean,
                        error_argmax_mu=report.argmax_mu, max_norm_u=report.max_norm)
        branches.append(info)
        _say(quiet, "online " + label + ": " + ", ".join(
            f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}"
            for k, v in info.items() if k != "branch"))

    with open(out / "diagram.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu", *col_names, "s", "newton_iters", "converged"])
        w.writerows(diagram_rows)
    write_svg(out / "diagram.svg", series, xlabel="mu", ylabel=sc.functional,
              title=f"{sc.name}: online branches")
    if error_rows:
        with open(out / "errors.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mu", *col_names, "error", "s_rb", "s_hf"])
            w.writerows(error_rows)
        write_svg(out / "errors.svg", err_series, xlabel="mu", ylabel="log10 error",
                  title=f"{sc.name}: reduced basis error", logy=True)

    per_mu = {k: times[k] / points[k] for k in times if points[k]}
    section = {"branches": branches, "N": basis.N, "online_points": plan.n_points,
               **{k: v for k, v in times.items() if points[k]},
               "per_mu": per_mu}
    if "t_HF" in per_mu and "t_RB" in per_mu:
        section["speedup_RB"] = per_mu["t_HF"] / per_mu["t_RB"]
    if "t_HF" in per_mu and "t_RB_DEIM" in per_mu:
        section["speedup_RB_DEIM"] = per_mu["t_HF"] / per_mu["t_RB_DEIM"]
    full = _read_json(out / "report.json")
    full.update(scenario=sc.name, online=section)
    _write_json(out / "report.json", full)
    for key in ("speedup_RB", "speedup_RB_DEIM"):
        if key in section:
            _say(quiet, f"{key} = {section[key]:.2f}")
    return section


# -- compare ------------------------------------------------------------

def _read_diagram(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(_BASE_COLUMNS[:2]) <= set(reader.fieldnames):
            raise GridMismatchError(f"{path} is not a branch CSV")
        extra = [c for c in reader.fieldnames if c not in _BASE_COLUMNS]
        groups = OrderedDict()
        for row in reader:
            key = tuple((c, float(row[c])) for c in extra)
            g = groups.setdefault(key, {"mu": [], "s": [], "converged": []})
            g["mu"].append(float(row["mu"]))
            g["s"].append(float(row["s"]))
            g["converged"].append(int(row.get("converged", 1)))
    out = OrderedDict()
    for key, g in groups.items():
        label = ", ".join(f"{c}={v:g}" for c, v in key) or Path(path).stem
        out[label] = {k: np.array(v) for k, v in g.items()}
    return out


def _critical(b, threshold):
    hit = np.flatnonzero((b["converged"] > 0) & (b["s"] > threshold))
    return float(b["mu"][hit[0]]) if hit.size else None


def compare_branches(diagram_a, diagram_b, threshold=1e-3):
    """Per-branch critical values, ordering table and ``max |s_a - s_b|``.

    Branches inside one file are told apart by their extra columns (for
    instance ``mu_g``). Branches with the same label are paired; two
    single-branch files are paired with each other.

    Raises
    ------
    GridMismatchError
        Paired branches do not share the ``mu`` grid.
    """
    a, b = _read_diagram(diagram_a), _read_diagram(diagram_b)
    if len(a) == 1 and len(b) == 1:
        pairs = [(next(iter(a)), next(iter(b)))]
    else:
        pairs = [(k, k) for k in a if k in b]
    max_ds = 0.0
    for ka, kb in pairs:
        x, y = a[ka], b[kb]
        n = min(x["mu"].size, y["mu"].size)
        if n == 0 or not np.allclose(x["mu"][:n], y["mu"][:n], rtol=1e-12, atol=1e-14):
            raise GridMismatchError(f"branches {ka!r} and {kb!r} are on different mu grids")
        ds = np.abs(x["s"][:n] - y["s"][:n])
        if np.any(np.isfinite(ds)):
            max_ds = max(max_ds, float(np.nanmax(ds)))
    rows = []
    for name, diagram in ((str(diagram_a), a), (str(diagram_b), b)):
        for label, br in diagram.items():
            rows.append({"file": name, "branch": label, "mu_star": _critical(br, threshold)})
    ordering = sorted(rows, key=lambda r: (r["mu_star"] is None, r["mu_star"] or 0.0))
    return {"threshold": threshold, "branches": rows,
            "ordering": [f"{r['file']} [{r['branch']}]" for r in ordering],
            "paired": len(pairs), "max_abs_ds": max_ds}


# -- mesh export --------------------------------------------------------

def mesh_export(scenario_file, out=None, mu_g=None, quiet=False):
    """Write the scenario mesh (optionally mapped to ``mu_g``) as VTK."""
    sc = load_scenario(scenario_file)
    out = _out_dir(sc, out)
    m = sc.build_mesh()
    name = "mesh.vtk"
    if mu_g is not None:
        m = m.with_nodes(sc.stretch_map(mu_g).apply(m.nodes))
        name = f"mesh_mug{mu_g:g}.vtk"
    mesh.write_vtk(m, out / name)
    tags = {t: int(np.sum(m.facet_tags == t)) for t in m.tags()}
    info = {"file": str(out / name), "n_nodes": m.n_nodes, "n_elements": m.n_elements,
            "n_dofs": m.n_nodes * m.dim, "fingerprint": m.fingerprint(), "facets": tags}
    _say(quiet, json.dumps(info, indent=2))
    return info


# -- entry point --------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="rombuckle",
                                description="Reduced-order buckling of hyperelastic beams and tubes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("offline", "high-fidelity sweeps and basis construction"),
                           ("online", "reduced sweeps, errors and timings")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument("scenario")
        c.add_argument("--out", help="artifact directory (default runs/<name>)")
        c.add_argument("-q", "--quiet", action="store_true")
    c = sub.add_parser("compare", help="compare two branch CSVs")
    c.add_argument("diagram_a")
    c.add_argument("diagram_b")
    c.add_argument("--threshold", type=float, default=1e-3)
    c.add_argument("--json", help="also write the summary to this file")
    c = sub.add_parser("mesh-export", help="write the scenario mesh as VTK")
    c.add_argument("scenario")
    c.add_argument("--out")
    c.add_argument("--mu-g", type=float, dest="mu_g")
    c.add_argument("-q", "--quiet", action="store_true")
    return p


def _print_compare(res):
    print(f"{'file':40s} {'branch':24s} mu*")
    for r in res["branches"]:
        mu = "none" if r["mu_star"] is None else f"{r['mu_star']:.6g}"
        print(f"{r['file'][-40:]:40s} {r['branch'][:24]:24s} {mu}")
    print("ordering (earliest buckling first):")
    for k, item in enumerate(res["ordering"], start=1):
        print(f"  {k}. {item}")
    print(f"max |ds| over {res['paired']} paired branch(es): {res['max_abs_ds']:.6g}")


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "offline":
            run_offline(args.scenario, args.out, args.quiet)
        elif args.command == "online":
            run_online(args.scenario, args.out, args.quiet)
        elif args.command == "compare":
            res = compare_branches(args.diagram_a, args.diagram_b, args.threshold)
            _print_compare(res)
            if args.json:
                _write_json(args.json, res)
        else:
            mesh_export(args.scenario, args.out, args.mu_g, args.quiet)
    except RomBuckleError as exc:
        print(f"rombuckle: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"rombuckle: error: {exc}", file=sys.stderr)
        return 2
    return 0
