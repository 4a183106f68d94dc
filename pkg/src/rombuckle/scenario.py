"""
Scenario files: INI-style descriptions of one buckling study.

A scenario fixes the geometry and mesh, the material, the loading, the
parameter ranges for the offline and online phases, the output functional
and the seeding policy. The grammar is documented in the README; every key
has a default except the geometry dimensions.

Values that hold several numbers are whitespace separated (``0 -1000``);
lists of tuples are comma separated (``1e5 0.25, 1e7 0.25``).
"""

import configparser
import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import assembly, constitutive, mesh, solver
from .errors import ConfigError, InvalidGeometryError, RomBuckleError

__all__ = ["Scenario", "BranchSpec", "bundled_scenarios", "load_scenario", "parse_scenario"]

_SECTIONS = ("scenario", "geometry", "material", "loading", "geometry_parameter",
             "offline", "online", "solver", "output", "seeding")

_GEOMETRY_KEYS = {
    "beam2d": ("length", "height", "nx", "ny"),
    "beam3d": ("length", "width", "height", "nx", "ny", "nz"),
    "tube": ("r_inner", "r_outer", "length", "n_circ", "n_rad", "n_axial"),
}

_MAP_KINDS = {"beam2d": "beam2d_semilength", "tube": "tube_semilength"}


@dataclass(frozen=True)
class BranchSpec:
    """Parameters that stay fixed along one branch."""

    mu_g: float = None
    young: float = None
    poisson: float = None

    def columns(self, geometric, material):
        cols = {}
        if geometric:
            cols["mu_g"] = self.mu_g
        if material:
            cols["E"] = self.young
            cols["nu"] = self.poisson
        return cols

    def label(self):
        parts = []
        if self.mu_g is not None:
            parts.append(f"mug{self.mu_g:g}")
        if self.young is not None:
            parts.append(f"E{self.young:g}_nu{self.poisson:g}")
        return "_".join(parts) or "main"

    def tag(self):
        return tuple(v for v in (self.mu_g, self.young, self.poisson) if v is not None)


class _Reader:
    """Typed access to a ConfigParser that reports the offending line."""

    def __init__(self, parser, text, source):
        self.parser = parser
        self.lines = text.splitlines()
        self.source = source

    def line_of(self, section, key=None):
        current = None
        for n, raw in enumerate(self.lines, start=1):
            line = raw.strip()
            m = re.fullmatch(r"\[([^\]]+)\]", line)
            if m:
                current = m.group(1).strip()
                if key is None and current == section:
                    return n
                continue
            if current == section and key is not None:
                k = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
                if k == key:
                    return n
        return None

    def fail(self, section, key, message):
        n = self.line_of(section, key)
        where = f"{self.source}" + (f":{n}" if n else "")
        field_name = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigError(f"{where}: {field_name}: {message}")

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def raw(self, section, key, default=None, required=False):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if required:
            self.fail(section, key, "missing required value")
        return default

    def text(self, section, key, default=None, choices=None, required=False):
        v = self.raw(section, key, default, required)
        if v is not None and choices is not None and v not in choices:
            self.fail(section, key, f"expected one of {', '.join(choices)}, got {v!r}")
        return v

    def number(self, section, key, default=None, required=False, kind=float):
        v = self.raw(section, key, None, required)
        if v is None:
            return default
        try:
            return kind(v)
        except ValueError:
            self.fail(section, key, f"not a valid {kind.__name__}: {v!r}")

    def integer(self, section, key, default=None, required=False):
        return self.number(section, key, default, required, int)

    def flag(self, section, key, default=False):
        if not self.parser.has_option(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            self.fail(section, key, "expected yes/no")

    def vector(self, section, key, default=None, size=None):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            out = tuple(float(t) for t in v.replace(",", " ").split())
        except ValueError:
            self.fail(section, key, f"not a list of numbers: {v!r}")
        if size is not None and len(out) != size:
            self.fail(section, key, f"expected {size} numbers, got {len(out)}")
        return out

    def pairs(self, section, key):
        v = self.raw(section, key)
        if v is None:
            return None
        out = []
        for chunk in v.split(","):
            try:
                a, b = (float(t) for t in chunk.split())
            except ValueError:
                self.fail(section, key, f"expected 'E nu' pairs, got {chunk.strip()!r}")
            out.append((a, b))
        if not out:
            self.fail(section, key, "empty list")
        return out


@dataclass
class Scenario:
    """Everything needed to run the offline and online phases of one study."""

    name: str
    description: str
    geometry: dict
    material: dict
    loading: dict
    geometric: dict
    offline: dict
    online: dict
    solver: dict
    output: dict
    seeding: dict
    source: str = ""
    full_scale: dict = field(default_factory=dict)

    # -- construction ------------------------------------------------------

    @property
    def dim(self):
        return 2 if self.geometry["kind"] == "beam2d" else 3

    def build_mesh(self):
        g = self.geometry
        right = {"dirichlet": mesh.DIRICHLET_RIGHT,
                 "neumann": mesh.NEUMANN_RIGHT}[self.loading["compression"]]
        if g["kind"] == "beam2d":
            return mesh.build_beam_2d(g["length"], g["height"], g["nx"], g["ny"], right=right)
        if g["kind"] == "beam3d":
            return mesh.build_beam_3d(g["length"], g["width"], g["height"],
                                      g["nx"], g["ny"], g["nz"], right=right)
        return mesh.build_tube_3d(g["r_inner"], g["r_outer"], g["length"],
                                  g["n_circ"], g["n_rad"], g["n_axial"], right=right)

    def boundary_conditions(self, m):
        d, ld = self.dim, self.loading
        left = assembly.DirichletBC(mesh.DIRICHLET_LEFT)
        if ld["compression"] == "dirichlet":
            rate = np.zeros(d)
            rate[int(m.info["axis"])] = -1.0
            comps = None if ld["right_components"] == "all" else (int(m.info["axis"]),)
            right = assembly.DirichletBC(mesh.DIRICHLET_RIGHT, rate=tuple(rate),
                                         components=comps)
            return assembly.BoundaryConditions((left, right), ())
        trac = assembly.NeumannBC(mesh.NEUMANN_RIGHT, value=ld["traction"],
                                  rate=ld["traction_rate"])
        return assembly.BoundaryConditions((left,), (trac,))

    def material_model(self, branch=None):
        young = self.material["young"] if branch is None or branch.young is None else branch.young
        nu = self.material["poisson"] if branch is None or branch.poisson is None else branch.poisson
        return constitutive.MaterialModel.from_young_poisson(self.material["model"], young, nu)

    def geometric_map(self, branch):
        if branch is None or branch.mu_g is None:
            return None
        gp = self.geometric
        return assembly.build_geometric_map(gp["map"], branch.mu_g, gp["split"], gp["reference"])

    def stretch_map(self, mu_g):
        """Geometric map at ``mu_g``, with default settings when none is configured."""
        if self.geometric:
            return self.geometric_map(BranchSpec(mu_g=mu_g))
        kind = _MAP_KINDS.get(self.geometry["kind"])
        if kind is None:
            raise InvalidGeometryError(f"no geometric map for {self.geometry['kind']}")
        return assembly.build_geometric_map(kind, mu_g)

    def build_problem(self, branch=None, m=None):
        m = m if m is not None else self.build_mesh()
        return assembly.HyperelasticProblem(
            m, self.boundary_conditions(m), self.material_model(branch),
            self.loading["body_force"], self.geometric_map(branch),
            self.solver["quadrature"])

    def branches(self, phase):
        """Branch parameter sets for ``phase`` in ``("offline", "online")``."""
        geo = self.geometric.get(phase) if self.geometric else None
        pairs = self.material.get("vertices" if phase == "offline" else "pairs")
        geo = geo or [None]
        pairs = pairs or [(None, None)]
        return [BranchSpec(g, e, n) for g, (e, n) in itertools.product(geo, pairs)]

    @property
    def is_geometric(self):
        return bool(self.geometric)

    @property
    def is_multi_material(self):
        return bool(self.material.get("vertices"))

    def columns(self, branch):
        return branch.columns(self.is_geometric, self.is_multi_material)

    def plan(self, phase):
        p = self.offline if phase == "offline" else self.online
        return solver.ContinuationPlan(p["mu_start"], p["mu_stop"], p["n_points"],
                                       self.solver["max_halvings"])

    def newton_settings(self):
        s = self.solver
        return solver.NewtonSettings(s["abs_tol"], s["rel_tol"], s["max_iter"])

    def make_seeding(self, problem):
        sd = self.seeding
        if not sd["enabled"]:
            return None
        direction = solver.seed_shape(problem.mesh, problem.dofmap, sd["component"],
                                      sd["shape"], sd["amplitude"], sd["sign"])
        return solver.Seeding(direction, sd["threshold"], True, sd["scales"])

    @property
    def functional(self):
        return self.output["functional"]

    @property
    def threshold(self):
        return self.output["threshold"]

    @property
    def stop_after(self):
        return self.output["stop_after"]


def parse_scenario(text, source="<string>"):
    """Parse scenario text; raises :class:`ConfigError` with line/field info."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                       comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    r = _Reader(parser, text, source)
    for sec in parser.sections():
        if sec not in _SECTIONS:
            r.fail(sec, None, "unknown section")
    if not parser.has_section("geometry"):
        raise ConfigError(f"{source}: missing [geometry] section")
    for sec in _SECTIONS:
        if not parser.has_section(sec):
            parser.add_section(sec)

    name = r.text("scenario", "name", Path(source).stem)
    description = r.text("scenario", "description", "")
    full_scale = {k: r.integer("scenario", k)
                  for k in ("full_scale_train", "full_scale_online")
                  if r.has("scenario", k)}

    kind = r.text("geometry", "kind", required=True, choices=tuple(_GEOMETRY_KEYS))
    geometry = {"kind": kind}
    for key in _GEOMETRY_KEYS[kind]:
        is_count = key.startswith("n")
        val = r.integer("geometry", key, required=True) if is_count else \
            r.number("geometry", key, required=True)
        if not val > 0:
            r.fail("geometry", key, "must be positive")
        geometry[key] = val

    dim = 2 if kind == "beam2d" else 3
    material = {
        "model": r.text("material", "model", "svk", choices=("svk", "nh")),
        "young": r.number("material", "young", 1e6),
        "poisson": r.number("material", "poisson", 0.3),
        "vertices": r.pairs("material", "vertices"),
        "pairs": r.pairs("material", "pairs"),
    }
    if material["vertices"] and not material["pairs"]:
        material["pairs"] = material["vertices"]
    if material["pairs"] and not material["vertices"]:
        r.fail("material", "vertices", "online pairs need offline vertices")
    try:
        for e, n in [(material["young"], material["poisson"])] + (material["pairs"] or []) \
                + (material["vertices"] or []):
            constitutive.lame_from_young_poisson(e, n)
    except (ValueError, RomBuckleError) as exc:
        r.fail("material", "poisson", str(exc))

    compression = r.text("loading", "compression", "dirichlet", choices=("dirichlet", "neumann"))
    loading = {
        "compression": compression,
        "body_force": r.vector("loading", "body_force", (0.0,) * dim, dim),
        "traction": r.vector("loading", "traction", (0.0,) * dim, dim),
        "traction_rate": r.vector("loading", "traction_rate", None, dim),
        "right_components": r.text("loading", "right_components", "all",
                                   choices=("all", "axial")),
    }
    if compression == "neumann" and loading["traction_rate"] is None:
        r.fail("loading", "traction_rate", "neumann compression needs a traction rate")

    geometric = {}
    if r.has("geometry_parameter", "offline"):
        if kind not in _MAP_KINDS:
            r.fail("geometry_parameter", "offline", f"no geometric map for {kind}")
        geometric = {
            "map": r.text("geometry_parameter", "map", _MAP_KINDS[kind],
                          choices=tuple(_MAP_KINDS.values())),
            "split": r.number("geometry_parameter", "split"),
            "reference": r.number("geometry_parameter", "reference"),
            "offline": list(r.vector("geometry_parameter", "offline")),
        }
        geometric["online"] = list(r.vector("geometry_parameter", "online",
                                            geometric["offline"]))
        for key in ("offline", "online"):
            vals = geometric[key]
            if not vals or min(vals) <= 0:
                r.fail("geometry_parameter", key, "need positive values")

    phases = {}
    for sec, n_default in (("offline", 201), ("online", 401)):
        ph = {
            "mu_start": r.number(sec, "mu_start", 0.0),
            "mu_stop": r.number(sec, "mu_stop", required=True),
            "n_points": r.integer(sec, "n_points", n_default),
        }
        if ph["n_points"] < 2 or not ph["mu_stop"] > ph["mu_start"]:
            r.fail(sec, "mu_stop", "parameter range is empty")
        phases[sec] = ph
    phases["offline"].update(
        eps_pod=r.number("offline", "eps_pod", 1e-8),
        pod_criterion=r.text("offline", "pod_criterion", "squared",
                             choices=("squared", "linear")),
        n_max=r.integer("offline", "n_max"),
    )
    if not phases["offline"]["eps_pod"] > 0:
        r.fail("offline", "eps_pod", "must be positive")
    deim_modes = r.integer("online", "deim_modes")
    phases["online"].update(
        compare=r.flag("online", "compare", True),
        deim=r.flag("online", "deim", False),
        deim_eps=r.number("online", "deim_eps", 1e-10),
        deim_modes=deim_modes,
        deim_source=r.text("online", "deim_source", "iterates",
                           choices=("iterates", "converged")),
        deim_jacobian=r.text("online", "deim_jacobian", "analytic",
                             choices=("analytic", "fd")),
    )
    if deim_modes is not None and deim_modes < 1:
        r.fail("online", "deim_modes", "must be at least 1")

    solver_opts = {
        "abs_tol": r.number("solver", "abs_tol", 1e-9),
        "rel_tol": r.number("solver", "rel_tol", 1e-10),
        "max_iter": r.integer("solver", "max_iter", 25),
        "max_halvings": r.integer("solver", "max_halvings", 4),
        "quadrature": r.text("solver", "quadrature", "p1", choices=("p1", "high")),
    }
    for key in ("abs_tol", "rel_tol", "max_iter"):
        if not solver_opts[key] > 0:
            r.fail("solver", key, "must be positive")

    default_functional = {"beam2d": "inf_norm_y", "beam3d": "inf_norm_z",
                          "tube": "sum_inf_xy"}[kind]
    functional = r.text("output", "functional", default_functional,
                        choices=("inf_norm_y", "inf_norm_z", "sum_inf_xy"))
    if functional == "inf_norm_z" and dim < 3:
        r.fail("output", "functional", "inf_norm_z needs a 3-D geometry")
    output = {
        "functional": functional,
        "threshold": r.number("output", "threshold", 1e-3),
        "stop_after": r.integer("output", "stop_after"),
    }

    seeding = {
        "enabled": r.flag("seeding", "enabled", False),
        "component": r.integer("seeding", "component", 1),
        "shape": r.text("seeding", "shape", "sine", choices=("sine", "cantilever")),
        "amplitude": r.number("seeding", "amplitude", 0.0),
        "sign": r.number("seeding", "sign", 1.0),
        "threshold": r.number("seeding", "threshold", 1e-2),
        "scales": r.vector("seeding", "scales", (1.0, 2.0, 4.0)),
    }
    if seeding["enabled"]:
        if not 0 <= seeding["component"] < dim:
            r.fail("seeding", "component", f"must lie in [0, {dim - 1}]")
        if not seeding["amplitude"] > 0:
            r.fail("seeding", "amplitude", "must be positive")

    return Scenario(name, description, geometry, material, loading, geometric,
                    phases["offline"], phases["online"], solver_opts, output, seeding,
                    source, full_scale)


BUNDLED = Path(__file__).with_name("scenarios")


def bundled_scenarios():
    """Names of the scenario files shipped with the package."""
    return sorted(p.stem for p in BUNDLED.glob("*.cfg"))


def load_scenario(path):
    """Read and parse a scenario file.

    A bare name such as ``svk2d_dirichlet`` that is not an existing file
    resolves to the bundled scenario of that name.
    """
    path = Path(path)
    if not path.exists() and (BUNDLED / f"{path.name}.cfg").exists():
        path = BUNDLED / f"{path.name}.cfg"
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from exc
    return parse_scenario(text, str(path))
