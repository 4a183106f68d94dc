import numpy as np
import pytest

from rombuckle import scenario as SC
from rombuckle.constitutive import lame_from_young_poisson
from rombuckle.errors import ConfigError

BASE = """\
[geometry]
kind = beam2d
length = 1
height = 0.1
nx = 10
ny = 2

[offline]
mu_stop = 0.06
n_points = 7

[online]
mu_stop = 0.06
n_points = 13
"""


def parse(extra="", base=BASE):
    return SC.parse_scenario(base + extra, "test.cfg")


def test_defaults():
    sc = parse()
    assert sc.name == "test"
    assert sc.functional == "inf_norm_y" and sc.threshold == 1e-3
    assert sc.offline["eps_pod"] == 1e-8 and sc.offline["pod_criterion"] == "squared"
    assert sc.online["deim"] is False and sc.online["compare"] is True
    assert sc.newton_settings().max_iter == 25
    assert sc.plan("online").grid.tolist() == pytest.approx(np.linspace(0, 0.06, 13))
    assert [b.label() for b in sc.branches("offline")] == ["main"]
    assert sc.make_seeding(sc.build_problem()) is None


@pytest.mark.parametrize("extra,line,field", [
    ("[material]\nmodel = mooney\n", 16, "[material] model"),
    ("[material]\npoisson = 0.5\n", 16, "[material] poisson"),
    ("[solver]\nmax_iter = many\n", 16, "[solver] max_iter"),
    ("[output]\nfunctional = inf_norm_z\n", 16, "[output] functional"),
    ("[seeding]\nenabled = yes\namplitude = 0\n", 17, "[seeding] amplitude"),
    ("[loading]\ncompression = neumann\n", None, "[loading] traction_rate"),
    ("[loading]\nbody_force = 1 2 3\n", 16, "[loading] body_force"),
])
def test_errors_name_line_and_field(extra, line, field):
    with pytest.raises(ConfigError) as info:
        parse(extra)
    msg = str(info.value)
    assert msg.startswith("test.cfg" + (f":{line}:" if line else ":"))
    assert field in msg


def test_empty_range_rejected():
    for text in (BASE.replace("n_points = 7", "n_points = 1"),
                 BASE.replace("mu_stop = 0.06\nn_points = 7", "mu_stop = 0\nn_points = 7")):
        with pytest.raises(ConfigError, match="parameter range is empty"):
            parse(base=text)


def test_unknown_section_and_missing_geometry():
    with pytest.raises(ConfigError, match="unknown section"):
        parse("[plasticity]\nyield = 1\n")
    with pytest.raises(ConfigError, match="missing"):
        SC.parse_scenario("[offline]\nmu_stop = 1\n", "x.cfg")
    with pytest.raises(ConfigError, match=r"\[geometry\] nx"):
        parse(base=BASE.replace("nx = 10", "nx = 0"))


def test_material_vertices_and_geometric_branches():
    sc = parse("[material]\nvertices = 1e5 0.25, 1e7 0.42\npairs = 2e6 0.3\n")
    assert [b.label() for b in sc.branches("offline")] == ["E100000_nu0.25", "E1e+07_nu0.42"]
    assert list(sc.columns(sc.branches("online")[0])) == ["E", "nu"]
    assert sc.build_problem(sc.branches("online")[0]).model.lame == lame_from_young_poisson(2e6, 0.3)
    with pytest.raises(ConfigError):
        parse("[material]\npairs = 2e6 0.3\n")
    g = parse("[geometry_parameter]\noffline = 0.5 1.0\nonline = 0.75\n")
    assert [b.mu_g for b in g.branches("offline")] == [0.5, 1.0]
    assert [b.tag() for b in g.branches("online")] == [(0.75,)]
    assert g.stretch_map(1.0).det(1) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        parse("[geometry_parameter]\noffline = 0.5 -1\n")


def test_every_bundled_scenario_parses():
    names = SC.bundled_scenarios()
    assert "svk2d_dirichlet" in names and len(names) >= 10
    for name in names:
        sc = SC.load_scenario(name)
        assert sc.build_mesh().n_elements > 0
        assert sc.branches("offline") and sc.branches("online")


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        SC.load_scenario("/nonexistent/none.cfg")
