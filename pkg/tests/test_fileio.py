import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trilat import fileio
from trilat.errors import ParseError, ProblemError
from trilat.model import Mode, ObservationSet, ProblemSpec, Station
from trilat.numeric import SolverConfig

REF = """\
format = "trilat-problem/1"
mode = "planar2"
z0 = 0.0

[[station]]
id = "A"
u = 0.0
v = 0.0

[[station]]
id = "B"
u = 4.0
v = 0.0

[[observation]]
station = "A"
distance = 2.23606797749979

[[observation]]
station = "B"
distance = 3.605551275463989
"""


def test_distances_squared_on_ingestion():
    parsed = fileio.parse_problem_text(REF)
    np.testing.assert_allclose(parsed.spec.L, [5.0, 13.0], rtol=1e-15)
    assert len(parsed.ingestion) == 2
    assert parsed.ingestion[0]["note"] == "distance squared on ingestion"
    assert fileio.parse_problem(io.StringIO(REF)) == parsed.spec


def test_file_source(tmp_path):
    path = tmp_path / "p.toml"
    path.write_text(REF)
    assert fileio.parse_problem(path) == fileio.parse_problem(str(path))


def test_distance_sigma_converted():
    text = REF.replace('distance = 2.23606797749979', 'distance = 2.0\nsigma = 0.01').replace(
        'distance = 3.605551275463989', 'distance = 3.0\nsigma = 0.02')
    spec = fileio.parse_problem_text(text).spec
    assert spec.observations.sigmas == pytest.approx((0.04, 0.12))


def test_wrong_station_count():
    text = REF + '\n[[station]]\nid = "C"\nu = 1.0\nv = 1.0\n[[observation]]\nstation = "C"\nsquared_distance = 2.0\n'
    with pytest.raises(ProblemError, match="exactly 2 stations"):
        fileio.parse_problem_text(text)


def test_non_diagonal_weights_rejected():
    text = REF.replace('z0 = 0.0', 'z0 = 0.0\nweight_matrix = [[1.0, 0.5], [0.5, 1.0]]')
    with pytest.raises(ProblemError, match="only diagonal weight matrices"):
        fileio.parse_problem_text(text)
    text = REF.replace('z0 = 0.0', 'z0 = 0.0\nweight_matrix = [[1.0, 0.0], [0.0, 3.0]]')
    assert fileio.parse_problem_text(text).spec.observations.weights == (1.0, 3.0)


def test_syntax_error_location():
    with pytest.raises(ParseError) as exc:
        fileio.parse_problem_text(REF.replace('u = 4.0', 'u = = 4.0'))
    assert exc.value.details["line"] == 12
    assert exc.value.details["column"] >= 1


@pytest.mark.parametrize(
    "edit, match",
    [
        (('mode = "planar2"', 'mode = "planar9"'), "mode must be"),
        (('z0 = 0.0', ''), "requires z0"),
        (('id = "B"', 'id = "A"'), "duplicate station id"),
        (('u = 4.0', 'u = 4.0\ncolour = "red"'), "unknown key"),
        (('station = "B"', 'station = "Q"'), "unknown station"),
        (('distance = 3.605551275463989', 'distance = 3.6\nsquared_distance = 13.0'), "exactly one"),
        (('format = "trilat-problem/1"', ''), "format tag"),
        (('distance = 3.605551275463989', 'distance = "far"'), "number"),
    ],
)
def test_semantic_errors(edit, match):
    with pytest.raises(ProblemError, match=match):
        fileio.parse_problem_text(REF.replace(*edit))


def test_cli_overrides():
    parsed = fileio.parse_problem_text(REF, z0=1.5)
    assert parsed.spec.z0 == 1.5
    with pytest.raises(ProblemError):
        fileio.parse_problem_text(REF, mode="spatial")


def test_config_table():
    text = REF + '\n[config]\nseed = 7\ngrid_resolution = 51\nalgebraic_frame = "user"\n'
    parsed = fileio.parse_problem_text(text)
    assert parsed.config.seed == 7 and parsed.config.grid_resolution == 51
    assert parsed.frame == "user"
    with pytest.raises(ProblemError):
        fileio.parse_problem_text(REF + '\n[config]\ngrid_resolution = 2\n')
    with pytest.raises(ProblemError):
        fileio.parse_problem_text(REF + '\n[config]\nalgebraic_frame = "rotated"\n')


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
positive = st.floats(1e-3, 1e3, allow_nan=False)


@st.composite
def specs(draw):
    mode = draw(st.sampled_from(list(Mode)))
    n = {Mode.PLANAR2: 2, Mode.PLANAR3: 3, Mode.SPATIAL: draw(st.integers(3, 6))}[mode]
    pts = draw(st.lists(st.tuples(finite, finite, finite), min_size=n, max_size=n, unique=True))
    stations = tuple(Station(*p, id=f"P{k}") for k, p in enumerate(pts))
    values = draw(st.lists(st.floats(0, 1e12), min_size=n, max_size=n))
    weights = draw(st.lists(positive, min_size=n, max_size=n))
    sigmas = draw(st.one_of(st.none(), st.lists(st.floats(0, 10), min_size=n, max_size=n)))
    obs = ObservationSet(tuple(values), tuple(weights), draw(positive), None if sigmas is None else tuple(sigmas))
    z0 = draw(finite) if mode.planar else None
    return ProblemSpec(stations, obs, mode, z0)


@settings(max_examples=200, deadline=None)
@given(specs())
def test_roundtrip(spec):
    assert fileio.parse_problem_text(fileio.serialize_problem(spec)).spec == spec


def test_roundtrip_with_config(ref_spec):
    cfg = SolverConfig(seed=3, search_box=3.5)
    parsed = fileio.parse_problem_text(fileio.serialize_problem(ref_spec, cfg, "user"))
    assert parsed.config == cfg and parsed.frame == "user"


def test_serialize_fills_missing_ids():
    spec = ProblemSpec((Station(0, 0, 0), Station(1, 0, 0)), ObservationSet((1.0, 1.0)), Mode.PLANAR2, 0.0)
    text = fileio.serialize_problem(spec)
    assert 'id = "S1"' in text
    assert fileio.parse_problem_text(text).spec.L.tolist() == [1.0, 1.0]


@settings(max_examples=200)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=6))
def test_report_floats_lossless(xs):
    report = {"values": xs, "nested": {"x": xs[0], "list": [{"v": x} for x in xs]}}
    text = fileio.dumps_report(report)
    back = fileio.loads_report(text)
    assert back["values"] == xs and [d["v"] for d in back["nested"]["list"]] == xs
    assert fileio.dumps_report(back) == text


def test_report_encoding_details():
    text = fileio.dumps_report({"a": 1.0, "b": 0.1, "c": float("nan"), "d": None, "e": True, "f": np.float64(2)})
    data = json.loads(text)
    assert data == {"a": 1.0, "b": 0.1, "c": None, "d": None, "e": True, "f": 2.0}
    assert '"b": 0.10000000000000001' in text
    assert isinstance(data["a"], float)
    assert math.isclose(float(fileio._float(1e300)), 1e300)
