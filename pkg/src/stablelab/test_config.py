"""Experiment files: parsing, matrices, and mapping onto ExperimentConfig."""

import pytest

from stablelab.config import build_config, load_config, load_raw, parse_matrix, parse_text, raw_alpha
from stablelab.errors import ConditionViolation, UsageError

EXAMPLE = """
# two directions, one of rank one
dim = 2
alpha = 0.75
rho = -0.5
p = 0.7
beta = 1.0
t0 = 4.0
K = 8
direction = 0.75 0.25 ; 0.25 0.5
direction = 0.5 0.3 ; 0.5 0.3
weight = 0.25
weight = 0.75
drift_samples = 2000
n_list = 64, 256
replicas = 5000
probe = one
probe = coord:1   # first coordinate
kernel = triangle
kernel_width = 2
resolution = 16
seed = 7
"""


# --- Parsing -------------------------------------------------------------------


def test_parse_text_collects_repeated_keys():
    raw = parse_text(EXAMPLE)
    assert raw["direction"] == ["0.75 0.25 ; 0.25 0.5", "0.5 0.3 ; 0.5 0.3"]
    assert raw["probe"] == ["one", "coord:1"]
    assert raw["seed"] == ["7"]


@pytest.mark.parametrize(
    "text, message",
    [
        ("dim = 2\nalpha", "<string>:2: expected 'key = value'"),
        ("dim =", "expected 'key = value'"),
        ("dim = 2\n\ncolour = red", "<string>:3: unknown key 'colour'"),
        ("seed = 1\nseed = 2", "given more than once"),
    ],
)
def test_parse_text_errors_name_the_line(text, message):
    with pytest.raises(UsageError, match=message):
        parse_text(text)


def test_parse_matrix():
    assert parse_matrix("1 2 ; 3 4") == [[1.0, 2.0], [3.0, 4.0]]
    assert parse_matrix("0.5") == [[0.5]]
    with pytest.raises(UsageError, match="square"):
        parse_matrix("1 2 ; 3")
    with pytest.raises(UsageError, match="numbers"):
        parse_matrix("1 x ; 3 4")


def test_load_raw_reports_a_missing_file(tmp_path):
    with pytest.raises(UsageError, match="not found"):
        load_raw(tmp_path / "absent.cfg")


def test_raw_alpha():
    assert raw_alpha({"alpha": ["1.25"]}) == 1.25
    with pytest.raises(UsageError, match="alpha"):
        raw_alpha({})


# --- Mapping -------------------------------------------------------------------


def test_build_config_maps_every_section():
    config = build_config(parse_text(EXAMPLE))
    spec = config.ensemble
    assert spec.dim == 2
    assert spec.K == 8.0
    assert spec.drift_samples == 2000
    assert spec.radial.alpha == 0.75
    assert spec.radial.beta == 1.0
    assert spec.directions.matrices == [[[0.75, 0.25], [0.25, 0.5]], [[0.5, 0.3], [0.5, 0.3]]]
    assert spec.directions.weights == [0.25, 0.75]
    assert config.n_list == (64, 256)
    assert config.replicas == 5000
    assert [p.name for p in config.probes] == ["one", "coord:1"]
    assert config.kernel.kind == "triangle"
    assert config.kernel.width == 2.0
    assert config.operator.resolution == 16
    assert config.seed == 7


def test_load_config_from_a_file(tmp_path):
    path = tmp_path / "experiment.cfg"
    path.write_text(EXAMPLE, encoding="utf-8")
    assert load_config(path).seed == 7


@pytest.mark.parametrize("key", ["dim", "alpha", "rho", "p", "t0"])
def test_required_keys(key):
    lines = [line for line in EXAMPLE.splitlines() if not line.startswith(f"{key} =")]
    with pytest.raises(UsageError, match=f"missing required key '{key}'"):
        build_config(parse_text("\n".join(lines)))


def test_bad_numbers_are_usage_errors():
    with pytest.raises(UsageError, match="replicas must be a int"):
        build_config(parse_text(EXAMPLE.replace("replicas = 5000", "replicas = many")))
    with pytest.raises(UsageError, match="n_list"):
        build_config(parse_text(EXAMPLE.replace("n_list = 64, 256", "n_list = 64, lots")))


def test_invalid_values_become_usage_errors():
    with pytest.raises(UsageError, match="invalid experiment config"):
        build_config(parse_text(EXAMPLE.replace("replicas = 5000", "replicas = 10")))
    with pytest.raises(UsageError, match="Malformed probe"):
        build_config(parse_text(EXAMPLE.replace("probe = one", "probe = coord:x")))


def test_condition_violations_pass_through():
    with pytest.raises(ConditionViolation) as excinfo:
        build_config(parse_text(EXAMPLE.replace("rho = -0.5", "rho = 0.5")))
    assert excinfo.value.condition == 4
