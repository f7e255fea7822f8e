import re
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact.config import DEFAULTS, RunConfig
from artifact.errors import ConfigError, HypothesisError
from artifact.geometry import Circle, Ellipse
from artifact.potential import compute_cw


def test_empty_config_gives_defaults():
    cfg = RunConfig.from_string("")
    assert cfg.ladder().eps == (0.08, 0.04, 0.02, 0.01, 0.005)
    assert cfg.geometry() == Circle(1.0)
    assert cfg.data().g0 == 0.2 and cfg.data().constant
    assert cfg.n_theta == 32
    assert compute_cw(cfg.potential()) == pytest.approx(8 / 3)


def test_typed_views():
    cfg = RunConfig.from_string(
        "[geometry]\nkind = ellipse\np = 3\nq = 1.5\n"
        "[data]\ng0 = 0.3\namplitude = 0.05\nmode = 2\n"
        "[schedule]\nkind = log\nm = 3\n"
        "[grid]\nnodes_per_eps = 20\n"
        "[potential]\nkind = polynomial\ncoefficients = 1, 0, -2, 0, 1\n"
    )
    assert cfg.geometry() == Ellipse(3.0, 1.5)
    assert cfg.data().amplitude == 0.05 and cfg.data().mode == 2
    assert cfg.schedule().kind == "log" and cfg.schedule().m == 3.0
    assert cfg.grid_spec().nodes_per_eps == 20
    assert compute_cw(cfg.potential()) == pytest.approx(8 / 3, abs=1e-10)


@pytest.mark.parametrize(
    "text, match",
    [
        ("[bogus]\nx = 1\n", "unknown section"),
        ("[ladder]\nsteps = 4\n", "unknown key"),
        ("[ladder]\neps = 0.1, 0.05\n", ">= 4"),
        ("[ladder]\neps = 0.1, 0.2, 0.05, 0.01\n", "decreasing"),
        ("[grid]\ncap = fast\n", "not a number"),
        ("[geometry]\nkind = square\n", "circle or ellipse"),
        ("[schedule]\nkind = cubic\n", "power, log or linear"),
        ("[oned]\nladder = a, b\n", "comma-separated"),
        ("no section header\n", "malformed"),
    ],
)
def test_bad_configs_rejected(text, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_string(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.from_file(tmp_path / "absent.ini")


def test_degenerate_wells_are_a_hypothesis_error():
    cfg = RunConfig.from_string("[potential]\na = 1\nb = 1\n")
    with pytest.raises(HypothesisError):
        cfg.potential()


def test_sha_is_stable_under_formatting():
    a = RunConfig.from_string("[data]\ng0 = 0.2\n")
    b = RunConfig.from_string("[data]\ng0=0.20   ; trailing comment\n")
    assert a.sha256 == b.sha256 == RunConfig.from_string("").sha256
    assert RunConfig.from_string("[data]\ng0 = 0.3\n").sha256 != a.sha256


def test_output_location_does_not_change_hash(tmp_path):
    cfg = RunConfig.from_string("")
    moved = cfg.with_output(tmp_path)
    assert moved.output_dir == tmp_path and moved.sha256 == cfg.sha256
    assert "[output]" in moved.to_ini()


positive = st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False)


@given(
    st.lists(positive, min_size=4, max_size=7, unique=True),
    positive,
    st.integers(1, 8),
    st.sampled_from(["power", "log", "linear"]),
)
def test_round_trip(eps, g0, mode, kind):
    ladder = ", ".join(repr(e) for e in sorted(eps, reverse=True))
    text = f"[ladder]\neps = {ladder}\n[data]\ng0 = {g0!r}\nmode = {mode}\n[schedule]\nkind = {kind}\n"
    cfg = RunConfig.from_string(text)
    again = RunConfig.from_string(cfg.to_ini())
    assert again == cfg and again.sha256 == cfg.sha256
    assert again.ladder().eps == tuple(sorted(eps, reverse=True))
    assert set(again.sections) == set(DEFAULTS)


def test_readme_sample_equals_defaults():
    readme = Path(__file__).resolve().parents[1] / "README.md"
    sample = re.search(r"```ini\n(.*?)```", readme.read_text(), re.S).group(1)
    assert RunConfig.from_string(sample).sha256 == RunConfig.from_string("").sha256
