from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plrates.config import (
    OUTPUT_ENV,
    ConfigError,
    branch_max_eigvec,
    build_noise,
    build_objective,
    dump_config,
    load_config,
    parse_config,
    resolve_theta0,
    run_config,
)
from plrates.noise import MinibatchNoise, SharpQuadraticNoise, ZeroNoise
from plrates.objectives import InterpolatingLeastSquares, QuadraticObjective, RingValleyObjective

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.ini"))

BASE = """
[objective]
kind = quadratic
eigenvalues = 1, 2
seed = 3
[noise]
kind = sharp
sigma = 2
[run]
base_seed = 1
gamma = 0.4
"""


def test_shipped_configs_parse():
    assert CONFIGS
    for path in CONFIGS:
        cfg = load_config(path)
        obj = build_objective(cfg.objective)
        build_noise(cfg.noise, obj)
        run_config(cfg, obj, cfg.gammas()[0])


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_round_trip_is_idempotent(path):
    cfg = load_config(path)
    text = dump_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert dump_config(again) == text


@given(gamma=st.floats(1e-4, 10.0), steps=st.integers(1, 10**6), seed=st.integers(0, 2**32),
       grid=st.lists(st.floats(1e-3, 5.0), min_size=0, max_size=5))
def test_round_trip_property(gamma, steps, seed, grid):
    over = {"run.gamma": repr(gamma), "run.steps": str(steps), "run.base_seed": str(seed)}
    if grid:
        over["run.gamma_grid"] = ", ".join(map(repr, grid))
    cfg = parse_config(BASE, over)
    assert parse_config(dump_config(cfg)) == cfg
    assert cfg.gammas() == (grid or [gamma])


@pytest.mark.parametrize("override,msg", [
    ({"run.steps": "0"}, ">= 1"),
    ({"run.gamma": "-0.1"}, "positive"),
    ({"run.gamma_grid": "0.1, 0.0"}, "positive"),
    ({"objective.kind": "banana"}, "unknown objective"),
    ({"noise.kind": "pink"}, "unknown noise"),
    ({"noise.sigma": "-1"}, "nonnegative"),
    ({"objective.kind": "ring_valley"}, "sharp noise requires"),
    ({"noise.kind": "minibatch"}, "minibatch noise requires"),
    ({"estimator.mode": "mode"}, "median"),
    ({"run.theta0": "spiral"}, "unknown theta0"),
    ({"run.steps": "many"}, "bad value"),
    ({"run.colour": "red"}, "unknown keys"),
    ({"run": "x"}, "section.key"),
    ({"objective.eigenvalues": ""}, "eigenvalues"),
])
def test_validation_errors(override, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(BASE, override)


def test_seed_is_mandatory_and_sections_checked():
    with pytest.raises(ConfigError, match="base_seed"):
        parse_config(BASE.replace("base_seed = 1", ""))
    with pytest.raises(ConfigError, match="unknown sections"):
        parse_config(BASE + "\n[extra]\na = 1\n")
    with pytest.raises(ConfigError):
        parse_config("not an ini file")
    with pytest.raises(ConfigError, match="gamma"):
        parse_config(BASE.replace("gamma = 0.4", ""))


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.ini")


def test_output_env_override(tmp_path, monkeypatch):
    path = tmp_path / "c.ini"
    path.write_text(BASE)
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert load_config(path).output_dir() == tmp_path / "env"
    # an explicit flag beats the environment
    assert load_config(path, {"output.dir": "flag"}).output_dir() == Path("flag")
    monkeypatch.delenv(OUTPUT_ENV)
    assert load_config(path).output_dir() == Path("out")


def test_builders():
    cfg = parse_config(BASE)
    q = build_objective(cfg.objective)
    assert isinstance(q, QuadraticObjective) and isinstance(build_noise(cfg.noise, q), SharpQuadraticNoise)
    cfg = parse_config(BASE, {"objective.kind": "ring_valley", "noise.kind": "zero", "objective.beta": "2"})
    f = build_objective(cfg.objective)
    assert isinstance(f, RingValleyObjective) and f.beta == 2.0
    assert isinstance(build_noise(cfg.noise, f), ZeroNoise)
    cfg = parse_config(BASE, {"objective.kind": "least_squares", "noise.kind": "minibatch", "noise.batch": "4",
                              "objective.n": "6", "objective.d": "9"})
    ls = build_objective(cfg.objective)
    assert isinstance(ls, InterpolatingLeastSquares) and ls.A.shape == (6, 9)
    assert isinstance(build_noise(cfg.noise, ls), MinibatchNoise)
    with pytest.raises(ConfigError):
        build_noise(parse_config(BASE, {"objective.kind": "least_squares", "noise.kind": "minibatch",
                                        "noise.batch": "99"}).noise, ls)
    unrotated = build_objective(parse_config(BASE, {"objective.rotate": "false"}).objective)
    np.testing.assert_array_equal(unrotated.A, np.diag([1.0, 2.0]))


def test_theta0_forms():
    q = QuadraticObjective.from_spectrum([1.0, 2.0], seed=3)
    cfg = parse_config(BASE, {"run.theta0": "0.5, -1"})
    assert cfg.run.theta0 == "explicit"
    np.testing.assert_array_equal(resolve_theta0(cfg, q, 0.4), [0.5, -1.0])
    np.testing.assert_array_equal(resolve_theta0(parse_config(BASE), q, 0.4), [0.0, 0.0])
    g = parse_config(BASE, {"run.theta0": "gaussian", "run.theta0_seed": "4", "run.theta0_scale": "2"})
    np.testing.assert_array_equal(resolve_theta0(g, q, 0.4), 2 * np.random.default_rng(4).standard_normal(2))
    e = parse_config(BASE, {"run.theta0": "eigvec", "run.theta0_index": "1", "run.theta0_scale": "3"})
    np.testing.assert_allclose(q.A @ resolve_theta0(e, q, 0.4), 2 * resolve_theta0(e, q, 0.4), atol=1e-12)
    with pytest.raises(ConfigError, match="shape"):
        resolve_theta0(parse_config(BASE, {"run.theta0": "1, 2, 3"}), q, 0.4)
    with pytest.raises(ConfigError, match="ring_valley"):
        resolve_theta0(parse_config(BASE, {"run.theta0": "offset"}), q, 0.4)
    f = RingValleyObjective()
    off = parse_config(BASE, {"objective.kind": "ring_valley", "noise.kind": "zero", "run.theta0": "offset",
                              "run.theta0_angle": "0.5", "run.theta0_offset": "0.1, 0.2"})
    np.testing.assert_allclose(resolve_theta0(off, f, 0.3), f.offset_point(0.5, (0.1, 0.2)))
    with pytest.raises(ConfigError, match="quadratic"):
        resolve_theta0(parse_config(BASE, {"objective.kind": "ring_valley", "noise.kind": "zero",
                                           "run.theta0": "eigvec"}), f, 0.3)


def test_branch_max_eigvec_picks_dominant_branch():
    q = QuadraticObjective.from_spectrum([1.0, 2.0], seed=3)
    # sigma = 2, gamma = 0.4: mu-branch 0.52 > L-branch 0.36
    v = branch_max_eigvec(q, 2.0, 0.4)
    np.testing.assert_allclose(q.A @ v, v, atol=1e-12)
    # gamma = 0.9 without noise: L-branch dominates
    v = branch_max_eigvec(q, 0.0, 0.9)
    np.testing.assert_allclose(q.A @ v, 2 * v, atol=1e-12)


def test_run_config_carries_run_section():
    cfg = parse_config(BASE, {"run.replicas": "7", "run.record_every": "3", "run.steps": "1e3"})
    q = build_objective(cfg.objective)
    rc = run_config(cfg, q, 0.4)
    assert (rc.replicas, rc.record_every, rc.steps, rc.base_seed, rc.gamma) == (7, 3, 1000, 1, 0.4)
