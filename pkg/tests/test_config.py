import copy
import json

import numpy as np
import pytest

from bubblered.config import ConfigError, canonical_json, load_run_config, parse_run_config, select_target
from bubblered.expansions import ladder_K

BASE = {
    "schema_version": 1,
    "n": 5,
    "K": {"kind": "ambient-quadratic", "kappa0": 1.0, "beta": [0.6, 0.1, 0.2, 0.3, 0.4, 0.5]},
    "tau": 1e-4,
    "targets": ["max"],
}


def with_(**kw):
    d = copy.deepcopy(BASE)
    d.update(kw)
    return d


def test_parse_minimal():
    rc = parse_run_config(BASE)
    assert rc.n == 5 and rc.tau == 1e-4 and rc.normalization == "k_tau"
    assert rc.solver.tol == 1e-10
    t = rc.resolve_targets()
    assert np.allclose(t[0].location.coords, np.eye(6)[0])


def test_hash_is_canonical():
    a = parse_run_config(BASE)
    shuffled = dict(reversed(list(copy.deepcopy(BASE).items())))
    assert parse_run_config(shuffled).hash == a.hash
    assert parse_run_config(with_(tau=2e-4)).hash != a.hash
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'


@pytest.mark.parametrize("bad", [
    with_(schema_version=2),
    with_(n=4),
    with_(n=True),
    with_(extra=1),
    with_(tau=-1.0),
    with_(tau_sweep=[1e-3, "x"]),
    with_(targets="max"),
    with_(targets=[[1, 0, 0]]),
    with_(normalization="unit"),
    with_(lambda_grid=[0.5, 2]),
    with_(solver={"tol": 1e-8, "bogus": 1}),
    with_(quadrature={"bogus": 1}),
    with_(K={"kind": "spline"}),
    with_(K={"kind": "ambient-quadratic", "beta": [0.1, 0.2]}),
    with_(configuration={"alpha": [1.0]}),
    [],
])
def test_rejects(bad):
    with pytest.raises(ConfigError):
        parse_run_config(bad)


def test_missing_K():
    d = copy.deepcopy(BASE)
    del d["K"]
    with pytest.raises(ConfigError):
        parse_run_config(d)


def test_selectors():
    K = ladder_K(5)
    assert np.allclose(select_target(K, "index:0").location.coords, np.eye(6)[0])
    assert np.allclose(select_target(K, "index:1").location.coords, -np.eye(6)[0])
    s = select_target(K, "index:2")
    assert s.value == pytest.approx(1.5) and s.morse_index == 4
    assert np.allclose(select_target(K, [0, 0, 0, 0, 0, 2.0]).location.coords, np.eye(6)[5])
    for bad in ("index:99", "index:x", "min", [1, 1, 0, 0, 0, 0]):
        with pytest.raises(ConfigError):
            select_target(K, bad)


def test_explicit_configuration():
    rc = parse_run_config(with_(configuration={"alpha": [1.0], "centers": [[1, 0, 0, 0, 0, 0]],
                                               "lambdas": [50.0]}))
    cfg = rc.explicit_configuration(1e-4)
    assert cfg.q == 1 and cfg.lams[0] == 50.0
    rc = parse_run_config(with_(configuration={"alpha": [1.0], "centers": [[1, 0, 0, 0, 0, 0]],
                                               "lambdas": [0.5]}))
    with pytest.raises(ConfigError):
        rc.explicit_configuration(1e-4)
    with pytest.raises(ConfigError):
        parse_run_config(BASE).explicit_configuration(1e-4)


def test_load(tmp_path):
    p = tmp_path / "rc.json"
    p.write_text(json.dumps(BASE))
    assert load_run_config(str(p)).n == 5
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(str(p))
    with pytest.raises(OSError):
        load_run_config(str(tmp_path / "missing.json"))
