import json

import numpy as np
import pytest

from junction_hj.config import ConfigError, config_hash, parse_config

MINIMAL = """
[[hamiltonians]]
family = "quadratic"

[[hamiltonians]]
family = "quadratic"

[junction]
kind = "flux_limited"
limiter = { kind = "constant", value = 1.0 }

[grid]
branches = 2
normal_length = 1.0
normal_spacing = 0.1

[initial]
kind = "cone"

[time]
final = 0.5
"""


def test_minimal_config_parses():
    cfg = parse_config(MINIMAL)
    assert len(cfg.build_hamiltonians()) == 2
    assert cfg.dim == 0
    grid = cfg.build_grid()
    assert grid.node_count == 21
    f = cfg.build_initial(grid)
    assert f.values.max() == pytest.approx(1.0)
    assert float(cfg.build_limiter()(np.zeros(0))) == 1.0


def test_json_and_toml_agree():
    cfg = parse_config(MINIMAL)
    again = parse_config(json.dumps(cfg.model_dump(mode="json")))
    assert config_hash(cfg) == config_hash(again)


def test_hash_changes_with_content():
    assert config_hash(parse_config(MINIMAL)) != config_hash(parse_config(MINIMAL.replace("final = 0.5", "final = 0.6")))


def _error(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value


def test_misspelled_family_names_the_field():
    err = _error(MINIMAL.replace('family = "quadratic"', 'family = "quadratc"', 1))
    assert err.path == "hamiltonians.0.family"


def test_snapshot_after_horizon_rejected():
    err = _error(MINIMAL.replace("final = 0.5", "final = 0.5\nsnapshots = [0.7]"))
    assert err.path.startswith("time")
    assert "0.7" in err.message


def test_nonpositive_spacing_rejected():
    err = _error(MINIMAL.replace("normal_spacing = 0.1", "normal_spacing = 0.0"))
    assert err.path == "grid.normal_spacing"


def test_branch_count_must_match():
    err = _error(MINIMAL.replace("branches = 2", "branches = 3"))
    assert "branches" in err.message


def test_tangential_dimension_must_match():
    text = MINIMAL.replace('family = "quadratic"', 'family = "quadratic"\nb_prime = [0.0]', 1)
    assert "tangential dimension" in _error(text).message


def test_unknown_key_rejected():
    err = _error(MINIMAL.replace("final = 0.5", "final = 0.5\nfinnal = 1"))
    assert err.path == "time.finnal"


def test_negative_weights_rejected():
    text = MINIMAL.replace('kind = "flux_limited"\nlimiter = { kind = "constant", value = 1.0 }', 'kind = "linear"\nc = 1.0\nw = [1.0, -1.0]')
    assert _error(text).path == "junction.w"


def test_malformed_text():
    assert "malformed TOML" in str(_error("[grid\nbranches = 2"))
    with pytest.raises(ConfigError, match="malformed JSON"):
        parse_config("{not json", "json")


def test_error_serializes():
    d = _error(MINIMAL.replace("branches = 2", "branches = 0")).to_dict()
    assert d["error"] == "config" and d["path"] == "grid.branches"


def test_table_initial_checks_length():
    cfg = parse_config(MINIMAL.replace('kind = "cone"', 'kind = "table"\nvalues = [1.0, 2.0]'))
    with pytest.raises(ConfigError, match="expected 21 values"):
        cfg.build_initial(cfg.build_grid())


def test_affine_initial_values():
    cfg = parse_config(MINIMAL.replace('kind = "cone"', 'kind = "affine"\noffset = 0.5\nslopes = [1.0, -2.0]'))
    full = cfg.build_initial(cfg.build_grid()).full()
    x = np.linspace(0, 1, 11)
    assert np.allclose(full[0], 0.5 + x)
    assert np.allclose(full[1], 0.5 - 2 * x)
    U = cfg.whole_space_initial()(np.array([[-1.0], [2.0]]))
    assert np.allclose(U, [1.5, -3.5])


def test_missing_section_reported():
    cfg = parse_config(MINIMAL)
    with pytest.raises(ConfigError) as info:
        cfg.section("oracle")
    assert info.value.path == "oracle"
