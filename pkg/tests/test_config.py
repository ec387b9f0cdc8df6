import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from hwstcl.config import RunConfig, describe_error, desk_profile


def test_defaults_match_reference_setting():
    cfg = RunConfig()
    assert cfg.window.T == 8
    assert cfg.graph.tau == 0.44
    assert cfg.model.L == 3
    assert cfg.train.lambda_hw == 0.1
    assert cfg.hwcl.lambda_neg == 0.2
    assert cfg.model.dropout == 0.2
    assert cfg.model.embed_dim == 256
    assert (cfg.train.folds, cfg.train.repeats) == (10, 10)
    assert (cfg.saliency.top_edges, cfg.saliency.top_rois) == (15, 10)


def test_sweep_grids():
    sw = RunConfig().sweep
    assert len(sw.T) == 8 and min(sw.T) == 4 and max(sw.T) == 32
    assert len(sw.tau) == 16 and sw.tau[0] == 0.35 and sw.tau[-1] == 0.5
    assert len(sw.lambda_hw) == 7 and min(sw.lambda_hw) == 0.01 and max(sw.lambda_hw) == 1.0


def test_file_round_trip(tmp_path):
    cfg = desk_profile().with_overrides({"graph.tau": 0.37, "paths.cohort": "x/manifest.json"})
    cfg.save(tmp_path / "c.json")
    back = RunConfig.from_file(tmp_path / "c.json")
    assert back == cfg
    assert back.to_json() == cfg.to_json()


@settings(max_examples=30, deadline=None)
@given(tau=st.floats(0, 0.99), T=st.integers(1, 40), lam=st.floats(0, 5), hidden=st.integers(1, 64))
def test_round_trip_property(tau, T, lam, hidden):
    cfg = RunConfig().with_overrides({"graph.tau": tau, "window.T": T, "train.lambda_hw": lam,
                                      "model.hidden": hidden})
    assert RunConfig.model_validate_json(cfg.to_json()) == cfg


def test_component_configs_follow_sections():
    cfg = RunConfig().with_overrides({"window.T": 12, "graph.use_distance_prior": False,
                                      "train.stage2.epochs": 7})
    assert cfg.window_config().T == 12
    assert cfg.graph_config().use_distance_prior is False
    assert cfg.train_config().stage2.epochs == 7
    assert cfg.model_config_().L == 3
    assert cfg.hwcl_config().lambda_neg == 0.2


@pytest.mark.parametrize("key,value,field", [
    ("graph.tau", 1.5, "graph.tau"),
    ("window.T", 0, "window.T"),
    ("train.stage2.lr", -1, "train.stage2.lr"),
    ("model.direction", "sideways", "model.direction"),
    ("sweep.tau", [], "sweep.tau"),
])
def test_validation_names_the_field(key, value, field):
    with pytest.raises(ValidationError) as info:
        RunConfig().with_overrides({key: value})
    assert describe_error(info.value).startswith(field)


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(KeyError):
        RunConfig().with_overrides({"model.width": 3})
    (tmp_path / "c.json").write_text(json.dumps({"graph": {"tau": 0.4, "bogus": 1}}))
    with pytest.raises(ValidationError) as info:
        RunConfig.from_file(tmp_path / "c.json")
    assert "graph.bogus" in describe_error(info.value)


def test_band_order_checked():
    with pytest.raises(ValidationError):
        RunConfig().with_overrides({"window.band_low_hz": 0.2})


def test_schema_lists_sections():
    schema = json.loads(RunConfig.schema_json())
    assert set(schema["properties"]) == {"window", "graph", "model", "hwcl", "train", "saliency",
                                         "sweep", "paths"}


def test_desk_profile_narrows_widths_only():
    d, p = desk_profile(), RunConfig()
    assert d.model.hidden < p.model.hidden
    assert d.graph == p.graph and d.hwcl == p.hwcl and d.window == p.window
    assert d.train.lambda_hw == p.train.lambda_hw
    assert desk_profile(**{"train.seed": 3}).train.seed == 3
