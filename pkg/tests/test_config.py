import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualora.config import ConfigError, RunConfig, config_from_json, load_config, parse_config_text


def test_defaults():
    cfg = RunConfig()
    assert (cfg.d, cfg.k, cfg.r1, cfg.r2) == (32, 32, 8, 8)
    assert cfg.resolved_alpha == 16.0
    assert RunConfig(adapter="lora", r=4).resolved_alpha == 8.0
    assert RunConfig(alpha=3.0).resolved_alpha == 3.0


def test_file_then_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nsteps = 50\nseeds=1,2\nlr=0.1  # trailing\n")
    cfg = load_config(p, {"steps": "7"})
    assert cfg.steps == 7 and cfg.seeds == (1, 2) and cfg.lr == 0.1


@pytest.mark.parametrize("values,field", [
    ({"bogus": "1"}, "bogus"),
    ({"r1": "64"}, "r1"),
    ({"steps": "x"}, "steps"),
    ({"sign_scheme": "tanh"}, "sign scheme"),
    ({"lr": "nan"}, "lr"),
    ({"sparsity": "2"}, "sparsity"),
    ({"check_r1": "9"}, "check_r1"),
    ({"when": "later"}, "when"),
    ({"seeds": ""}, "seeds"),
])
def test_bad_values_name_the_field(values, field):
    with pytest.raises(ConfigError, match=field):
        RunConfig.from_dict(values)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/run.cfg")


def test_malformed_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("a=1\nnot a pair\n")


def test_text_round_trip():
    cfg = RunConfig(alpha=2.5, seeds=(3, 4), ste_gate_on_input=True, variant="no_sign")
    assert RunConfig.from_dict(parse_config_text(cfg.to_text())) == cfg


def test_json_round_trip():
    import json
    cfg = RunConfig(r1_values=(2, 4), optimizer="sgd")
    assert config_from_json(json.dumps(cfg.to_dict())) == cfg


@given(st.integers(1, 32), st.integers(1, 32), st.floats(1e-5, 1.0))
def test_valid_ranks_accepted(r1, r2, lr):
    cfg = RunConfig.from_dict({"r1": str(r1), "r2": str(r2), "lr": repr(lr)})
    assert cfg.r1 == r1 and cfg.lr == lr


def test_bool_parsing():
    assert RunConfig.from_dict({"ste_gate_on_input": "yes"}).ste_gate_on_input is True
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"ste_gate_on_input": "maybe"})
