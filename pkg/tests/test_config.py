import numpy as np
import pytest

from cr_henkin.config import build_domain, compile_h, load_config, parse_config
from cr_henkin.errors import ConfigError


def test_defaults():
    cfg = parse_config("")
    assert cfg["grids"]["resolutions"] == (8, 12, 16)
    assert cfg["dbarb"]["p"] == (1.0, 2.0, np.inf)
    assert build_domain(cfg).name == "ball"


@pytest.mark.parametrize("text,line,field", [
    ("[run]\nseed = 1\nspeed = 3\n", 3, "run.speed"),
    ("[grids]\nresolutions = 8, x\n", 2, "grids.resolutions"),
    ("[dbar]\n\ntolerance = -1\n", 3, "dbar.tolerance"),
    ("[colour]\nx = 1\n", 1, "colour"),
])
def test_errors_carry_location(text, line, field):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line and err.value.field == field
    assert f"line {line}" in str(err.value)


def test_malformed_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("seed = 1\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_empty_family_list():
    with pytest.raises(ConfigError):
        parse_config("[type]\nexponential =\nmonomial =\n")


def test_dalpha_domain():
    dom = build_domain(parse_config("[domain]\nfamily = dalpha\nalpha = 0.5\n"))
    assert dom.params.get("alpha", 0.5) == 0.5


def test_relative_paths(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nout = res\n")
    cfg = load_config(p)
    assert cfg.relative(cfg["run"]["out"]) == tmp_path / "res"


def test_compile_h():
    h = compile_h("z1 - 0.3 + 2*exp(z2) * conj(1j)")
    z = np.array([[0.5, 0.1j]])
    np.testing.assert_allclose(h(z), 0.5 - 0.3 + 2 * np.exp(0.1j) * (-1j))
    for bad in ("__import__('os')", "z3", "z1 +", "abs(z1)"):
        with pytest.raises(ValueError):
            compile_h(bad)
