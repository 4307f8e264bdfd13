import json
import math

import pytest
from hypothesis import given, strategies as st

from polaronlab.cli import to_toml
from polaronlab.config import DEFAULTS, ConfigError, model_from_config, resolve
from polaronlab.results import RunResult, dumps, fmt_float, table_csv, write


def test_unknown_keys_all_listed():
    with pytest.raises(ConfigError) as exc:
        resolve({"alpah": 1, "solver": {"tol": 1e-9, "tolerance": 1}, "mc": {"sweep": 3}})
    msg = str(exc.value)
    for key in ("alpah", "solver.tolerance", "mc.sweep"):
        assert key in msg


def test_type_errors():
    with pytest.raises(ConfigError):
        resolve({"alpha": "big"})
    with pytest.raises(ConfigError):
        resolve({"mc": {"tune": 1}})


def test_defaults_materialized():
    cfg = resolve({"grid": {"dk": 0.5}})
    assert cfg["mass"]["h"] == 0.125
    assert set(cfg) == set(DEFAULTS)
    assert cfg["solver"] == DEFAULTS["solver"]


def test_toml_round_trip(tmp_path):
    import sys
    tomllib = __import__("tomllib" if sys.version_info >= (3, 11) else "tomli")
    cfg = resolve({"form_factor": {"kind": "froehlich-exp", "kappa": "inf"}, "dimension": 3,
                   "grid": {"dk": 1.0, "kmax": 2.0}})
    back = tomllib.loads(to_toml(cfg))
    assert back == cfg
    m = model_from_config(back)
    assert math.isinf(m.form_factor.kappa) and m.grid.size == 32


@pytest.mark.parametrize("x,s", [(0.1, "0.10000000000000001"), (1.0, "1"), (math.nan, "NaN"),
                                 (-math.inf, "-Infinity")])
def test_fmt_float(x, s):
    assert fmt_float(x) == s


@given(st.floats(allow_nan=False))
def test_fmt_float_round_trips(x):
    assert float(fmt_float(x)) == x


def test_run_result_round_trip(tmp_path):
    r = RunResult("mass", {"alpha": 0.1, "grid": {"dk": 0.25}}, {"seed": 3},
                  {"m": {"value": 1 / 3, "error": 1e-12}, "rows": [{"h": 0.1, "raw": 2 / 3}]}, ["w"])
    back = RunResult.from_json(r.to_json())
    assert back.as_dict() == r.as_dict()
    assert back.outputs["m"]["value"] == 1 / 3
    paths = write(r, tmp_path, "csv")
    assert [p.split("/")[-1] for p in paths] == ["mass.json", "mass_rows.csv"]
    assert (tmp_path / "mass_rows.csv").read_text() == "h,raw\n0.10000000000000001,0.66666666666666663\n"


def test_dumps_sorted_and_valid():
    text = dumps({"b": [1.5, 2], "a": {"y": True, "x": None}})
    assert json.loads(text) == {"a": {"x": None, "y": True}, "b": [1.5, 2]}
    assert text.index('"a"') < text.index('"b"')
    assert table_csv([{"k": [0.5, 1.0], "ok": False}]) == "k,ok\n0.5 1,false\n"
