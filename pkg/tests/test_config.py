import json
import multiprocessing
import textwrap

import numpy as np
import pytest

from delaycert import config as cfgmod
from delaycert.ledger import ResultRecord, append_record, read_records

BASE = textwrap.dedent("""\
    system:
      kind: lti
      A: [[0, 1], [-1, 1]]
      B: [[0], [1]]
      K: [[-1, -3]]
    certification:
      D0: 1.0
      tol: 1e-3
    """)


class TestParse:
    def test_defaults_filled(self):
        cfg = cfgmod.parse_config(BASE)
        assert cfg["certification"]["kappa"] == 0.2
        assert cfg["certification"]["tol"] == 1e-3
        assert cfg["output"]["figures"] is True

    def test_bare_exponent_is_float(self):
        assert isinstance(cfgmod.parse_config(BASE)["certification"]["tol"], float)

    def test_unknown_key_line(self):
        text = BASE.replace("  tol: 1e-3\n", "  tol: 1e-3\n  tolerance: 2\n")
        with pytest.raises(cfgmod.ConfigError, match=r"line 9:"):
            cfgmod.parse_config(text)

    def test_wrong_type_line(self):
        with pytest.raises(cfgmod.ConfigError, match=r"line 7:"):
            cfgmod.parse_config(BASE.replace("D0: 1.0", "D0: fast"))

    def test_missing_section(self):
        with pytest.raises(cfgmod.ConfigError, match="certification"):
            cfgmod.parse_config(BASE.split("certification")[0])

    def test_syntax_error_line(self):
        with pytest.raises(cfgmod.ConfigError, match=r"line \d+: YAML syntax error"):
            cfgmod.parse_config(BASE + "sweep: [1, 2\n")

    def test_empty(self):
        with pytest.raises(cfgmod.ConfigError, match="empty"):
            cfgmod.parse_config("")

    def test_shipped_configs_parse(self):
        import pathlib
        for path in sorted(pathlib.Path(__file__).parents[1].joinpath("configs").glob("*.yaml")):
            cfgmod.load_config(path)

    def test_hash_stable_and_sensitive(self):
        a = cfgmod.parse_config(BASE)
        b = cfgmod.parse_config(BASE)
        assert cfgmod.config_hash(a) == cfgmod.config_hash(b)
        assert cfgmod.config_hash(a, {"kappa": 0.1}) != cfgmod.config_hash(a)

    def test_grid_forms(self):
        cfg = cfgmod.parse_config(BASE + "sweep:\n  D0_grid: {start: 1, stop: 2, num: 3}\n")
        assert cfgmod.d0_grid(cfg) == [1.0, 1.5, 2.0]
        cfg = cfgmod.parse_config(BASE + "sweep:\n  D0_grid: [0.5, 0.7]\n")
        assert cfgmod.d0_grid(cfg) == [0.5, 0.7]

    def test_complex_pairs(self):
        arr = cfgmod.to_array([[[1, 2], 0], [3, [0, -1]]])
        assert np.array_equal(arr, [[1 + 2j, 0], [3, -1j]])
        assert cfgmod.to_array([[1, 2]]).dtype == float


class TestProfile:
    def test_evaluates(self):
        f = cfgmod.compile_profile("-x*(2*L/3 - x)*(L - x)", {"L": 3.0})
        assert np.allclose(f(np.array([0.0, 1.0])), [0.0, -2.0])

    def test_functions(self):
        f = cfgmod.compile_profile("sin(pi*x) + exp(-x)")
        assert f(0.5) == pytest.approx(1 + np.exp(-0.5))

    @pytest.mark.parametrize("expr", [
        "__import__('os').system('true')",
        "x.__class__",
        "open('f')",
        "[x for x in ()]",
        "lambda: 1",
        "y + 1",
        "sin(x, 2)",
    ])
    def test_rejects_unsafe(self, expr):
        with pytest.raises(ValueError):
            cfgmod.compile_profile(expr)

    def test_bad_profile_in_config(self):
        text = BASE + "simulation:\n  t0: 0.5\n  T: 2.0\n  X0: \"os.getcwd()\"\n"
        with pytest.raises(cfgmod.ConfigError, match=r"line 12:"):
            cfgmod.parse_config(text)


def _append_many(args):
    path, i = args
    for j in range(20):
        append_record(path, ResultRecord("certify", f"h{i}-{j}", {"v": j}))


class TestLedger:
    def test_duplicate_flag(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        first = append_record(path, ResultRecord("certify", "abc", {"delta": 0.1}))
        second = append_record(path, ResultRecord("certify", "abc", {"delta": 0.1}))
        other = append_record(path, ResultRecord("sweep", "abc"))
        assert not first.duplicate and second.duplicate and not other.duplicate
        assert len(read_records(path)) == 3

    def test_concurrent_appends(self, tmp_path):
        path = str(tmp_path / "ledger.jsonl")
        with multiprocessing.get_context("fork").Pool(3) as pool:
            pool.map(_append_many, [(path, i) for i in range(3)])
        with open(path) as fh:
            lines = fh.read().splitlines()
        assert len(lines) == 60
        for line in lines:
            json.loads(line)
