import numpy as np
import pytest

from specgp.cli import format_error, main
from specgp.data import generate_synthetic, read_csv, write_csv
from specgp.kernels import HyperBox, MaternParams
from specgp.regression import exact_gp_oracle
from specgp.rule import QuadratureRule
from specgp.store import FileRuleStore, rule_key


def test_format_error():
    assert format_error(0.780e-4) == "0.780e-04"
    assert format_error(0.113e-5) == "0.113e-05"
    assert format_error(0.222e-6) == "0.222e-06"


def test_no_command_is_usage_error():
    assert main([]) == 2


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == 0
    assert "export-embedded-rule" in capsys.readouterr().out


def test_unknown_option_is_usage_error():
    assert main(["regress", "--bogus"]) == 2


def test_export_embedded_rule(tmp_path, rule):
    out = tmp_path / "ref.rule"
    assert main(["export-embedded-rule", "--out", str(out)]) == 0
    assert QuadratureRule.load(out) == rule


def test_export_to_stdout(capsys, rule):
    assert main(["export-embedded-rule"]) == 0
    assert QuadratureRule.from_text(capsys.readouterr().out) == rule


def test_synth_writes_csv(tmp_path):
    out = tmp_path / "data.csv"
    assert main(["synth", "--N", "10", "--seed", "4", "--out", str(out)]) == 0
    loaded = read_csv(out)
    np.testing.assert_array_equal(loaded.ys, generate_synthetic(10, 0.5, 4).ys)


def test_build_rejects_inverted_rho():
    assert main(["build", "--box", "-1,1,1.5,3.5,0.5,0.1"]) == 2
    assert main(["build", "--box", "-1,1,1.5,3.5,0.3,0.3"]) == 2


def test_build_uses_store(tmp_path, capsys, rule):
    store_dir = tmp_path / "store"
    key = rule_key(HyperBox(), 1e-5, 100, 200)
    FileRuleStore(store_dir).put(key, rule)
    out = tmp_path / "rule.txt"
    code = main(["build", "--eps", "1e-5", "--out", str(out), "--store", f"file://{store_dir}"])
    assert code == 0
    assert QuadratureRule.load(out) == rule
    printed = capsys.readouterr().out
    assert "cache     hit" in printed
    assert key in printed


def test_rule_from_store(tmp_path, capsys, rule):
    store_dir = tmp_path / "store"
    FileRuleStore(store_dir).put("mykey", rule)
    code = main(
        ["validate", "--rule", "store:mykey", "--store", f"file://{store_dir}", "--nu", "2.5", "--rho", "0.3"]
    )
    assert code == 0
    assert main(["validate", "--rule", "store:other", "--store", f"file://{store_dir}"]) == 2


def test_validate_single_row(capsys):
    assert main(["validate", "--nu", "2.5", "--rho", "0.3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    assert lines[1].split()[:2] == ["2.50", "0.30"]
    assert lines[1].split()[3] == "0.608e-06"
    assert lines[2].startswith("max pointwise error")


def test_validate_malformed_rule(tmp_path):
    bad = tmp_path / "bad.rule"
    bad.write_text("# version=1\n0.5 nope\n")
    assert main(["validate", "--rule", str(bad)]) == 2


def test_regress_small_csv_matches_exact_gp(tmp_path, capsys):
    data_path = tmp_path / "tiny.csv"
    data = generate_synthetic(10, 0.5, 1)
    write_csv(data_path, data)
    out = tmp_path / "pred.csv"
    code = main(
        [
            "regress",
            "--data",
            str(data_path),
            "--nu",
            "2.5",
            "--rho",
            "0.3",
            "--sigma2",
            "0.5",
            "--grid-size",
            "25",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    table = np.loadtxt(out, delimiter=",", skiprows=1)
    assert table.shape == (25, 3)
    mean, var = exact_gp_oracle(MaternParams(2.5, 0.3), data, 0.5, table[:, 0])
    np.testing.assert_allclose(table[:, 1], mean, atol=1e-2)
    np.testing.assert_allclose(table[:, 2], var, atol=1e-2)
    banner = capsys.readouterr().out.splitlines()
    assert banner[1].split()[:5] == ["10", "2.50", "0.30", "0.5", "0.608e-06"]


@pytest.mark.parametrize(
    "args",
    [
        ["--sigma2", "0"],
        ["--nu", "5.0"],
        ["--rho", "0.05"],
        ["--N", "1"],
    ],
)
def test_regress_rejects(args):
    assert main(["regress", "--N", "50", *args]) == 2


def test_regress_missing_data_file(tmp_path):
    assert main(["regress", "--data", str(tmp_path / "absent.csv")]) == 2


def test_regress_reference_run(capsys):
    code = main(["regress", "--N", "100000", "--nu", "3.0", "--rho", "0.1", "--sigma2", "0.5"])
    assert code == 0
    row = capsys.readouterr().out.splitlines()[1].split()
    assert row[0] == "100000"
    assert row[4] == "0.113e-05"


def test_fit_zero_steps(capsys):
    assert main(["fit", "--N", "300", "--steps", "0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert lines[1].split()[:3] == ["0", "2.0000", "0.2000"]


def test_bench_empty_list(capsys):
    assert main(["bench", "--N"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1


def test_bench_rows(capsys):
    assert main(["bench", "--N", "2000", "4000"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [line.split()[0] for line in lines[1:]] == ["2000", "4000"]


def test_bench_solve_spread_is_numerical_failure(monkeypatch):
    timings = iter([0.001, 0.01])
    monkeypatch.setattr("specgp.cli._solve_time", lambda *args: next(timings))
    assert main(["bench", "--N", "2000", "4000"]) == 3


def test_bench_flat_solve_time_passes(monkeypatch, capsys):
    monkeypatch.setattr("specgp.cli._solve_time", lambda *args: 0.002)
    assert main(["bench", "--N", "2000", "4000"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    assert [float(row.split()[2]) for row in rows] == [0.002, 0.002]


def test_unknown_store_scheme_is_usage_error(tmp_path):
    out = tmp_path / "rule.txt"
    assert main(["build", "--store", "ftp://host/rules", "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["validate", "--rule", "store:k", "--store", "ftp://host/rules"]) == 2
