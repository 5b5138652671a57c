import numpy as np
import pytest

from specgp.errors import DomainError, RuleFormatError
from specgp.kernels import HyperBox
from specgp.rule import EMBEDDED_L2_ERRORS, QuadratureRule, resolve_rule


def test_embedded_rule(rule):
    assert rule.m == 86
    assert rule.loose
    assert rule.box == HyperBox()
    assert rule.epsilon == 1e-5
    assert rule.certified_error == 2e-5
    assert np.all(rule.weights > 0)
    assert np.all(np.diff(rule.nodes) > 0)
    assert rule.meta["source"] == "reference"


def test_embedded_table_covers_grid():
    assert len(EMBEDDED_L2_ERRORS) == 15
    assert EMBEDDED_L2_ERRORS[(1.5, 0.1)] == 0.780e-4
    assert EMBEDDED_L2_ERRORS[(3.5, 0.5)] == 0.222e-6


def test_text_format_is_lossless(rule):
    again = QuadratureRule.from_text(rule.to_text())
    assert again == rule
    assert again.meta == rule.meta


def test_save_and_load(tmp_path, rule):
    path = tmp_path / "rule.txt"
    rule.save(path)
    assert resolve_rule(str(path)) == rule
    assert resolve_rule("embedded") == rule


def test_rule_is_immutable(rule):
    with pytest.raises(ValueError):
        rule.weights[0] = 1.0


def _text(rows: str, **header: str) -> str:
    fields = {
        "version": "1",
        "a": "-1.0",
        "b": "1.0",
        "nu_lo": "1.5",
        "nu_hi": "3.5",
        "rho_lo": "0.1",
        "rho_hi": "0.5",
        "epsilon": "1e-05",
        "m": "2",
    }
    fields.update(header)
    lines = [f"# {k}={v}" for k, v in fields.items() if v is not None]
    return "\n".join(lines) + "\n" + rows


def test_minimal_text_parses():
    parsed = QuadratureRule.from_text(_text("0.5 0.25\n1.5 0.125\n", tag="x"))
    np.testing.assert_array_equal(parsed.nodes, [0.5, 1.5])
    np.testing.assert_array_equal(parsed.weights, [0.25, 0.125])
    assert not parsed.loose
    assert parsed.meta == {"tag": "x"}


@pytest.mark.parametrize(
    "text, line",
    [
        (_text("0.5 0.25\n0.4 0.125\n"), 11),
        (_text("0.5 -0.25\n1.5 0.125\n"), 10),
        (_text("0.5 0.25\n1.5 abc\n"), 11),
        (_text("0.5 0.25 1\n1.5 0.125\n"), 10),
        (_text("0.0 0.25\n1.5 0.125\n"), 10),
        (_text("0.5 0.25\n# late=1\n1.5 0.125\n"), 11),
    ],
)
def test_bad_rows_report_line(text, line):
    with pytest.raises(RuleFormatError) as exc:
        QuadratureRule.from_text(text)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}: ")


@pytest.mark.parametrize(
    "text",
    [
        _text("0.5 0.25\n1.5 0.125\n", version="2"),
        _text("0.5 0.25\n1.5 0.125\n", version=None),
        _text("0.5 0.25\n1.5 0.125\n", m="3"),
        _text("0.5 0.25\n1.5 0.125\n", epsilon=None),
        _text("0.5 0.25\n1.5 0.125\n", epsilon="0"),
        _text("0.5 0.25\n1.5 0.125\n", nu_lo="x"),
        "# version=1\n# bad header\n",
    ],
)
def test_bad_headers(text):
    with pytest.raises(RuleFormatError):
        QuadratureRule.from_text(text)


def test_non_ascii_file(tmp_path):
    path = tmp_path / "rule.txt"
    path.write_bytes(_text("0.5 0.25\n1.5 0.125\n", tag="é").encode("utf-8"))
    with pytest.raises(RuleFormatError):
        QuadratureRule.load(path)


def test_constructor_validates():
    box = HyperBox()
    with pytest.raises(DomainError):
        QuadratureRule(np.array([0.5, 1.0]), np.array([0.1, 0.0]), box, 1e-5)
    with pytest.raises(DomainError):
        QuadratureRule(np.array([1.0, 0.5]), np.array([0.1, 0.1]), box, 1e-5)
    with pytest.raises(DomainError):
        QuadratureRule(np.array([]), np.array([]), box, 1e-5)


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        resolve_rule(str(tmp_path / "absent.rule"))
