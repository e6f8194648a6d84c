import csv
import io
import json

import numpy as np
import pytest

from conftest import adder_mac
from macsp.cli import (CSV_COLUMNS, EXIT_CAP, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, UsageError,
                       channel_to_json, code_to_json, config_from_args, main, parse_channel,
                       parse_code, parse_rates)
from macsp.errors import ValidationError
from macsp.exponents import sp_thm4
from macsp.macchannel import MultiUserCode, evaluate

ADDER = {"X": [0, 1], "Y": [0, 1], "Z": [0, 1, 2],
         "W": [[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]]}
USELESS = {"X": [0, 1], "Y": [0, 1], "Z": ["a", "b"],
           "W": [[[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]]]}
NOISY = {"X": [0, 1], "Y": [0, 1], "Z": [0, 1],
         "W": [[[0.9, 0.1], [0.3, 0.7]], [[0.4, 0.6], [0.05, 0.95]]]}


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, ch in (("adder", ADDER), ("useless", USELESS), ("noisy", NOISY)):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(ch))
        out[name] = str(p)
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------------------
# ingestion


def test_parse_adder():
    w = parse_channel(json.dumps(ADDER))
    np.testing.assert_array_equal(w.W, adder_mac().W)


def test_row_sum_rejection_names_row():
    bad = json.loads(json.dumps(NOISY))
    bad["W"][1][0] = [0.4, 0.58]
    with pytest.raises(ValidationError, match=r"W\[1\]\[0\].*0\.98"):
        parse_channel(json.dumps(bad))


def test_duplicate_label_rejected():
    bad = dict(ADDER, Z=[0, 1, 1])
    with pytest.raises(ValidationError):
        parse_channel(json.dumps(bad))


@pytest.mark.parametrize("text", ["not json", "[1, 2]", json.dumps({"X": [0]}),
                                  json.dumps(dict(ADDER, W=[[[1, 0, 0]]]))])
def test_malformed_channels(text):
    with pytest.raises(ValidationError):
        parse_channel(text)


def test_decimal_parsing_is_exact():
    # 0.1 + 0.2 + 0.7 is not 1 in binary floating point, but is exactly 1 as decimals
    ch = {"X": [0], "Y": [0], "Z": [0, 1, 2], "W": [[[0.1, 0.2, 0.7]]]}
    w = parse_channel(json.dumps(ch))
    assert w.W[0, 0, 0] == 0.1


def test_channel_roundtrip():
    w = parse_channel(json.dumps(NOISY))
    again = parse_channel(channel_to_json(w))
    np.testing.assert_array_equal(w.W, again.W)


def test_code_roundtrip():
    w = adder_mac()
    code = MultiUserCode(2, [(0, 0), (1, 1)], [(0, 1), (1, 0)])
    back = parse_code(code_to_json(code), w)
    assert back.codebook_x == code.codebook_x
    text = json.dumps({"n": 2, "codebook_x": [[0, 0]], "codebook_y": [[0, 1]],
                       "decoder": [[0, 0, [[0, 1]]]]})
    explicit_code = parse_code(text, w)
    assert explicit_code.is_explicit
    assert evaluate(explicit_code, w).average_error == 0.0


def test_parse_rates():
    rx, ry = parse_rates("0:0.5:3,0.1:0.1:1")
    np.testing.assert_allclose(rx, [0, 0.25, 0.5])
    np.testing.assert_allclose(ry, [0.1])
    for bad in ("0:1:3", "0:1:0,0:1:1", "1:0:3,0:1:1", "a:b:c,0:1:1"):
        with pytest.raises(UsageError):
            parse_rates(bad)


# ---------------------------------------------------------------------------
# jobs


def test_capacity_adder(files, tmp_path):
    out = tmp_path / "cap.csv"
    assert main(["capacity", "--channel", files["adder"], "--resolution", "16",
                 "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert tuple(rows[0]) == CSV_COLUMNS
    best = [r for r in rows[1:] if r[3] == "max_sum_rate"]
    assert len(best) == 1 and float(best[0][2]) >= 1.48


def test_exponent_useless_all_zero(files, tmp_path):
    out = tmp_path / "e.csv"
    assert main(["exponent", "--channel", files["useless"], "--rates", "0.05:0.5:3,0.05:0.5:3",
                 "--resolution", "4", "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    methods = {r[3] for r in rows[1:]}
    assert {"sp_thm4", "sp_thm2", "transfer_avg_upper"} <= methods
    for r in rows[1:]:
        if r[3] in ("sp_thm4", "sp_thm2"):
            assert float(r[2]) == 0.0


def test_exponent_rows_reverify(files, tmp_path):
    out = tmp_path / "e.csv"
    assert main(["exponent", "--channel", files["noisy"], "--rates", "0:0.2:2,0.1:0.1:1",
                 "--resolution", "4", "--p-xy", "0.25,0.25,0.25,0.25",
                 "--out", str(out)]) == EXIT_OK
    w = parse_channel(json.dumps(NOISY))
    rows = _rows(out)[1:]
    assert any(r[3] == "fixed_type" for r in rows)
    for r in rows:
        assert "seed=0" in r[5]
        if r[3] == "sp_thm4":
            got = sp_thm4(w, (float(r[0]), float(r[1])), int(r[4])).value
            assert repr(got) == r[2]


def test_determinism(files, tmp_path):
    args = ["exponent", "--channel", files["noisy"], "--rates", "0:0.3:3,0:0.3:3",
            "--resolution", "4", "--seed", "7"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_oracle_landmarks(files, capsys):
    assert main(["oracle", "--channel", files["adder"], "--n", "2", "--mx", "2",
                 "--my", "2"]) == EXIT_OK
    kv = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    assert float(kv["average_error"]) == 0.0
    assert main(["oracle", "--channel", files["useless"], "--n", "1", "--mx", "2",
                 "--my", "2"]) == EXIT_OK
    kv = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    assert float(kv["average_error"]) == pytest.approx(0.75)


def test_oracle_sampled_seeded(files, tmp_path):
    # C(11, 4)^2 candidate codes exceed the exhaustive-search cap
    outs = []
    for k in range(2):
        p = tmp_path / f"o{k}.txt"
        assert main(["oracle", "--channel", files["noisy"], "--n", "3", "--mx", "4",
                     "--my", "4", "--samples", "40", "--seed", "11", "--out", str(p)]) == EXIT_OK
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    assert b"sampled=True" in outs[0] and b"seed=11" in outs[0]
    assert main(["oracle", "--channel", files["noisy"], "--n", "3", "--mx", "4",
                 "--my", "4"]) == EXIT_CAP


def test_verify_and_repair(files, tmp_path, capsys):
    code = tmp_path / "code.json"
    code.write_text(json.dumps({"n": 3, "codebook_x": [[0, 0, 1], [0, 1, 0]],
                                "codebook_y": [[1, 1, 0], [0, 1, 1]]}))
    assert main(["verify", "--channel", files["noisy"], "--code", str(code),
                 "--threshold", "1.9"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert any(l.startswith("report=identity_A2") and "overall=True" in l for l in lines)
    assert any(l.startswith("report=extract_A3") for l in lines)
    chain = [l for l in lines if l.startswith("report=chain_A1")]
    assert chain and all("holds=True" in l for l in chain if "kind=exact" in l)

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n": 3, "codebook_x": [[0, 0, 1], [0, 0, 1]],
                               "codebook_y": [[1, 1, 0]]}))
    fixed = tmp_path / "fixed.json"
    assert main(["repair", "--channel", files["noisy"], "--code", str(bad),
                 "--out", str(fixed)]) == EXIT_OK
    w = parse_channel(json.dumps(NOISY))
    repaired = parse_code(fixed.read_text(), w)
    assert len(set(repaired.codebook_x)) == 2
    err = capsys.readouterr().err
    before, after = (float(t.split("=")[1]) for t in err.split())
    assert after <= before


def test_exit_codes(files, tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate", "--channel", files["adder"]]) == EXIT_USAGE
    assert main(["exponent", "--channel", files["adder"], "--rates", "0:1"]) == EXIT_USAGE
    assert main(["verify", "--channel", files["adder"]]) == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(NOISY, W=[[[0.9, 0.08], [0.3, 0.7]],
                                             [[0.4, 0.6], [0.05, 0.95]]])))
    assert main(["capacity", "--channel", str(bad)]) == EXIT_VALIDATION
    assert main(["capacity", "--channel", str(tmp_path / "missing.json")]) == EXIT_VALIDATION
    assert main(["oracle", "--channel", files["adder"], "--n", "9", "--cap", "1000"]) == EXIT_CAP


def test_no_partial_file_on_failure(files, tmp_path):
    out = tmp_path / "o.txt"
    assert main(["oracle", "--channel", files["adder"], "--n", "9", "--cap", "1000",
                 "--out", str(out)]) == EXIT_CAP
    assert not out.exists()
    assert list(tmp_path.glob(".macsp-*")) == []


def test_config_from_args():
    job = config_from_args(["exponent", "--channel", "c.json", "--rates", "0:1:2,0:0:1",
                            "--u-cap", "3", "--seed", "5"])
    assert job.u_cap == 3 and job.seed == 5 and len(job.rates[0]) == 2
