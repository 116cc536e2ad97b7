import json

import pytest

from treeflow.cli import run


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def specs(tmp_path):
    return {
        "binary": _write(tmp_path / "binary.json",
                         {"kind": "rooted", "generator": {"type": "regular", "branching": 2}, "forward_depth": 10}),
        "chain": _write(tmp_path / "chain.json",
                        {"kind": "rooted", "generator": {"type": "chain"}, "forward_depth": 16}),
        "uchain": _write(tmp_path / "uchain.json",
                         {"kind": "unrooted", "generator": {"type": "chain"}, "forward_depth": 8, "ancestor_depth": 8}),
        "decay": _write(tmp_path / "decay.json", {"rule": "exponential", "a": -1.0}),
        "sym": _write(tmp_path / "sym.json", {"rule": "exponential", "a": -1.0, "symmetric": True}),
        "dir": tmp_path,
    }


def _json(capsys, argv, code=0):
    assert run(argv) == code
    return json.loads(capsys.readouterr().out)


def test_tree_validate(specs, capsys):
    out = _json(capsys, ["tree", "validate", "--tree-spec", specs["binary"]])
    assert out["n_edges"] == 1023 and out["leaf"] is None


def test_weights_check_and_fit(specs, capsys):
    base = ["--tree-spec", specs["binary"], "--p", "2", "--N", "16"]
    out = _json(capsys, ["weights", "check", *base, "--M", "1.41421357", "--w", "0.34657360"])
    assert out["status"] == "pass"
    out = _json(capsys, ["weights", "check", "--tree-spec", specs["binary"], "--p", "2",
                         "--M", "1.41421356", "--w", "0.34657359"])
    assert out["status"] == "pass"
    out = _json(capsys, ["weights", "check", *base, "--M", "1", "--w", "0"])
    assert out["status"] == "fail" and set(out["violation"]) == {"edge", "t", "s"}
    out = _json(capsys, ["weights", "fit", *base])
    assert out["fit"]["M"] == pytest.approx(2 ** 0.5) and out["fit"]["w"] == pytest.approx(0.34657359, abs=1e-8)


def test_criterion_json_and_csv(specs, capsys):
    out = _json(capsys, ["dynamics", "criterion", "--tree-spec", specs["chain"], "--weight-spec", specs["decay"],
                         "--horizon", "8", "--N", "16"])
    assert out["verdict"] == "satisfied-on-full-sequence"
    assert run(["dynamics", "criterion", "--tree-spec", specs["binary"], "--horizon", "3", "--N", "16",
                "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "edge_id,n,value" and len(lines) == 1 + 127 * 3


def test_truncation_exit(specs, capsys):
    assert run(["dynamics", "criterion", "--tree-spec", specs["binary"], "--horizon", "64"]) == 3
    assert "truncation" in capsys.readouterr().err


def test_malformed_spec(specs, capsys):
    bad = specs["dir"] / "bad.json"
    bad.write_text('{"kind": "rooted",\n "generator": {"type": "chain"} "forward_depth": 3}')
    assert run(["tree", "validate", "--tree-spec", str(bad)]) == 2
    assert f"{bad}:2:33" in capsys.readouterr().err


def test_input_errors(specs, capsys):
    assert run(["weights", "check", "--tree-spec", specs["binary"]]) == 2
    assert run(["weights", "fit", "--tree-spec", specs["binary"], "--N", "12"]) == 2
    assert run(["weights", "fit", "--tree-spec", specs["binary"], "--p", "0.5"]) == 2
    assert run(["frobnicate"]) == 2
    assert run(["tree", "validate", "--tree-spec", str(specs["dir"] / "missing.json")]) == 2


def test_witness_certificate(specs, capsys):
    out = _json(capsys, ["dynamics", "witness", "--tree-spec", specs["binary"], "--N", "16"])
    assert out["status"] == "ok" and out["n"] == 4
    out = _json(capsys, ["dynamics", "witness", "--tree-spec", specs["chain"], "--N", "16"])
    assert out["status"] == "criterion-not-met"
    out = _json(capsys, ["dynamics", "witness", "--tree-spec", specs["uchain"], "--weight-spec", specs["sym"],
                         "--N", "16", "--eps", "0.5", "--horizon", "6"])
    assert out["status"] == "ok" and out["achieved_closeness"] < 0.5
    out = _json(capsys, ["dynamics", "certificate", "--tree-spec", specs["chain"], "--N", "16",
                         "--horizon", "10", "--samples", "20"])
    assert out["status"] == "ok" and out["gap"] >= 0.5 - 1e-6


def test_semigroup_and_oracle(specs, capsys):
    out = _json(capsys, ["semigroup", "laws", "--tree-spec", specs["binary"], "--N", "8", "--horizon", "2",
                         "--samples", "3", "--M", "1.4142136", "--w", "0.3465736"])
    assert out["semigroup_law_max_error"] <= 1e-12 and out["norm_bound_worst_ratio"] <= 1 + 1e-9
    out = _json(capsys, ["semigroup", "orbit", "--tree-spec", specs["chain"], "--N", "8", "--horizon", "3"])
    assert [r["t"] for r in out["norms"]] == [0.0, 1.0, 2.0, 3.0]
    assert run(["semigroup", "orbit", "--tree-spec", specs["chain"], "--N", "8", "--format", "csv"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "t,edge_id,k,value"
    out = _json(capsys, ["oracle", "chain", "--tree-spec", specs["chain"], "--weight-spec", specs["decay"],
                         "--N", "16", "--horizon", "6", "--samples", "5"])
    assert out["intertwining_max_error"] == 0 and out["verdicts_agree"]


def test_byte_stable(specs, capsys, tmp_path):
    argv = ["dynamics", "criterion", "--tree-spec", specs["chain"], "--weight-spec", specs["decay"],
            "--horizon", "5", "--N", "16"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run([*argv, "--output", str(a)]) == 0 and run([*argv, "--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    json.loads(a.read_text())
    assert run([*argv, "--output", str(tmp_path / "nope" / "x.json")]) == 2
    assert "nope" in capsys.readouterr().err
