import json

import pytest

from tasep_lab.cli import (EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, ConfigError, main,
                           parse_config)


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_defaults():
    cfg = parse_config("experiment")
    assert cfg.params["ns"] == [250, 500, 1000, 2000, 4000, 8000]
    assert cfg.params["replicas"] == [400, 400, 200, 200, 100, 50]
    assert cfg.seed == 0 and cfg.parallelism == 1
    assert parse_config("experiment", {"ns": [100, 200]}).params["replicas"] == [100, 100]
    assert parse_config("verify").params["initial"]["lambda"] == 0.8


def test_overrides_win_over_document():
    cfg = parse_config("experiment", {"ns": [10, 20]}, {"ns": [30], "replicas": [5]})
    assert cfg.params["ns"] == [30] and cfg.params["replicas"] == [5]


@pytest.mark.parametrize("doc,msg", [
    ({"initial": {"lambda": 1.3}}, r"initial.lambda: value 1.3 outside \[0.0, 1.0\]"),
    ({"initial": {"path": 1}}, "unknown key 'initial.path'"),
    ({"widow": 1}, "unknown key 'widow'"),
    ({"ns": []}, "at least one scale"),
    ({"ns": [10, 20, 30], "replicas": [1, 2]}, "must match"),
    ({"t": 0}, "t: value 0"),
    ({"seed": -1}, "seed"),
])
def test_rejected_documents(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config("experiment", doc)


def test_non_object_document():
    with pytest.raises(ConfigError):
        parse_config("pde", "[1, 2]")


def test_exit_codes(tmp_path, capsys):
    assert main(["experiment", "--config", _write(tmp_path, {"initial": {"lambda": 1.3}}),
                 "--out", str(tmp_path)]) == EXIT_USAGE
    assert "initial.lambda" in capsys.readouterr().err
    assert main(["pde", "--config", str(tmp_path / "missing.json")]) == EXIT_IO
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["pde", "--config", str(bad)]) == EXIT_USAGE
    assert main(["teleport"]) == EXIT_USAGE
    assert main(["pde", "--out", str(tmp_path / "pde")]) == EXIT_OK
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["pde", "--out", str(blocker / "sub")]) == EXIT_IO


def test_pde_output(tmp_path):
    assert main(["pde", "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "pde_solution.csv").read_text().splitlines()
    assert lines[0] == "x,t,u,y_minus,y_plus,rho,is_shock"
    assert len(lines) == 402
    assert (tmp_path / "run_meta.json").exists()


def test_verify_reports_zero_violations(tmp_path):
    cfg = _write(tmp_path, {"half_width": 30, "T": 10.0, "snapshots": 5, "seeds": 3})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    assert rep["runs"] == 3 and rep["identity_violations"] == 0


def test_lpp_bound_and_domain_error(tmp_path):
    cfg = _write(tmp_path, {"task": "bound", "ns": [10, 20], "reps": 500})
    assert main(["lpp", "--config", cfg, "--out", str(tmp_path)]) in (EXIT_OK, EXIT_VERIFY)
    assert (tmp_path / "lpp_bound.csv").read_text().startswith("n,reps,threshold")
    cfg = _write(tmp_path, {"task": "bound", "t": 3.0}, "low.json")
    assert main(["lpp", "--config", cfg, "--out", str(tmp_path)]) == EXIT_USAGE


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, {"initial": {"kind": "riemann", "lambda": 0.8, "rho": 0.2},
                            "ns": [30, 60, 90, 120], "replicas": [30]})
    outs = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        assert main(["experiment", "--config", cfg, "--seed", "5", "--out", str(d)]) == EXIT_OK
        assert main(["simulate", "--seed", "5", "--out", str(d)]) == EXIT_OK
        outs.append({f: (d / f).read_bytes() for f in
                     ("records.csv", "fits.csv", "assumptions.json", "trajectory.csv",
                      "second_class.csv")})
    assert outs[0] == outs[1]
    other = tmp_path / "c"
    main(["experiment", "--config", cfg, "--seed", "6", "--out", str(other)])
    assert (other / "records.csv").read_bytes() != outs[0]["records.csv"]
