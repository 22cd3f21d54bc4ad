import csv
import json

import pytest

from pknspectral.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, build_parser, config_from_args, main


def test_selfsimilar_json(tmp_path, capsys):
    out = tmp_path / "ss.json"
    assert main(["selfsimilar", "--beta", "0.25", "--n", "30", "--out", str(out)]) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["config"]["beta"] == 0.25 and data["delta_w"] < 1e-4
    assert "delta_w" in capsys.readouterr().out


def test_transient_csv_and_profile(tmp_path):
    out = tmp_path / "run.csv"
    assert main(["transient", "--solver", "2", "--n", "12", "--k", "4", "--t-final", "2", "--dt0", "0.1",
                 "--two-term-tip", "--out", str(out)]) == EXIT_OK
    with open(out) as fh:
        assert len(list(csv.reader(fh))) == 5
    assert (tmp_path / "run_profile.csv").exists()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": 12, "K": 5, "solver": 1, "t_final": 3.0}))
    args = build_parser().parse_args(["transient", "--config", str(cfg), "--n", "20"])
    rc = config_from_args(args, "transient")
    assert (rc.N, rc.K, rc.solver) == (20, 5, 1)


def test_sweep_writes_rows(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--axis", "beta", "--values", "0.25,6", "--n", "30", "--max-iter", "60",
                 "--out", str(out)]) == EXIT_OK
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] for r in rows] == ["ok", "diverged"]


@pytest.mark.parametrize("argv", [["transient", "--n", "1"], ["selfsimilar", "--rho", "0.5"],
                                  ["sweep", "--axis", "n", "--values", "a,b"]])
def test_configuration_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_nonconvergence_exits_3(capsys):
    assert main(["selfsimilar", "--beta", "6", "--n", "30", "--max-iter", "50"]) == EXIT_DIVERGED


def test_unknown_flag_is_argparse_error():
    with pytest.raises(SystemExit) as exc:
        main(["transient", "--bogus"])
    assert exc.value.code == 2
