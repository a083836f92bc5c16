"""Argument wiring and small end-to-end runs of the command-line tool."""

import numpy as np
import pytest

from alcoi.cli import build_parser, main


def test_parser_defaults():
    parser = build_parser()
    args = parser.parse_args(["figure2"])
    assert args.n_seeds == 50
    assert args.sweep == (64, 128, 256, 512)
    assert args.out == "figure2.csv"
    args = parser.parse_args(["figure3"])
    assert args.sweep == (32, 64, 128)
    args = parser.parse_args(["rate-check"])
    assert args.sweep == (16, 64, 256, 1024)
    args = parser.parse_args(["hessian-check"])
    assert args.n_mc == 100_000
    args = parser.parse_args(["doed-trace"])
    assert args.n_design == 256


def test_parser_sweep_flag_parses_commas():
    args = build_parser().parse_args(["figure2", "--sweep", "16,32", "--n-seeds", "3"])
    assert args.sweep == (16, 32)
    assert args.n_seeds == 3


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_figure2_tiny_run_writes_csv(tmp_path, capsys):
    out = tmp_path / "f2.csv"
    code = main(["figure2", "--sweep", "16", "--n-seeds", "1", "--out", str(out)])
    assert code in (0, 1)
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "method,N,seed,excess_cost,wall_ms"
    assert len(lines) == 4
    assert (tmp_path / "f2.csv.summary.csv").exists()
    printed = capsys.readouterr().out
    assert "ordering" in printed and ("PASS" in printed or "FAIL" in printed)


def test_rate_check_tiny_run(tmp_path, capsys):
    out = tmp_path / "rate.csv"
    code = main(["rate-check", "--sweep", "16,64", "--n-seeds", "2", "--out", str(out)])
    assert code in (0, 1)
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "n_episodes,seed,sq_error"
    assert len(lines) == 5
    for line in lines[1:]:
        n, seed, err = line.split(",")
        assert int(n) in (16, 64)
        assert np.isfinite(float(err))
    assert "rate" in capsys.readouterr().out
