"""End-to-end checks of the smclab command line interface."""
import json
import re

import pytest

from smclab import cli, scenarios, sim
from smclab.cli import main

FIG1 = "fig1_pendulum_observer_free"

BLOWUP = {
    "name": "blowup",
    "plant": {"name": "duffing", "lin": 5.0, "cub": 1.0, "delta": 0.0},
    "controller": {"name": "none"},
    "x0": [1.0, 0.0],
    "sim": {"dt": 1e-3, "t_final": 10.0},
}


# -------------------------------------------------------------------- run

def test_run_builtin_writes_three_files(tmp_path, capsys):
    code = main(["run", FIG1, "--out-dir", str(tmp_path)])
    assert code == 0

    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == [f"{FIG1}.csv", f"{FIG1}.metrics.txt", f"{FIG1}.svg"]

    out = capsys.readouterr().out
    for name in names:
        assert f"wrote {tmp_path / name}" in out

    header = (tmp_path / f"{FIG1}.csv").read_text().splitlines()[0]
    assert header == "t,x,v,u,alpha,beta,s,V,d"
    svg = (tmp_path / f"{FIG1}.svg").read_text()
    assert svg.startswith('<?xml version="1.0"')
    assert "<svg " in svg and svg.rstrip().endswith("</svg>")
    assert (tmp_path / f"{FIG1}.metrics.txt").read_text().startswith("#")


def test_run_no_svg_writes_two_files(tmp_path):
    code = main(["run", FIG1, "--out-dir", str(tmp_path), "--no-svg"])
    assert code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == [f"{FIG1}.csv", f"{FIG1}.metrics.txt"]


def test_run_rejects_zero_dt(tmp_path, capsys):
    code = main(["run", FIG1, "--out-dir", str(tmp_path), "--dt", "0"])
    assert code == 2
    err = capsys.readouterr().err
    assert "dt must be positive" in err
    assert not list(tmp_path.iterdir())


def test_run_set_override_reaches_metrics(tmp_path):
    # lambda too weak to settle in 10 s, so the report says none
    code = main([
        "run", FIG1, "--out-dir", str(tmp_path),
        "--set", "controller.lambda=0.01",
    ])
    assert code == 0
    text = (tmp_path / f"{FIG1}.metrics.txt").read_text()
    assert "settling_time=none" in text


def test_run_unknown_scenario(tmp_path, capsys):
    code = main(["run", "fig99_nope", "--out-dir", str(tmp_path)])
    assert code == 2
    assert "neither a readable file nor a built-in" in capsys.readouterr().err


def test_run_scenario_from_json_file(tmp_path):
    sc_path = tmp_path / "case.json"
    raw = scenarios.builtin_suite()[0].to_dict()
    raw["name"] = "my_case"
    sc_path.write_text(json.dumps(raw))
    code = main(["run", str(sc_path), "--out-dir", str(tmp_path / "out")])
    assert code == 0
    assert (tmp_path / "out" / "my_case.csv").exists()


def test_run_divergence_exit_code(tmp_path, capsys):
    sc_path = tmp_path / "blowup.json"
    sc_path.write_text(json.dumps(BLOWUP))
    code = main(["run", str(sc_path), "--out-dir", str(tmp_path / "out")])
    assert code == 3
    captured = capsys.readouterr()
    assert "diverged at t=1.087" in captured.err
    assert "partial output written" in captured.err
    text = (tmp_path / "out" / "blowup.csv").read_text()
    assert text.startswith("# diverged_at=")
    loaded = sim.TimeSeries.read_csv(tmp_path / "out" / "blowup.csv")
    assert loaded.diverged and loaded.diverged_at == 1.087


def test_run_honours_out_env_var(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv(cli.OUT_ENV_VAR, str(target))
    code = main(["run", FIG1, "--no-svg"])
    assert code == 0
    assert (target / f"{FIG1}.csv").exists()
    # an explicit flag wins over the environment
    explicit = tmp_path / "explicit"
    code = main(["run", FIG1, "--out-dir", str(explicit), "--no-svg"])
    assert code == 0
    assert (explicit / f"{FIG1}.csv").exists()


def test_run_bad_override_syntax(tmp_path, capsys):
    code = main(["run", FIG1, "--out-dir", str(tmp_path), "--set", "nonsense"])
    assert code == 2
    assert "must look like" in capsys.readouterr().err


def test_run_unknown_parameter_override(tmp_path, capsys):
    code = main([
        "run", FIG1, "--out-dir", str(tmp_path), "--set", "controller.slope=2",
    ])
    assert code == 2
    assert "unknown parameter" in capsys.readouterr().err


# ------------------------------------------------------------------- plot

@pytest.fixture(scope="module")
def fig1_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("plotsrc")
    assert main(["run", FIG1, "--out-dir", str(out), "--no-svg"]) == 0
    return out / f"{FIG1}.csv"


def test_plot_single_csv(fig1_csv, tmp_path, capsys):
    out = tmp_path / "x.svg"
    code = main(["plot", str(fig1_csv), "--columns", "x,u", "--out", str(out)])
    assert code == 0
    svg = out.read_text()
    assert svg.count("<polyline") == 2
    assert ">x</text>" in svg and ">u</text>" in svg
    assert f"wrote {out}" in capsys.readouterr().out


def test_plot_default_output_path(fig1_csv):
    code = main(["plot", str(fig1_csv), "--columns", "x"])
    assert code == 0
    assert fig1_csv.with_suffix(".plot.svg").exists()


def test_plot_overlay_multiple_csvs(fig1_csv, tmp_path):
    copies = []
    for i in range(3):
        p = tmp_path / f"copy{i}.csv"
        p.write_bytes(fig1_csv.read_bytes())
        copies.append(str(p))
    out = tmp_path / "overlay.svg"
    code = main(["plot", *copies, "--columns", "u",
                 "--out", str(out), "--title", "controls"])
    assert code == 0
    svg = out.read_text()
    assert svg.count("<polyline") == 3
    assert ">copy0:u</text>" in svg  # per-file labels in the legend
    assert ">controls</text>" in svg


def test_plot_unknown_column(fig1_csv, capsys):
    code = main(["plot", str(fig1_csv), "--columns", "bogus"])
    assert code == 2
    err = capsys.readouterr().err
    assert "no column 'bogus'" in err
    assert "available: t, x, v, u, alpha, beta, s, V, d" in err


def test_plot_missing_file(tmp_path, capsys):
    code = main(["plot", str(tmp_path / "absent.csv"), "--columns", "x"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_plot_empty_columns(fig1_csv, capsys):
    code = main(["plot", str(fig1_csv), "--columns", ","])
    assert code == 2
    assert "lists no column" in capsys.readouterr().err


# ------------------------------------------------------------------ suite

def test_suite_cli_end_to_end(tmp_path, capsys):
    out = tmp_path / "suite"
    code = main(["suite", "--out-dir", str(out), "--parallelism", "4"])
    captured = capsys.readouterr()
    assert code == 0

    stdout = captured.out
    groups = re.findall(r"=== (\w+) ===", stdout)
    assert groups == sorted(["pendulum", "vdp", "duffing", "network5"])
    assert f"ran 20 scenarios, output in {out}" in stdout

    # matrix text carries per-controller verdicts in declared order
    pendulum_block = stdout.split("=== pendulum ===")[1].split("===")[0]
    chatter_line = next(
        line for line in pendulum_block.splitlines()
        if line.startswith("NoChattering")
    )
    marks = re.findall(r"(yes|no|n/a)", chatter_line)
    assert marks[0] == "no"    # classical relay chatters
    assert marks[-1] == "yes"  # the smooth law does not

    csvs = sorted(p.name for p in out.glob("*.csv"))
    assert len(csvs) == 25
    assert {"summary.csv", "matrix_pendulum.csv", "matrix_vdp.csv",
            "matrix_duffing.csv", "matrix_network5.csv"} <= set(csvs)

    # figure files: .svg for the state view, .u.svg for the control view
    assert (out / "fig1_pendulum_observer_free.svg").exists()
    assert (out / "fig7_vdp_disturbance.svg").exists()
    assert (out / "fig7_vdp_disturbance.u.svg").exists()
    assert not (out / "fig1_pendulum_observer_free.u.svg").exists()
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert len(svgs) == 23  # 20 state views + 3 control views


def test_suite_rerun_is_byte_identical(tmp_path, monkeypatch):
    pendulum_only = [
        sc for sc in scenarios.builtin_suite() if sc.matrix_group == "pendulum"
    ]
    monkeypatch.setattr(scenarios, "builtin_suite", lambda: pendulum_only)
    out = tmp_path / "suite"
    assert main(["suite", "--out-dir", str(out)]) == 0
    snapshot = {p.name: p.read_bytes() for p in out.iterdir()}
    assert len(snapshot) == 10  # 4 runs x (csv + svg) + summary + matrix
    assert main(["suite", "--out-dir", str(out)]) == 0
    for p in sorted(out.iterdir()):
        assert p.read_bytes() == snapshot[p.name], p.name


def test_suite_reports_partial_failures(tmp_path, monkeypatch, capsys):
    blowup = scenarios.validate(BLOWUP)

    def tiny_suite():
        return [blowup]

    monkeypatch.setattr(scenarios, "builtin_suite", tiny_suite)
    code = main(["suite", "--out-dir", str(tmp_path / "out")])
    captured = capsys.readouterr()
    assert code == 4
    assert "failed: blowup: diverged at t=1.087 s" in captured.err
    assert "ran 1 scenarios" in captured.out


def test_suite_rejects_bad_parallelism(tmp_path, capsys):
    code = main(["suite", "--out-dir", str(tmp_path), "--parallelism", "0"])
    assert code == 2
    assert "parallelism" in capsys.readouterr().err


# ------------------------------------------------------------------- help

def test_help_text_lists_commands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for word in ("run", "suite", "plot", "example: smclab"):
        assert word in out


def test_subcommand_help_has_example(capsys):
    for command in ("run", "suite", "plot"):
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0
        assert "example: smclab" in capsys.readouterr().out


def test_missing_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
