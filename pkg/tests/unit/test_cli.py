import csv
import io
import json

import pytest

from src.cli.main import build_parser, exit_code_for, main
from src.core.config import get_settings
from src.rhythm_engine.integrator import NoCrossingError, NotOscillatingError
from src.rhythm_engine.spectral import SpectralWindowError
from src.rhythm_engine.stochastic_walk import RedrawExhaustedError
from src.rhythm_engine.storage.csv_store import read_columns
from src.rhythm_engine.storage.manifest_store import ManifestStore

SHORT_WALK = ["--t-end", "600"]


@pytest.fixture(autouse=True)
def _isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("GAMMA_RHYTHM_MANIFEST_DIR", str(tmp_path / "manifests"))
    monkeypatch.setenv("GAMMA_RHYTHM_MAX_WORKERS", "1")
    monkeypatch.delenv("GAMMA_RHYTHM_AUDIT_LOG_PATH", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def test_fixed_points_csv_and_manifest(tmp_path):
    out = tmp_path / "fp.csv"
    code = main(["fixed-points", "--model.K", "60", "--model.eps", "0.1",
                 "--format", "csv", "-o", str(out)])
    assert code == 0

    assert out.read_text().splitlines()[0] == "u,v,kind,re_l1,im_l1,re_l2,im_l2"
    with out.open(newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    assert rows[-1]["kind"] == "source"
    assert float(rows[-1]["u"]) == pytest.approx(0.0084676, rel=1e-4)
    assert float(rows[-1]["v"]) == pytest.approx(0.1014, rel=1e-3)

    manifest = ManifestStore.load(f"{out}.manifest.json")
    assert manifest.command == "fixed-points"
    assert manifest.config["model"]["K"] == 60.0
    assert manifest.outputs == [str(out)]
    assert manifest.headline["kind"] == "source"
    assert [s["stage"] for s in manifest.stages][0] == "load_config"


def test_fixed_points_table_on_stdout(capsys, tmp_path):
    assert main(["fixed-points", "--model.K", "60", "--model.eps", "0.1"]) == 0
    out = capsys.readouterr().out
    assert "kind" in out.splitlines()[0]
    assert "saddle" in out
    assert "interior u*=0.00846" in out
    assert list((tmp_path / "manifests").glob("fixed-points-*.manifest.json"))


def test_missing_K_is_a_usage_error(capsys):
    assert main(["fixed-points", "--model.eps", "0.1"]) == 2
    assert "model.K" in capsys.readouterr().err


def test_invalid_K_exit_code(capsys):
    assert main(["fixed-points", "--model.K", "500", "--model.eps", "0.1"]) == 4
    assert "resolve_params failed" in capsys.readouterr().err


def test_unknown_flag_exits_with_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["fixed-points", "--model.Q", "1"])
    assert info.value.code == 2


def test_config_file_and_flags(tmp_path):
    doc = tmp_path / "run.json"
    doc.write_text(json.dumps({"model.K": 50, "model.eps": 0.1}))
    out = tmp_path / "fp.csv"
    assert main(["fixed-points", "--config", str(doc), "--model.K", "60", "-o", str(out)]) == 0
    manifest = ManifestStore.load(f"{out}.manifest.json")
    assert manifest.config["model"]["K"] == 60.0
    assert manifest.config["model"]["eps"] == 0.1


def test_hopf_curve_csv(tmp_path, capsys):
    out = tmp_path / "hopf.csv"
    code = main(["hopf", "--k-min", "30", "--k-max", "100", "--samples", "71", "-o", str(out)])
    assert code == 0
    cols = read_columns(out)
    assert out.read_text().startswith("K,eps_H\n")
    assert len(cols["K"]) == 71
    at_60 = cols["eps_H"][list(cols["K"]).index(60.0)]
    assert 0.36 < at_60 < 0.40
    assert "eps_H=" in capsys.readouterr().out


def test_period_summary_line(capsys):
    assert main(["period", "--model.K", "60", "--model.eps", "0.1", "--model.gamma", "1"]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("period_ms=")
    assert float(line.split("=")[1]) == pytest.approx(44.0, rel=0.1)


def test_period_of_a_sink_fails_with_its_own_code(capsys):
    assert main(["period", "--model.K", "60", "--model.eps", "0.5"]) == 6
    assert "limit_cycle_period failed" in capsys.readouterr().err


def test_sweep_grid(tmp_path):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "--model.K", "60", "--eps-grid", "0.1", "0.5", "--k-grid", "60",
                 "--t-end", "1500", "--format", "csv", "-o", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "K,eps,gamma,kind,period_ms,u_min,u_max,v_min,v_max"
    assert lines[1].split(",")[3] == "limit_cycle"
    assert lines[2].split(",")[3] == "sink"
    assert lines[2].split(",")[4] == ""


def test_stochastic_runs_are_byte_identical(tmp_path):
    a, b, c = (tmp_path / name for name in ("a.csv", "b.csv", "c.csv"))
    assert main(["stochastic", "--seed", "4", *SHORT_WALK, "-o", str(a)]) == 0
    assert main(["stochastic", "--seed", "4", *SHORT_WALK, "-o", str(b)]) == 0
    assert main(["stochastic", "--seed", "5", *SHORT_WALK, "-o", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    assert a.read_text().splitlines()[0] == "t_ms,u,v,K,eps,gamma"
    assert ManifestStore.load(f"{a}.manifest.json").seed == 4


def test_stochastic_streams_csv_and_conductance(tmp_path, capsys):
    cond = tmp_path / "cond.csv"
    assert main(["stochastic", *SHORT_WALK, "--conductance", str(cond)]) == 0
    captured = capsys.readouterr()
    assert captured.out.startswith("t_ms,u,v,K,eps,gamma\n")
    assert "seed=1" in captured.err
    assert len(captured.out.splitlines()) == 6002
    assert cond.read_text().splitlines()[0] == "t_ms,u_bar,e_current_3p5,v"


def test_psd_reads_stdin_with_dash_input(tmp_path, monkeypatch, capsys):
    traj = tmp_path / "walk.csv"
    assert main(["stochastic", "--seed", "2", *SHORT_WALK, "-o", str(traj)]) == 0
    capsys.readouterr()

    monkeypatch.setattr("sys.stdin", io.StringIO(traj.read_text()))
    spectral = ["--spectral.t0", "100", "--spectral.t1", "500"]
    assert main(["psd", "--input", "-", *spectral, "--band", "30", "90"]) == 0
    out = capsys.readouterr().out
    first = out.splitlines()[0]
    assert first.startswith("peak_hz=") and first.endswith("band=[30, 90]")
    peak = float(first.split()[0].split("=")[1])
    assert 30.0 <= peak <= 90.0 and peak % 5.0 == 0.0

    psd_out = tmp_path / "psd.csv"
    assert main(["psd", "--input", str(traj), *spectral, "-o", str(psd_out)]) == 0
    cols = read_columns(psd_out)
    assert len(cols["freq_hz"]) == 2000


def test_psd_ignores_stdin_without_dash_input(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("not,a,trajectory\n"))
    spectral = ["--spectral.t0", "100", "--spectral.t1", "500"]
    assert main(["psd", *SHORT_WALK, *spectral]) == 0
    assert capsys.readouterr().out.startswith("peak_hz=")


def test_spectrogram_long_form(tmp_path):
    traj = tmp_path / "walk.csv"
    assert main(["stochastic", *SHORT_WALK, "-o", str(traj)]) == 0
    out = tmp_path / "spec.csv"
    spectral = ["--spectral.t0", "100", "--spectral.t1", "500", "--spectral.shift", "50"]
    assert main(["spectrogram", "--input", str(traj), *spectral, "-o", str(out)]) == 0
    cols = read_columns(out)
    assert len(cols["power"]) == 5 * 1001
    assert cols["window_start_ms"][0] == 100.0 and cols["window_start_ms"][-1] == 300.0

    mean_peak = ManifestStore.load(f"{out}.manifest.json").headline["mean_peak_hz"]
    assert 20.0 <= mean_peak <= 120.0 and mean_peak % 5.0 == 0.0


def test_model_section_reaches_the_stochastic_run(tmp_path):
    base, steeper = tmp_path / "base.csv", tmp_path / "steeper.csv"
    assert main(["stochastic", *SHORT_WALK, "-o", str(base)]) == 0
    assert main(["stochastic", *SHORT_WALK, "--model.b", "12.5", "-o", str(steeper)]) == 0
    a, b = read_columns(base), read_columns(steeper)
    assert a["K"].tolist() == b["K"].tolist()
    assert a["u"][0] != b["u"][0]
    assert a["v"].tolist() != b["v"].tolist()


def test_seed_ensemble_rows(tmp_path, capsys):
    out = tmp_path / "ensemble.csv"
    spectral = ["--spectral.t0", "100", "--spectral.t1", "500"]
    code = main(["stochastic", "--seeds", "2", *SHORT_WALK, *spectral, "-o", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "seed,peak_hz,broadband_bins,ei_correlation"
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]
    assert int(lines[1].split(",")[2]) >= 1
    assert "min_broadband_bins=" in capsys.readouterr().out


def test_psd_errors_map_to_exit_codes(tmp_path):
    short = tmp_path / "short.csv"
    short.write_text("t_ms,u,v\n0,0.01,0.1\n0.1,0.01,0.1\n")
    assert main(["psd", "--input", str(short)]) == 8

    broken = tmp_path / "broken.csv"
    broken.write_text("t_ms,u,v\n0,0.01\n")
    assert main(["psd", "--input", str(broken)]) == 3
    assert main(["psd", "--input", str(tmp_path / "absent.csv")]) == 3


def test_canard_rows(tmp_path, capsys):
    out = tmp_path / "canard.csv"
    code = main(["canard", "--model.K", "60", "--eps-list", "0.01", "0.005", "-o", str(out)])
    assert code == 0
    assert out.read_text().splitlines()[0] == "epsilon,k,y_bar,prediction,abs_error"
    assert len(read_columns(out)["epsilon"]) == 2
    assert "rel_error=" in capsys.readouterr().out


def test_exit_code_map():
    assert exit_code_for(NotOscillatingError("x")) == 6
    assert exit_code_for(NoCrossingError("x")) == 6
    assert exit_code_for(RedrawExhaustedError(0.1, (1.0, 0.5), 10)) == 7
    assert exit_code_for(SpectralWindowError("x")) == 8
    assert exit_code_for(FileNotFoundError("x")) == 3
    assert exit_code_for(KeyError("x")) == 1


def test_every_subcommand_is_registered():
    parser = build_parser()
    for name in ("fixed-points", "simulate", "period", "hopf", "sweep", "stochastic", "psd",
                 "spectrogram", "canard"):
        args = parser.parse_args([name])
        assert callable(args.handler)


def test_simulate_trajectory_and_short_run_check(tmp_path):
    out = tmp_path / "traj.csv"
    flags = ["--model.K", "60", "--model.eps", "0.1", "--dt", "0.01"]
    code = main(["simulate", *flags, "--t-end", "10", "--integration.transient_discard", "0",
                 "-o", str(out)])
    assert code == 0
    cols = read_columns(out)
    assert len(cols["t_ms"]) == 1001
    assert cols["t_ms"][-1] == pytest.approx(10.0)

    # t_end shorter than the default transient is a configuration error
    assert main(["simulate", *flags, "--t-end", "10"]) == 2
