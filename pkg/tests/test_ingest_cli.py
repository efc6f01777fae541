import datetime as dt
import json
import logging

import numpy as np
import pytest

from stfire import cli
from stfire.errors import EmptyPatternError, InvalidInputError
from stfire.geom import Window
from stfire.ingest import FireRecord, Projector, ingest_fires, parse_acq_time
from stfire.raster import GridRaster, read_ascii_grid, write_ascii_grid
from stfire.synthetic import make_synthetic_inputs

PROJ = Projector(14.0, 37.0, 88.0, 111.0)
BIG = Window.rectangle(-500, -500, 500, 500)
HEADER = "latitude,longitude,acq_date,acq_time,frp\n"


def write_csv(path, rows):
    path.write_text(HEADER + "".join(r + "\n" for r in rows))
    return path


def test_day_time_example():
    rec = FireRecord(37.5, 14.0, dt.date(2023, 7, 15), 1330)
    assert rec.day_time(2023) == pytest.approx(195 + 13.5 / 24)


@pytest.mark.parametrize("lat,lon,hhmm", [(91, 0, 0), (0, -181, 0), (0, 0, 2400), (0, 0, 1261)])
def test_record_validation(lat, lon, hhmm):
    with pytest.raises(InvalidInputError):
        FireRecord(lat, lon, dt.date(2023, 1, 1), hhmm)


def test_parse_acq_time():
    assert parse_acq_time("0049") == 49
    assert parse_acq_time("13:30") == 1330
    with pytest.raises(InvalidInputError):
        parse_acq_time("1pm")


def test_ingest_projects_and_drops(tmp_path, caplog):
    p = write_csv(tmp_path / "f.csv", [
        "37.5,14.0,2023-07-15,1330,12.5",
        "37.5,14.0,2023-07-15,1330,12.5",     # duplicate
        "37.6,14.2,2023-01-01,0000,3.0",
        "45.0,30.0,2023-03-01,0100,1.0",      # outside window
    ])
    with caplog.at_level(logging.INFO, logger="stfire"):
        pat = ingest_fires(p, PROJ, BIG)
    assert pat.n == 2
    assert pat.x[0] == pytest.approx(0.0) and pat.y[0] == pytest.approx(55.5)
    assert pat.t[0] == pytest.approx(195 + 13.5 / 24)
    assert pat.interval == (0.0, 365.0)
    assert pat.marks["frp"].tolist() == [12.5, 3.0]
    assert "duplicate" in caplog.text and "outside the window" in caplog.text


def test_ingest_errors(tmp_path):
    p = write_csv(tmp_path / "bad.csv", ["37.5,14.0,2023-07-15,1330,1", "37.5,14.0,not-a-date,1330,1"])
    with pytest.raises(InvalidInputError, match=":3:"):
        ingest_fires(p, PROJ, BIG)
    p = write_csv(tmp_path / "far.csv", ["10.0,10.0,2023-07-15,1330,1"])
    with pytest.raises(EmptyPatternError):
        ingest_fires(p, PROJ, Window.rectangle(0, 0, 1, 1))
    p = tmp_path / "cols.csv"
    p.write_text("lat,lon\n1,2\n")
    with pytest.raises(InvalidInputError):
        ingest_fires(p, PROJ, BIG)


def test_projector_round_trip():
    pr = Projector.local(14.0, 37.5)
    x, y = pr(np.array([14.3]), np.array([37.2]))
    lon, lat = pr.inverse(x, y)
    assert lon[0] == pytest.approx(14.3) and lat[0] == pytest.approx(37.2)


# ---------------------------------------------------------------- CLI

@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    d = make_synthetic_inputs(tmp_path_factory.mktemp("syn"), seed=3, scale=0.5)
    cfg = json.loads((d / "config.json").read_text())
    cfg["dummy_grid"] = [48, 48]
    cfg["spatial_knots"] = 12
    (d / "config.json").write_text(json.dumps(cfg))
    return d


def run(inputs, *args):
    return cli.main([args[0], "--config", str(inputs / "config.json"), *args[1:]])


def test_slope_on_flat_dem(tmp_path):
    write_ascii_grid(GridRaster(np.full((6, 7), 250.0), 0, 0, 1, 1), tmp_path / "dem.asc")
    (tmp_path / "c.json").write_text(json.dumps({"dem": "dem.asc", "output_dir": "o"}))
    assert cli.main(["slope", "--config", str(tmp_path / "c.json")]) == 0
    s = read_ascii_grid(tmp_path / "o" / "slope.asc")
    assert np.all(s.values[1:-1, 1:-1] == 0.0)
    manifest = json.loads((tmp_path / "o" / "slope.manifest.json").read_text())
    assert manifest["command"] == "slope" and "dem.asc" in manifest["inputs"]


def test_fit_spatial_json(inputs):
    assert run(inputs, "fit-spatial") == 0
    out = json.loads((inputs / "out" / "spatial_fit.json").read_text())
    assert out["converged"] is True
    terms = [r["term"] for r in out["table"]]
    assert terms[0] == "Intercept" and "elevation" in terms and "slope" in terms
    assert "Agricultural areas" in terms and "Artificial surfaces" not in terms
    assert out["fitted_integral"] == pytest.approx(out["n_events"], rel=0.02)


def test_every_command_writes_manifest(inputs):
    for command in cli.COMMANDS:
        assert run(inputs, command) == 0, command
        m = json.loads((inputs / "out" / f"{command}.manifest.json").read_text())
        assert m["seed"] == 3
        assert set(m["versions"]) >= {"stfire", "numpy", "scipy", "pandas", "python"}
        for name, digest in m["outputs"].items():
            assert (inputs / "out" / name).exists() and len(digest) == 64


def test_simulate_is_byte_identical(inputs, tmp_path):
    assert run(inputs, "simulate", "--output_dir", json.dumps(str(tmp_path / "a"))) == 0
    assert run(inputs, "simulate", "--output_dir", json.dumps(str(tmp_path / "b"))) == 0
    a = (tmp_path / "a" / "simulated.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulated.csv").read_bytes()
    assert run(inputs, "simulate", "--seed", "4", "--output_dir", json.dumps(str(tmp_path / "c"))) == 0
    assert a != (tmp_path / "c" / "simulated.csv").read_bytes()


@pytest.mark.parametrize("command", ["fit-temporal", "residuals", "combine"])
def test_rerun_from_manifest(inputs, tmp_path, command):
    first = tmp_path / "first"
    assert run(inputs, command, "--output_dir", json.dumps(str(first))) == 0
    manifest = first / f"{command}.manifest.json"
    assert cli.main(["rerun", str(manifest), "--output_dir", json.dumps(str(tmp_path / "second"))]) == 0
    m1 = json.loads(manifest.read_text())
    m2 = json.loads((tmp_path / "second" / f"{command}.manifest.json").read_text())
    assert m1["outputs"] == m2["outputs"]
    for name in m1["outputs"]:
        assert (first / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_errors_are_single_json_line(inputs, capsys):
    assert run(inputs, "fit-spatial", "--spatial_knots", "3") == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and json.loads(err[0])["error"] == "InvalidInputError"
    assert run(inputs, "fit-spatial", "--fires", '"missing.csv"') == 2
    assert "not found" in json.loads(capsys.readouterr().err)["message"]
    with pytest.raises(SystemExit) as exc:
        run(inputs, "fit-spatial", "--no_such_key", "1")
    assert exc.value.code == 2


def test_unknown_config_key(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"bogus": 1}))
    assert cli.main(["slope", "--config", str(tmp_path / "c.json")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_overrides_parse_json(tmp_path):
    cfg = cli.load_config(None, {"dummy_grid": [10, 12], "seed": 5})
    assert cfg.dummy_grid == [10, 12] and cfg.seed == 5
    assert cli._parse_value("[1, 2]") == [1, 2]
    assert cli._parse_value("out/dir") == "out/dir"
