import numpy as np
import pytest

from vdwe.config import SimulationConfig
from vdwe.diagnostics import SobolevSeries
from vdwe.io import (
    HEADER_SIZE,
    RunRecord,
    read_series_csv,
    read_snapshot,
    read_snapshot_header,
    series_header,
    write_outputs,
    write_series_csv,
    write_snapshot,
)
from vdwe.solver import FieldSet, run


def random_series(rng, n=25, m=3, d=1):
    s = SobolevSeries(m=m, d=d)
    for i in range(n):
        s.append(
            t=0.05 * i, Y=rng.lognormal(size=m + 1), N=rng.lognormal(size=m + 1), min_pi=rng.normal() * 1e-9,
            max_rho=rng.uniform(), mass=rng.uniform(), momentum=rng.normal(size=d) * 1e-17, energy=rng.uniform(),
            sup=rng.uniform(size=3), max_pi=rng.uniform(),
        )
    s.Z = rng.lognormal(size=n)
    s.zeta = rng.lognormal(size=n)
    return s


def test_csv_round_trip_is_bit_exact(tmp_path, rng):
    s = random_series(rng)
    write_series_csv(s, tmp_path / "series.csv")
    back = read_series_csv(tmp_path / "series.csv")
    assert np.array_equal(back.Y_array(), s.Y_array())
    assert np.array_equal(back.N_array(), s.N_array())
    assert np.array_equal(back.momentum_array(), s.momentum_array())
    assert np.array_equal(back.sup_array(), s.sup_array())
    for name in ("t", "min_pi", "max_rho", "mass", "energy", "max_pi"):
        assert np.array_equal(np.asarray(getattr(back, name)), np.asarray(getattr(s, name))), name
    assert np.array_equal(back.Z, s.Z) and np.array_equal(back.zeta, s.zeta)


def test_csv_header_prefix():
    head = series_header(SobolevSeries(m=3, d=2))
    assert ",".join(head).startswith("t,Y0,Y1,Y2,Y3,Z,zeta,min_pi,max_rho,mass,momentum_x,momentum_y,energy")


@pytest.mark.parametrize("shape", [(64,), (16, 32)])
def test_snapshot_round_trip(tmp_path, rng, shape):
    d = len(shape)
    f = FieldSet(rng.normal(size=shape), rng.normal(size=(d,) + shape), rng.normal(size=shape), t=1.25)
    path = tmp_path / "snap.bin"
    write_snapshot(f, path)
    raw = path.read_bytes()
    assert raw[:4] == b"VDWE" and len(raw) == HEADER_SIZE + 8 * f.pi.size * (d + 2)
    head = read_snapshot_header(path)
    assert head["d"] == d and head["shape"] == shape and head["t"] == 1.25 and head["version"] == 1
    back = read_snapshot(path)
    assert np.array_equal(back.pi, f.pi) and np.array_equal(back.w, f.w) and np.array_equal(back.s, f.s)


def test_snapshot_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"\0" * 80)
    with pytest.raises(ValueError):
        read_snapshot_header(path)


def test_zero_run_outputs(tmp_path):
    cfg = SimulationConfig().replace(
        grid__N=256, grid__box=40.0, grid__T_end=0.5, init__eps=0.0,
        diagnostics__output_interval=0.1, diagnostics__snapshot_interval=0.25,
    )
    res = run(cfg)
    rec = RunRecord(cfg, series=res.series, snapshots=res.snapshots)
    write_outputs(rec, tmp_path, rec.snapshots)
    rows = (tmp_path / "series.csv").read_text().splitlines()
    head = rows[0].split(",")
    assert len(rows) == 7
    for row in rows[1:]:
        vals = dict(zip(head, row.split(",")))
        assert all(vals[f"Y{k}"] == "0" for k in range(4))
    assert (tmp_path / "summary.txt").read_text().startswith("vdwe ")
    assert cfg.digest() in (tmp_path / "summary.txt").read_text()
    assert (tmp_path / "config.txt").exists() and (tmp_path / "plotdata" / "Y0.txt").exists()
    assert len(list(tmp_path.glob("snapshot_*.bin"))) == 3


def test_identical_config_gives_identical_csv(tmp_path):
    cfg = SimulationConfig().replace(grid__N=256, grid__box=40.0, grid__T_end=0.5, diagnostics__output_interval=0.1)
    for name in ("a", "b"):
        write_series_csv(run(cfg).series, tmp_path / f"{name}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_unwritable_target(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        write_outputs(RunRecord(SimulationConfig()), blocker / "out")
