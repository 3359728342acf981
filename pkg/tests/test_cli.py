import csv
import json
import math

import numpy as np
import pytest

from broadcast_discord import cli
from broadcast_discord.hierarchy import CUT_B, HierarchyOptions, all_cuts
from broadcast_discord.states import quantum_classical_state, random_density_matrix, random_unitary

FIG2 = """\
# small two-branch family sweep
state.family = fig2
state.theta_start = 0
state.theta_stop = pi/2
state.theta_count = 3
levels = 2, 3, 1:ppt
oracles.discord = true
oracles.grid = 31, 61
output.prefix = {prefix}
run.workers = 1
"""


@pytest.fixture(autouse=True)
def serial(monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "1")


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_real_and_bool():
    assert cli.parse_real("pi/2") == pytest.approx(math.pi / 2)
    assert cli.parse_real("3pi/8") == pytest.approx(3 * math.pi / 8)
    assert cli.parse_real("0.25*pi") == pytest.approx(math.pi / 4)
    assert cli.parse_real("1e-3") == pytest.approx(1e-3)
    assert cli.parse_bool("yes") and not cli.parse_bool("off")
    with pytest.raises(ValueError):
        cli.parse_bool("maybe")


def test_parse_level():
    assert cli.parse_level("3") == HierarchyOptions(3)
    assert cli.parse_level("1:ppt") == HierarchyOptions.ppt(1)
    assert cli.parse_level("2:ppt=all").ppt_cuts == all_cuts(2)
    assert cli.parse_level("2:ppt=B+BB1").ppt_cuts == frozenset({CUT_B, frozenset({0, 1})})
    assert not cli.parse_level("2:sym").bose
    with pytest.raises(ValueError):
        cli.parse_level("2:fast")


def test_validate_examples(tmp_path):
    good = write(tmp_path, FIG2.format(prefix="out/x"))
    assert cli.validate(good) == []
    assert cli.main(["validate", str(good)]) == 0
    bad = write(tmp_path, FIG2.format(prefix="o").replace("pi/2", "2.0"), "bad.cfg")
    diags = cli.validate(bad)
    assert [d.key for d in diags] == ["state.theta_stop"]
    empty = write(tmp_path, "state.family = fig2\nlevels = \n", "empty.cfg")
    assert any(d.key == "levels" for d in cli.validate(empty))
    assert cli.main(["validate", str(empty)]) == 1
    assert cli.main(["run", str(empty)]) == 1


def test_validate_schema_errors(tmp_path):
    text = "state.family = moon\nlevels = 2\nstate.colour = red\nstate.theta_count = many\n"
    keys = {d.key for d in cli.validate(write(tmp_path, text))}
    assert {"state.family", "state.colour", "state.theta_count"} <= keys
    assert cli.validate(write(tmp_path, "levels 2\n", "syntax.cfg"))[0].message.startswith("line 1")
    missing = "state.family = file\nstate.path = nope.txt\nlevels = 2\n"
    assert any(d.key == "state.path" for d in cli.validate(write(tmp_path, missing, "m.cfg")))


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def strip_seconds(text):
    return [line.rsplit(",", 1)[0] for line in text.splitlines()]


def test_run_fig2_sweep(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    cfg = write(tmp_path, FIG2.format(prefix="out/fig2"))
    assert cli.main(["run", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "fig2.csv")
    assert list(rows[0]) == cli.CSV_HEADER
    assert len(rows) == 3 * 4
    assert [r["k"] for r in rows[:4]] == ["2", "3", "1", "-1"]
    for r in rows:
        assert r["status"] == "optimal"
        d = float(r["d_bound"])
        assert math.isfinite(d) and d >= 0
    for i in range(3):
        d2, d3, dp, disc = (float(r["d_bound"]) for r in rows[4 * i:4 * i + 4])
        assert d2 <= d3 + 1e-6 <= dp + 2e-6 and dp <= disc + 1e-4
    manifest = json.loads((tmp_path / "out" / "fig2.manifest.json").read_text())
    assert manifest["config"]["levels"] == "2, 3, 1:ppt"
    assert {"numpy", "cvxpy", "scipy"} <= set(manifest["versions"])
    assert manifest["rows"] == 12 and manifest["wall_seconds"] > 0
    table = cli.summarize(tmp_path / "out" / "fig2.csv")
    assert "k=1,ppt=B" in table and "discord" in table
    assert all(line.split()[-1] == "0" for line in table.splitlines()[1:])


def test_run_is_reproducible(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    text = FIG2.format(prefix="a").replace("oracles.discord = true", "oracles.eb_search = true\noracles.eb_samples = 1")
    text = text.replace("state.theta_count = 3", "state.theta_count = 2")
    cfg = write(tmp_path, text)
    first = None
    for prefix in ("a", "b"):
        c, d = cli.build_config(cli.read_config_text(cfg.read_text().replace("prefix = a", f"prefix = {prefix}")))
        assert not d
        rows, man = cli.run(c, workers=1)
        cli.write_outputs(c.prefix, rows, man)
        text = (tmp_path / f"{prefix}.csv").read_text()
        first = first or text
    assert strip_seconds(first) == strip_seconds(text)


def test_run_parallel_matches_serial(tmp_path):
    cfg, diags = cli.build_config(cli.read_config_text(FIG2.format(prefix="p").replace("oracles.discord = true", "")))
    assert not diags
    serial, _ = cli.run(cfg, workers=1)
    parallel, _ = cli.run(cfg, workers=2)
    assert strip_seconds(cli.format_rows(serial)) == strip_seconds(cli.format_rows(parallel))


def test_file_family_quantum_classical(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    u = random_unitary(2, seed=1)
    rho = quantum_classical_state([0.5, 0.5], [random_density_matrix(2, seed=2), random_density_matrix(2, seed=3)], u)
    rho.save(tmp_path / "qc.txt")
    text = "state.family = file\nstate.path = qc.txt\nlevels = 2, 4, 1:ppt\noracles.discord = true\noutput.prefix = qc\n"
    assert cli.main(["run", str(write(tmp_path, text))]) == 0
    rows = read_csv(tmp_path / "qc.csv")
    assert len(rows) == 4
    assert all(abs(float(r["d_bound"])) <= 1e-6 for r in rows)


def test_random_family_and_partial_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    text = "state.family = random\nstate.count = 2\nstate.dims = 2, 2\nlevels = 2\nsolver.max_iters = 2\noutput.prefix = r\n"
    assert cli.main(["run", str(write(tmp_path, text))]) == 2
    rows = read_csv(tmp_path / "r.csv")
    assert [r["family"] for r in rows] == ["random", "random"]
    assert all(r["status"] != "optimal" for r in rows)


def test_worker_env_override(monkeypatch):
    cfg = cli.ExperimentConfig(workers=3)
    monkeypatch.setenv(cli.WORKERS_ENV, "5")
    assert cli.resolve_workers(cfg) == 5
    monkeypatch.delenv(cli.WORKERS_ENV)
    assert cli.resolve_workers(cfg) == 3
    monkeypatch.setenv(cli.WORKERS_ENV, "zero")
    with pytest.raises(cli.ConfigError):
        cli.resolve_workers(cfg)


def test_summarize_counts_violations():
    rows = [dict(family="f", param=0.0, k=k, bose=True, ppt=ppt, F_star=1.0, d_bound=d, status="optimal",
                 gap=0.0, seconds=0.0)
            for k, ppt, d in [(2, "none", 0.3), (3, "none", 0.2), (1, "B", 0.25), (-1, "none", 0.24)]]
    viol = cli.monotonicity_violations(rows)
    assert viol[(2, True, "none")] == 1
    assert viol[(1, True, "B")] == 1
    assert viol.get((3, True, "none"), 0) == 0
    table = cli.summarize_rows(rows)
    assert table.splitlines()[0].split() == ["level", "rows", "failed", "d_min", "d_max", "violations"]


def test_summarize_parse_errors(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text(",".join(cli.CSV_HEADER) + "\nfig2,0,2,true,none,1,0,optimal,0,0.1\nfig2,0,x,true\n")
    with pytest.raises(cli.CsvParseError) as e:
        cli.summarize(p)
    assert e.value.line == 3
    p.write_text(",".join(cli.CSV_HEADER) + "\nfig2,0,two,true,none,1,0,optimal,0,0.1\n")
    assert cli.main(["summarize", str(p)]) == 1
    assert "line 2" in capsys.readouterr().err
    p.write_text("a,b\n")
    with pytest.raises(cli.CsvParseError) as e:
        cli.summarize(p)
    assert e.value.line == 1


def test_format_rows_round_trip():
    rows = [dict(family="fig2", param=0.5, k=2, bose=True, ppt="none", F_star=0.99, d_bound=0.029,
                 status="optimal", gap=1e-11, seconds=0.25)]
    back = cli.read_rows(cli.format_rows(rows))
    assert back[0]["k"] == 2 and back[0]["bose"] is True
    assert back[0]["d_bound"] == pytest.approx(0.029)
