import json
import math
import re

import pytest

from rbpsim import config as cfg
from rbpsim.cli import bubble_svg, main
from rbpsim.malthus import ModelParams


def write(tmp_path, obj, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


FIG1 = {"model": {"preset": "fig1"}, "seed": 7, "analysis_times": [6, 9], "replicas": 4,
        "threads": 1, "memory_cap": 1 << 22, "wave": {"time": 9}, "bubbles": {"time": 9}}


def test_check_fig1(tmp_path, capsys):
    assert main(["check", "--config", write(tmp_path, FIG1)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"condensing": True, "criterion_value": pytest.approx(0.75),
                   "lambda_star": 1.0, "omega": pytest.approx(0.25), "limit_mean": 0.5}


def test_check_point_mass(tmp_path, capsys):
    c = {"model": {"preset": "bianconi_barabasi",
                   "fitness": {"kind": "discrete", "atoms": [[0.5, 1.0]]}}}
    assert main(["check", "--config", write(tmp_path, c)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["condensing"] is False and out["lambda_star"] == 1.0


@pytest.mark.parametrize("bad", [
    {"model": {"beta": 0.3, "gamma": 0.5, "fitness": {"kind": "power_tail", "alpha": 3}}},
    {"model": {"preset": "fig1"}, "replicas": 0},
    {"model": {"preset": "house_of_cards", "fitness": {"kind": "power_tail", "alpha": 3}}},
    {"model": {"beta": 1, "gamma": 1, "fitness": {"kind": "power_tail"}}},
    {"model": {"beta": 1, "gamma": 1, "fitness": {"kind": "discrete", "atoms": [[1.0, 1.0]]}}},
    {"model": {"preset": "fig1"}, "analysis_times": [5, 3]},
    {"model": {"preset": "fig1"}, "unknown": 1},
])
def test_config_errors_exit_2(tmp_path, bad, capsys):
    assert main(["check", "--config", write(tmp_path, bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_json_and_missing_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert main(["check", "--config", str(p)]) == 2
    assert main(["check", "--config", str(tmp_path / "missing.json")]) == 2


def test_beta_gamma_sum_message(tmp_path, capsys):
    c = {"model": {"beta": 0.3, "gamma": 0.5, "fitness": {"kind": "power_tail", "alpha": 3}}}
    main(["check", "--config", write(tmp_path, c)])
    assert "beta + gamma" in capsys.readouterr().err


def test_presets():
    hoc = cfg.model_from_json({"preset": "house_of_cards", "beta": 0.3,
                               "fitness": {"kind": "power_tail", "alpha": 2}})
    assert (hoc.beta, hoc.gamma) == (0.3, 0.7)
    bb = cfg.model_from_json({"preset": "bianconi_barabasi",
                              "fitness": {"kind": "beta", "a": 2, "b": 3}})
    assert (bb.beta, bb.gamma) == (1.0, 1.0)
    po = cfg.model_from_json({"preset": "polya", "beta": 0.7, "gamma": 0.6,
                              "fitness": {"kind": "power_tail", "alpha": 2}})
    assert (po.beta, po.gamma) == (0.7, 0.6)


def _single_event(tmp_path, seed):
    c = {"model": {"beta": 0.7, "gamma": 0.6, "fitness": {"kind": "power_tail", "alpha": 2}},
         "stop": {"max_events": 1}, "seed": seed}
    out = tmp_path / f"s{seed}"
    assert main(["simulate", "--config", write(tmp_path, c), "--out", str(out), "--quiet"]) == 0
    return out


def test_simulate_single_event(tmp_path):
    seen = set()
    for seed in range(12):
        out = _single_event(tmp_path, seed)
        lines = (out / "families_final.csv").read_text().splitlines()
        assert lines[0] == "family_id,birth_time,fitness,size"
        summ = json.loads((out / "summary.json").read_text())
        kind = [k for k, v in summ["tallies"].items() if v == 1][0]
        assert len(lines) == (2 if kind == "reinforce_only" else 3)
        seen.add(len(lines))
    assert seen == {2, 3}


def test_simulate_k_events(tmp_path):
    c = {"model": {"preset": "fig1"}, "stop": {"max_events": 25}, "seed": 1}
    out = tmp_path / "o"
    assert main(["simulate", "--config", write(tmp_path, c), "--out", str(out), "--quiet"]) == 0
    assert len((out / "families_final.csv").read_text().splitlines()) == 1 + 26
    summ = json.loads((out / "summary.json").read_text())
    cfg.validate_summary(summ)
    assert ModelParams.from_json(summ["params"]) == cfg.model_from_json({"preset": "fig1"})
    assert (summ["N"], summ["M"]) == (51, 26)


def test_summary_schema_rejects_garbage():
    with pytest.raises(cfg.ConfigError):
        cfg.validate_summary({"seed": -1})


def _tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*"))
            if p.is_file()}


@pytest.mark.parametrize("cmd", ["check", "simulate", "limits", "wave", "bubbles"])
def test_subcommands_deterministic(tmp_path, cmd):
    c = write(tmp_path, FIG1)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([cmd, "--config", c, "--out", str(a), "--quiet"]) == 0
    assert main([cmd, "--config", c, "--out", str(b), "--quiet"]) == 0
    ta, tb = _tree(a), _tree(b)
    assert ta and ta == tb


def test_simulate_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", write(tmp_path, FIG1), "--out", str(out), "--quiet"]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"families_t6.csv", "families_t9.csv", "gamma_points_t9.csv", "snapshot_t9.json",
            "summary.json", "families_final.csv"} <= names
    assert (out / "gamma_points_t9.csv").read_text().startswith("rel_birth,scaled_gap,scaled_size\n")


def test_seed_override_changes_output(tmp_path):
    c = write(tmp_path, FIG1)
    main(["simulate", "--config", c, "--out", str(tmp_path / "a"), "--quiet"])
    main(["simulate", "--config", c, "--out", str(tmp_path / "b"), "--quiet", "--seed", "8"])
    assert (tmp_path / "a" / "summary.json").read_text() != (tmp_path / "b" / "summary.json").read_text()


def test_limits_and_wave(tmp_path, caplog):
    c = write(tmp_path, FIG1)
    assert main(["limits", "--config", c, "--out", str(tmp_path / "l"), "--quiet"]) == 0
    rep = json.loads((tmp_path / "l" / "report.json").read_text())
    assert set(rep["per_time"]) == {"6.0", "9.0"}
    assert main(["wave", "--config", c, "--out", str(tmp_path / "w")]) == 0
    lines = (tmp_path / "w" / "wave.csv").read_text().splitlines()
    assert lines[0] == "x,empirical,conjectured" and len(lines) == 50
    linf = json.loads((tmp_path / "w" / "wave.json").read_text())["linf"]
    assert math.isfinite(linf)
    assert any("L-infinity" in r.message for r in caplog.records)


def test_resource_abort_exit_3(tmp_path):
    c = {"model": {"preset": "bianconi_barabasi", "fitness": {"kind": "power_tail", "alpha": 1}},
         "stop": {"max_time": 40}, "memory_cap": 2000}
    assert main(["simulate", "--config", write(tmp_path, c), "--out", str(tmp_path / "o"),
                 "--quiet"]) == 3
    c.update(analysis_times=[40], replicas=2)
    assert main(["limits", "--config", write(tmp_path, c), "--out", str(tmp_path / "l"),
                 "--quiet"]) == 3


def test_bubbles_floor_and_svg(tmp_path):
    out = tmp_path / "b"
    assert main(["bubbles", "--config", write(tmp_path, FIG1), "--out", str(out), "--quiet"]) == 0
    rows = (out / "bubbles.csv").read_text().splitlines()
    assert rows[0] == "birth_time,fitness,size"
    sizes = [int(r.split(",")[2]) for r in rows[1:]]
    assert all(z >= 2 for z in sizes)
    svg = (out / "bubbles.svg").read_text()
    circles = re.findall(r'<circle [^>]*r="([^"]+)" data-size="(\d+)"', svg)
    assert len(circles) == len(sizes)
    ratios = [float(r) ** 2 / int(z) for r, z in circles]
    assert max(ratios) == pytest.approx(min(ratios), rel=1e-6)


def test_bubbles_empty_above_floor(tmp_path):
    c = dict(FIG1, bubbles={"time": 0.001, "size_floor": 2})
    out = tmp_path / "e"
    assert main(["bubbles", "--config", write(tmp_path, c), "--out", str(out), "--quiet"]) == 0
    assert (out / "bubbles.csv").read_text() == "birth_time,fitness,size\n"
    assert "<circle" not in (out / "bubbles.svg").read_text()


def test_svg_writer_radius():
    svg = bubble_svg([(1.0, 0.5, 4), (2.0, 0.9, 16)], 10.0)
    rs = [float(r) for r in re.findall(r' r="([^"]+)"', svg)]
    assert rs[1] == pytest.approx(2 * rs[0])
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
