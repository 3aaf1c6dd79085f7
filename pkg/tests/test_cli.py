import csv
import math

import pytest
import yaml

from complexnets import cli
from complexnets.config import ConfigError, ExperimentConfig, default_config, load_config


def tiny_config(**over) -> dict:
    cfg = {
        "schema_version": 1,
        "n": 24,
        "l": 60,
        "dataset": {"kind": "swiss_roll", "m": 300, "n_reps": 1, "sizes": [150, 75, 75]},
        "families": [{"name": "er", "kind": "er"}, {"name": "ba", "kind": "ba"}],
        "lr_grid": [0.01],
        "bs_grid": [64],
        "hpo_seeds": [0, 1],
        "eval_seeds": [100, 101, 102],
        "train": {"max_epochs": 3},
        "sweep": {"sizes": [32, 64, 128], "densities": [0.05, 0.09, 0.15], "seeds": [0, 1, 2], "batch_size": 64},
        "robustness": {"fractions": [0.0, 0.25, 0.5]},
    }
    cfg.update(over)
    return cfg


def write_cfg(tmp_path, **over):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(tiny_config(**over)))
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config ---------------------------------------------------------------


def test_default_config_roundtrip(tmp_path):
    cfg = default_config()
    assert cfg.edges == 732 and cfg.n == 128
    fams = cfg.resolved_families()
    assert len(fams) == 6
    p = tmp_path / "d.yaml"
    p.write_text(cfg.to_yaml())
    back = load_config(p)
    assert back == cfg and back.hash() == cfg.hash()
    assert len(cfg.hash()) == 12


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(tiny_config(schema_version=2))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(tiny_config(colour="red"))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(tiny_config(hpo_seeds=[100]))
    bad = tiny_config(families=[{"name": "m", "kind": "mlp"}])
    with pytest.raises(ConfigError, match="mlp"):
        ExperimentConfig.from_dict(bad).resolved_families()
    assert cli.main(["generate", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2


# --- generate -------------------------------------------------------------


def test_generate_counts_and_bytes(tmp_path):
    cfg = write_cfg(tmp_path)
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a = sorted((tmp_path / "a" / "graphs").rglob("*.json"))
    b = sorted((tmp_path / "b" / "graphs").rglob("*.json"))
    assert len(a) == 2 * 3
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_default_generate_count(tmp_path):
    paths = cli.cmd_generate(default_config(), tmp_path)
    assert len(paths) == 90


def test_generate_infeasible_names_family(tmp_path, capsys):
    # ring degree 2 * ceil(265 / 24) = 24 is not below n
    cfg = write_cfg(tmp_path, l=265, families=[{"name": "ws-tight", "kind": "ws", "p": 0.1}])
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "ws-tight" in capsys.readouterr().err


# --- experiment / stats ---------------------------------------------------


@pytest.fixture(scope="module")
def experiment_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("exp")
    cfg = write_cfg(tmp)
    assert cli.main(["experiment", "--config", str(cfg), "--out", str(tmp / "out")]) == 0
    return tmp


def test_experiment_outputs(experiment_dir):
    out = experiment_dir / "out"
    res = rows(out / "results.csv")
    assert list(res[0]) == cli.RESULT_COLUMNS
    assert len({r["config_hash"] for r in res}) == 1
    assert sum(r["phase"] == "hpo" for r in res) == 2 * 2
    assert sum(r["phase"] == "eval" for r in res) == 2 * 3
    assert {r["run_id"] for r in res if r["phase"] == "eval"} >= {"er/seed_100", "ba/seed_102"}
    st = rows(out / "stats.csv")
    assert [r["test"] for r in st] == ["kruskal_wallis", "mann_whitney"]
    assert len(list((out / "models").rglob("*.json"))) == 6
    assert (out / "grid_er.csv").exists() and (out / "summary.csv").exists()


def test_experiment_refuses_and_resumes(experiment_dir):
    out = experiment_dir / "out"
    cfg = experiment_dir / "cfg.yaml"
    before = (out / "results.csv").read_text()
    assert cli.main(["experiment", "--config", str(cfg), "--out", str(out)]) == 2
    assert cli.main(["experiment", "--config", str(cfg), "--out", str(out), "--resume"]) == 0
    assert (out / "results.csv").read_text() == before


def test_experiment_rejects_mixed_config(experiment_dir, tmp_path):
    other = write_cfg(tmp_path, eval_seeds=[200, 201])
    assert cli.main(["experiment", "--config", str(other), "--out", str(experiment_dir / "out"), "--resume"]) == 2


def test_stats_command(experiment_dir, tmp_path):
    res = experiment_dir / "out" / "results.csv"
    assert cli.main(["stats", "--results", str(res), "--out", str(tmp_path), "--correction", "holm"]) == 0
    st = rows(tmp_path / "stats.csv")
    assert len(st) == 2 and all(0 <= float(r["p"]) <= 1 for r in st)


def test_workers_match_serial(experiment_dir, tmp_path):
    cfg = experiment_dir / "cfg.yaml"
    assert cli.main(["experiment", "--config", str(cfg), "--out", str(tmp_path), "--workers", "2"]) == 0
    key = ["phase", "run_id", "lr", "batch_size", "best_val_loss", "test_accuracy", "epochs_run"]
    serial = [[r[k] for k in key] for r in rows(experiment_dir / "out" / "results.csv")]
    par = [[r[k] for k in key] for r in rows(tmp_path / "results.csv")]
    assert serial == par


# --- robustness / attributes ----------------------------------------------


def test_robustness(experiment_dir, tmp_path):
    cfg = experiment_dir / "cfg.yaml"
    models = experiment_dir / "out" / "models"
    assert cli.main(["robustness", "--config", str(cfg), "--models", str(models), "--out", str(tmp_path)]) == 0
    rb = rows(tmp_path / "robustness.csv")
    assert len(rb) == 2 * 3
    zero = [r for r in rb if float(r["f"]) == 0]
    assert all(float(r["gain_mean"]) == 1.0 for r in zero)
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["robustness", "--config", str(cfg), "--models", str(empty), "--out", str(tmp_path)]) == 2


def test_attributes_k4(tmp_path):
    g = tmp_path / "graphs" / "k4"
    g.mkdir(parents=True)
    (g / "seed_0.json").write_text('{"n": 4, "family": "er", "edges": [[0,1],[0,2],[0,3],[1,2],[1,3],[2,3]]}')
    assert cli.main(["attributes", "--graphs", str(tmp_path / "graphs"), "--out", str(tmp_path)]) == 0
    (row,) = rows(tmp_path / "attributes.csv")
    assert row["run_id"] == "k4/seed_0"
    assert float(row["density"]) == 1.0


def test_attributes_join_warns(experiment_dir, tmp_path, caplog):
    out = experiment_dir / "out"
    cli.cmd_generate(load_config(experiment_dir / "cfg.yaml"), tmp_path)
    extra = tmp_path / "graphs" / "er" / "seed_999.json"
    extra.write_text((tmp_path / "graphs" / "er" / "seed_100.json").read_text())
    with caplog.at_level("WARNING", logger="complexnets"):
        table = cli.cmd_attributes(tmp_path / "graphs", tmp_path, out / "results.csv")
    assert len(table) == 7
    assert "er/seed_999" in caplog.text
    missing = [r for r in table if r["run_id"] == "er/seed_999"]
    assert missing[0]["test_accuracy"] == ""
    corr = rows(tmp_path / "correlations.csv")
    assert {r["attribute"] for r in corr} == set(cli.analysis.ATTRIBUTE_NAMES)


# --- sweep ----------------------------------------------------------------


def test_sweep_rows(tmp_path):
    over = {"families": [{"name": "er", "kind": "er"}], "train": {"max_epochs": 1}}
    cfg = write_cfg(tmp_path, **over)
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    sw = rows(tmp_path / "sweep.csv")
    assert len(sw) == 9
    for r in sw:
        n, rho = int(r["n"]), float(r["rho"])
        assert int(r["l"]) == round(rho * n * (n - 1) / 2)
    first = sw[0]
    assert (first["n"], first["l"], first["status"]) == ("32", "25", "infeasible")
    assert math.isnan(float(first["mean_accuracy"]))
    # sparse small cells can lose seeds whose graphs have more leaves than I/O slots
    assert all(r["status"] in ("ok", "partial", "infeasible") for r in sw)
    assert all(r["status"] == "ok" for r in sw if int(r["n"]) == 128)
    for r in sw:
        runs = int(r["runs"])
        assert (runs == 0) == (r["status"] == "infeasible")
        assert (runs == 3) == (r["status"] == "ok")


def test_sweep_rejects_mlp(tmp_path):
    cfg = write_cfg(tmp_path, families=[{"name": "m", "kind": "mlp"}])
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("name", ["default", "ba_vs_mlp_d12", "sweep", "ablations"])
def test_shipped_configs_resolve(name):
    from pathlib import Path

    cfg = load_config(Path(__file__).parents[1] / "configs" / f"{name}.yaml")
    fams = cfg.resolved_families()
    assert cfg.edges == 732 and len(fams) == len(cfg.families)
