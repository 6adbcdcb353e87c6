import csv
import json
import shutil
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import small_config
from idslab import cli, pipeline
from idslab.config import ExperimentConfig
from idslab.errors import StratificationError
from idslab.flows import CSV_HEADER, Dataset
from idslab.learners import ALGORITHMS


def write_config(tmp_path, config):
    path = tmp_path / "experiment.ini"
    path.write_text(config.to_ini())
    return str(path)


def error_of(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    """All four subcommands run through ``main`` on a small config."""
    root = tmp_path_factory.mktemp("cli")
    out = root / "out"
    ini = write_config(root, small_config(str(out)))
    codes = {cmd: cli.main([cmd, "--config", ini])
             for cmd in ("simulate", "extract", "train-eval", "report")}
    return root, out, ini, codes


def test_all_subcommands_succeed(cli_run):
    _, out, _, codes = cli_run
    assert set(codes.values()) == {0}
    for name in ("config.ini", "packets.csv", "run_manifest.json", "register_dump.txt",
                 "dataset.csv", "metrics.csv", "roc.csv", "importance.json",
                 "importance.csv", "manifest.json"):
        assert (out / name).is_file(), name
    for alg in ALGORITHMS:
        assert (out / "models" / f"{alg}.json").is_file()
        assert (out / "reports" / f"{alg}.json").is_file()
    assert pipeline.verify_manifest(out) == []
    assert not list(out.rglob(".*.tmp"))


def test_outputs_are_well_formed(cli_run):
    _, out, _, _ = cli_run
    with open(out / "dataset.csv", newline="") as fh:
        assert tuple(next(csv.reader(fh))) == CSV_HEADER
    with open(out / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["algorithm"] for r in rows] == list(ALGORITHMS)
    imp = json.loads((out / "importance.json").read_text())
    assert len(imp["top5"]) == 5
    assert abs(sum(r["normalized"] for r in imp["ranking"]) - 1) < 1e-9
    dump = (out / "register_dump.txt").read_text()
    assert dump.strip()


def test_written_config_reloads(cli_run):
    _, out, ini, _ = cli_run
    stored = ExperimentConfig.load(out / "config.ini")
    assert stored.with_overrides(out=str(out)) == ExperimentConfig.load(ini)
    assert str(out) not in (out / "config.ini").read_text()


def test_report_detects_tampering(cli_run, tmp_path, capsys):
    _, out, ini, _ = cli_run
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    assert cli.main(["report", "--config", ini, "--out", str(copy)]) == 0
    capsys.readouterr()
    with open(copy / "dataset.csv", "a") as fh:
        fh.write("\n")
    assert cli.main(["report", "--config", ini, "--out", str(copy)]) == 1
    doc = error_of(capsys)
    assert doc["error"] == "ManifestError"
    assert "dataset.csv" in doc["message"]
    (copy / "roc.csv").unlink()
    assert cli.main(["report", "--config", ini, "--out", str(copy)]) == 1
    assert "missing" in error_of(capsys)["message"]


def test_seed_override_changes_the_run(cli_run, tmp_path):
    _, out, ini, _ = cli_run
    assert cli.main(["simulate", "--config", ini, "--out", str(tmp_path), "--seed", "12"]) == 0
    assert (tmp_path / "packets.csv").read_bytes() != (out / "packets.csv").read_bytes()
    assert ExperimentConfig.load(tmp_path / "config.ini").seed == 12


def test_bad_config_gives_json_error(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[simulation]\nhorizon = -1\n")
    assert cli.main(["simulate", "--config", str(ini), "--out", str(tmp_path / "o")]) == 2
    doc = error_of(capsys)
    assert doc["error"] == "ConfigurationError"
    assert doc["path"] == "simulation.horizon"
    assert not (tmp_path / "o").exists()


def test_missing_input_gives_json_error(tmp_path, capsys):
    assert cli.main(["extract", "--out", str(tmp_path)]) == 2
    assert error_of(capsys)["error"] in ("FileNotFoundError", "ParseError")


def test_malformed_packet_log_reports_line(tmp_path, capsys):
    log = tmp_path / "packets.csv"
    log.write_text("not,a,packet,log\n")
    assert cli.main(["extract", "--out", str(tmp_path), "--packets", str(log)]) == 2
    doc = error_of(capsys)
    assert doc["error"] == "ParseError"
    assert doc["line"] == 1
    assert doc["path"] == str(log)


def test_normal_only_run(tmp_path):
    config = replace(small_config(str(tmp_path)), scenarios=(), target=None)
    assert config.scenarios == () and config.target is None
    lines = []
    run = pipeline.simulate(config, log=lines.append)
    assert run.composition["normal"] == 100.0
    assert all(p.label == 0 for p in run.packets)
    dataset = pipeline.extract(config, log=lines.append)
    assert len(dataset) > 0 and not dataset.y.any()
    first = (tmp_path / "dataset.csv").read_bytes()
    pipeline.extract(config, log=lines.append)
    assert (tmp_path / "dataset.csv").read_bytes() == first

    # one class only: the split refuses and no training outputs appear
    with pytest.raises(StratificationError):
        pipeline.train_eval(config, log=lines.append)
    assert not (tmp_path / "metrics.csv").exists()
    assert not (tmp_path / "models").exists() or not any((tmp_path / "models").iterdir())
    assert pipeline.verify_manifest(tmp_path) == []


def test_single_class_dataset_through_cli(tmp_path, capsys):
    Dataset(np.ones((20, len(CSV_HEADER) - 1)), np.zeros(20)).to_csv(tmp_path / "d.csv")
    code = cli.main(["train-eval", "--out", str(tmp_path), "--dataset", str(tmp_path / "d.csv")])
    assert code == 1
    assert error_of(capsys)["error"] == "StratificationError"


def test_failed_stage_leaves_nothing_behind(tmp_path):
    with pytest.raises(RuntimeError):
        with pipeline.Stage(tmp_path) as stage:
            stage.write_text("a.txt", "partial")
            stage.write_text("sub/b.txt", "partial")
            raise RuntimeError("boom")
    leftovers = [p for p in Path(tmp_path).rglob("*") if p.is_file()]
    assert leftovers == []


def test_stage_commit_updates_manifest(tmp_path):
    with pipeline.Stage(tmp_path) as stage:
        stage.write_text("a.txt", "one")
    with pipeline.Stage(tmp_path) as stage:
        stage.write_text("b.txt", "two")
    files = pipeline.load_manifest(tmp_path)["files"]
    assert set(files) == {"a.txt", "b.txt"}
    assert files["a.txt"] == pipeline.sha256_file(tmp_path / "a.txt")


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit) as info:
        cli.main(["fly"])
    assert info.value.code != 0
