import json
import tempfile
from pathlib import Path

import numpy as np

from expcli import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUN_FAILURE
from expcli import main as cli
from modules.base import MaskKind
from tests.mock import MockExperimentFactory

factory = MockExperimentFactory()


def _config_file(tmp_path, document):
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(document))
    return path


def _step_scores(rise_at, length=1000):
    scores = np.zeros(length)
    scores[rise_at:] = 1.0
    return scores


def test_run_smoke(tmp_path):
    document = factory.create_mock_config_document([MaskKind.IDENTITY, MaskKind.EPIC])
    out = tmp_path / "out"
    assert cli(["run", str(_config_file(tmp_path, document)), "--out", str(out), "--seeds", "0"]) == EXIT_OK
    assert len(list(out.glob("identity_identity_seed0.csv"))) == 1
    assert len(list(out.glob("epic_epic-u36_seed0.csv"))) == 1
    assert len(list(out.glob("*.masks.csv"))) == 2
    report = out / f"{document['name']}_report.csv"
    lines = report.read_text().splitlines()
    assert lines[0] == "# threshold=0.9"
    assert (out / "resolved_config.json").is_file()
    assert (out / "workbench.log").is_file()


def test_run_rejections(tmp_path):
    document = factory.create_mock_config_document()
    config = _config_file(tmp_path, document)
    assert cli(["run", str(config), "--resume", "--out", str(tmp_path / "r")]) == EXIT_CONFIG_ERROR
    assert cli(["run"]) == EXIT_CONFIG_ERROR
    assert cli(["run", str(config), "--seeds", "a,b"]) == EXIT_CONFIG_ERROR

    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert cli(["run", str(config), "--out", str(blocker / "out")]) == EXIT_CONFIG_ERROR

    bad = dict(document, mask={"min_val": 6.0, "max_val": 5.0})
    assert cli(["run", str(_config_file(tmp_path, bad))]) == EXIT_CONFIG_ERROR


def test_run_failure_exit_code(tmp_path):
    document = factory.create_mock_config_document()
    document["reservoir"]["max_size"] = 10
    out = tmp_path / "out"
    assert cli(["run", str(_config_file(tmp_path, document)), "--out", str(out)]) == EXIT_RUN_FAILURE
    assert "failed" in (out / f"{document['name']}_report.csv").read_text()


def test_validate_config(tmp_path, capsys):
    config = _config_file(tmp_path, factory.create_mock_config_document([MaskKind.LAYERNORM]))
    assert cli(["validate-config", str(config)]) == EXIT_OK
    printed = capsys.readouterr().out
    assert '"n_hidden": 8' in printed
    assert "layernorm: LayerNorm" in printed

    broken = tmp_path / "broken.json"
    broken.write_text('{"agent": {"k_layers": "two"}}')
    assert cli(["validate-config", str(broken)]) == EXIT_CONFIG_ERROR


def test_report_check_ordering(tmp_path):
    ordered = tmp_path / "ordered"
    paths = [factory.write_mock_curve_csv(ordered, "identity", 0, _step_scores(600)),
             factory.write_mock_curve_csv(ordered, "layernorm", 0, _step_scores(300)),
             factory.write_mock_curve_csv(ordered, "epic-u36", 0, _step_scores(100))]
    out = tmp_path / "report.csv"
    args = ["report", *map(str, paths), "--check-ordering", "--out", str(out)]
    assert cli(args) == EXIT_OK
    text = out.read_text()
    assert "run,No mask,0,689" in text
    assert "run,EPIC (36),0,189" in text

    reversed_dir = tmp_path / "reversed"
    paths = [factory.write_mock_curve_csv(reversed_dir, "identity", 0, _step_scores(100)),
             factory.write_mock_curve_csv(reversed_dir, "epic-u36", 0, _step_scores(600))]
    assert cli(["report", *map(str, paths)]) == EXIT_OK
    assert cli(["report", *map(str, paths), "--check-ordering"]) == EXIT_OK
    paths.append(factory.write_mock_curve_csv(reversed_dir, "layernorm", 0, _step_scores(300)))
    assert cli(["report", *map(str, paths), "--check-ordering"]) == EXIT_RUN_FAILURE


def test_report_scaling_from(tmp_path):
    def suite(directory, layernorm_rise, epic_rise):
        return [str(factory.write_mock_curve_csv(tmp_path / directory, "layernorm", 0, _step_scores(layernorm_rise))),
                str(factory.write_mock_curve_csv(tmp_path / directory, "epic-u36", 0, _step_scores(epic_rise)))]

    fewer = suite("noise32", 400, 100)
    assert cli(["report", *suite("noise64", 500, 100), "--scaling-from", *fewer]) == EXIT_OK
    assert cli(["report", *suite("weak64", 400, 200), "--check-ordering"]) == EXIT_OK
    assert cli(["report", *suite("weak64", 400, 200), "--scaling-from", *fewer]) == EXIT_RUN_FAILURE


def test_plot_command(tmp_path):
    path = factory.write_mock_curve_csv(tmp_path, "vector_filter", 1, factory.create_mock_scores(200, 50))
    svg = tmp_path / "curves.svg"
    assert cli(["plot", str(path), "--smooth", "20", "--out", str(svg)]) == EXIT_OK
    assert "Vector filter" in svg.read_text()
    assert cli(["plot", str(path), "--smooth", "500", "--out", str(tmp_path / "x.svg")]) == EXIT_CONFIG_ERROR
    assert cli(["plot", str(tmp_path / "missing.csv")]) == EXIT_CONFIG_ERROR


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        test_run_smoke(tmp_path / "smoke")
        test_run_rejections(tmp_path / "rejections")
        test_run_failure_exit_code(tmp_path / "failure")
        print("Run command checks successful.")
        test_report_check_ordering(tmp_path / "report")
        test_report_scaling_from(tmp_path / "scaling")
        test_plot_command(tmp_path / "plot")
        print("Report and plot command checks successful.")


if __name__ == "__main__":
    main()
