import json
import tempfile
from pathlib import Path

import pytest

from config import ExperimentConfig, parse_config
from modules.base import ConfigurationError, MaskKind, RadiusUnit
from tests.mock import MockExperimentFactory

factory = MockExperimentFactory()


def _write(tmp_path, document, name="experiment.json"):
    path = tmp_path / name
    path.write_text(document if isinstance(document, str) else json.dumps(document))
    return path


def test_empty_file_gives_defaults(tmp_path):
    config = parse_config(_write(tmp_path, ""))
    assert config.agent.lr == 1e-4
    assert config.agent.beta_e == 0.001
    assert config.agent.n_hidden == 256
    assert config.agent.k_layers == 2
    assert config.reservoir.spectral_radius == 1.0
    assert config.reservoir.radius_unit is RadiusUnit.BLOCKS
    assert config.mask.min_val == 0.25
    assert config.mask.max_val == 5.0
    assert config.mask.penalty_coef == 1e-5
    assert config.training.convergence_threshold == 0.9
    assert config.training.eval_window == 100
    (run,) = config.run_configs()
    assert run.layout.size == 37


def test_epic_multiplier_from_document(tmp_path):
    config = parse_config(_write(tmp_path, {"mask": {"kind": "epic", "u_multiplier": 8}}))
    assert config.mask.kind is MaskKind.EPIC
    assert config.mask.u_length(37) == 296
    assert config.run_configs()[0].slug == "epic-u296"


def test_invalid_documents_name_the_key(tmp_path):
    cases = [
        ({"mask": {"min_val": 6.0, "max_val": 5.0}}, "mask.min_val"),
        ({"mask": {"colour": "red"}}, "mask.colour"),
        ({"agent": {"n_hidden": "wide"}}, "agent.n_hidden"),
        ({"agent": {"lr": True}}, "agent.lr"),
        ({"mask": {"kind": "dropout"}}, "mask.kind"),
        ({"reservoir": {"n_shared": 40}}, "reservoir.n_shared"),
        ({"variants": [{"name": "a", "optimizer": {}}]}, "variants[0].optimizer"),
    ]
    for document, key in cases:
        with pytest.raises(ConfigurationError) as info:
            parse_config(_write(tmp_path, document))
        assert info.value.key == key


def test_malformed_json_reports_line(tmp_path):
    with pytest.raises(ConfigurationError) as info:
        parse_config(_write(tmp_path, '{\n  "agent": {\n    "lr": ,\n  }\n}'))
    assert ":3:" in str(info.value)
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / "missing.json")


def test_int_accepted_for_float(tmp_path):
    config = parse_config(_write(tmp_path, {"reservoir": {"spectral_radius": 1}}))
    assert isinstance(config.reservoir.spectral_radius, float)


def test_round_trip(tmp_path):
    document = factory.create_mock_config_document([MaskKind.IDENTITY, MaskKind.EPIC])
    config = ExperimentConfig.from_dict(document)
    path = tmp_path / "resolved.json"
    config.save_to_file(path)
    again = parse_config(path)
    assert again.to_dict() == config.to_dict()
    assert [r.config_hash() for r in again.run_configs()] == [r.config_hash() for r in config.run_configs()]


def test_variants_expand_into_run_configs():
    document = factory.create_mock_config_document([MaskKind.IDENTITY, MaskKind.VECTOR_FILTER, MaskKind.EPIC])
    document["variants"][2]["bandit"] = {"noise_dim": 8}
    config = ExperimentConfig.from_dict(document)
    runs = config.run_configs()
    assert [r.name for r in runs] == ["identity", "vector-filter", "epic"]
    assert [r.mask.kind for r in runs] == [MaskKind.IDENTITY, MaskKind.VECTOR_FILTER, MaskKind.EPIC]
    assert runs[0].bandit.noise_dim == 4 and runs[2].bandit.noise_dim == 8
    assert runs[2].bandit.episode_len == 5
    assert all(r.training.seeds == [7, 8] for r in config.run_configs(seeds=[7, 8]))
    assert config.training.seeds == [0]

    document["variants"].append({"name": "epic", "mask": {"kind": "epic"}})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(document)


def test_shipped_experiments_parse():
    root = Path(__file__).resolve().parent.parent / "experiments"
    kinds = {}
    for path in sorted(root.glob("*.json")):
        config = parse_config(path)
        kinds[path.stem] = [run.mask.kind for run in config.run_configs()]
    assert kinds["figure_1a"] == list(MaskKind)
    assert kinds["smoke"] == [MaskKind.IDENTITY]
    assert parse_config(root / "sanity.json").bandit.noise_dim == 0
    slugs = [run.slug for run in parse_config(root / "u_length.json").run_configs()]
    assert slugs == ["epic-u148", "epic-u296"]


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("EPIC_WORKBENCH_OUT_DIR", "/tmp/elsewhere")
    monkeypatch.setenv("EPIC_WORKBENCH_WORKERS", "3")
    monkeypatch.setenv("EPIC_WORKBENCH_LOG_LEVEL", "debug")
    config = ExperimentConfig.from_env()
    assert config.suite.out_dir == "/tmp/elsewhere"
    assert config.suite.workers == 3
    assert config.suite.log_level == "DEBUG"

    monkeypatch.setenv("EPIC_WORKBENCH_WORKERS", "many")
    with pytest.raises(ConfigurationError) as info:
        ExperimentConfig().apply_env()
    assert info.value.key == "suite.workers"


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        test_empty_file_gives_defaults(tmp_path)
        test_epic_multiplier_from_document(tmp_path)
        test_invalid_documents_name_the_key(tmp_path)
        test_malformed_json_reports_line(tmp_path)
        test_int_accepted_for_float(tmp_path)
        test_round_trip(tmp_path)
    print("Config file checks successful.")
    test_variants_expand_into_run_configs()
    test_shipped_experiments_parse()
    print("Variant checks successful.")


if __name__ == "__main__":
    main()
