"""Campaign configuration: validation, serialization, digests."""

import json

import pytest

from ambigseq.config import (
    DEFAULT_TASKS,
    CampaignConfig,
    ConfigError,
    canonical_json,
)
from ambigseq.prompting import Task


class TestValidation:
    def test_defaults_are_valid(self):
        CampaignConfig()

    @pytest.mark.parametrize(
        "changes",
        [
            {"constant_range": (4, 0)},
            {"constant_range": (-1, 4)},
            {"lengths": ()},
            {"lengths": (0,)},
            {"base": 16},
            {"max_offset": -1},
            {"variant": "whimsical"},
            {"shot_sampling": "alphabetical"},
            {"backend": "telepathy"},
            {"backend": "http"},  # missing url + model
            {"backend": "http", "http_base_url": "http://x"},  # missing model
            {"backend": "scripted"},  # missing fixtures file
            {"backend": "random_valid"},  # default tasks include judgment
            {
                "backend": "random_valid",
                "tasks": ("completion", "explanation", "verbalize_alternatives"),
            },
            {"tasks": ("completion", "divination")},
            {"tasks": ()},
            {"n_runs": 0},
            {"n_shots": -1},
            {"want_top_logprobs": 6},
            {"want_top_logprobs": -1},
            {"limit_sequences": 0},
        ],
    )
    def test_bad_values_rejected(self, changes):
        with pytest.raises((ConfigError, ValueError)):
            CampaignConfig(**changes)

    def test_judgment_requires_completion_and_explanation(self):
        with pytest.raises(ConfigError, match="consistency_judgment"):
            CampaignConfig(tasks=("completion", "consistency_judgment"))
        with pytest.raises(ConfigError, match="consistency_judgment"):
            CampaignConfig(tasks=("explanation", "consistency_judgment"))
        CampaignConfig(
            tasks=("completion", "explanation", "consistency_judgment")
        )

    def test_http_backend_fully_specified_is_valid(self):
        CampaignConfig(
            backend="http", http_base_url="http://localhost:1", http_model="m"
        )

    def test_random_valid_backend_with_supported_tasks_is_valid(self):
        CampaignConfig(
            backend="random_valid", tasks=("completion", "explanation")
        )

    def test_lists_coerced_to_tuples(self):
        config = CampaignConfig(lengths=[2, 3], tasks=["completion"])
        assert config.lengths == (2, 3)
        assert config.tasks == ("completion",)


class TestSerialization:
    def test_json_round_trip(self):
        config = CampaignConfig(
            lengths=(2, 4),
            backend="random_valid",
            backend_seed=7,
            n_shots=2,
            tasks=("completion", "explanation"),
        )
        assert CampaignConfig.from_json(config.to_json()) == config

    def test_unknown_key_rejected(self):
        data = CampaignConfig().to_json()
        data["flux_capacitor"] = True
        with pytest.raises(ConfigError, match="flux_capacitor"):
            CampaignConfig.from_json(data)

    def test_missing_keys_take_defaults(self):
        config = CampaignConfig.from_json({"rng_seed": 9})
        assert config.rng_seed == 9
        assert config.n_runs == CampaignConfig().n_runs

    def test_file_round_trip(self, tmp_path):
        config = CampaignConfig(lengths=(3,), rng_seed=42)
        path = tmp_path / "config.json"
        config.save(path)
        assert CampaignConfig.from_file(path) == config

    def test_from_file_rejects_bad_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            CampaignConfig.from_file(path)

    def test_from_file_rejects_non_object(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="JSON object"):
            CampaignConfig.from_file(path)

    def test_override_returns_changed_copy(self):
        base = CampaignConfig()
        changed = base.override(rng_seed=5, lengths=(2,))
        assert changed.rng_seed == 5
        assert changed.lengths == (2,)
        assert base.rng_seed == 0

    def test_canonical_json_is_compact_and_sorted(self):
        text = canonical_json({"b": 1, "a": [1, 2]})
        assert text == '{"a":[1,2],"b":1}'
        assert json.loads(text) == {"a": [1, 2], "b": 1}


class TestDigest:
    def test_digest_is_stable(self):
        assert CampaignConfig().digest() == CampaignConfig().digest()
        assert len(CampaignConfig().digest()) == 12

    def test_digest_changes_with_experiment_parameters(self):
        base = CampaignConfig()
        assert base.digest() != base.override(rng_seed=1).digest()
        assert base.digest() != base.override(lengths=(2,)).digest()
        assert base.digest() != base.override(backend="adversarial").digest()

    def test_digest_ignores_storage_locations(self):
        base = CampaignConfig()
        moved = base.override(output_dir="elsewhere", cache_dir="/tmp/cache")
        assert base.digest() == moved.digest()

    def test_experiment_json_excludes_storage_keys(self):
        data = CampaignConfig().experiment_json()
        assert "output_dir" not in data
        assert "cache_dir" not in data
        assert "rng_seed" in data
        assert "backend" in data


class TestDerivedViews:
    def test_task_enums_follow_canonical_order(self):
        shuffled = tuple(reversed(DEFAULT_TASKS))
        config = CampaignConfig(tasks=shuffled)
        assert [t.value for t in config.task_enums] == list(DEFAULT_TASKS)

    def test_task_enums_subset(self):
        config = CampaignConfig(tasks=("explanation", "completion"))
        assert config.task_enums == (Task.COMPLETION, Task.EXPLANATION)
