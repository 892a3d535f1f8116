"""Campaign configuration: one serializable object drives every stage.

A config round-trips through JSON; its digest (sha256 of the canonical JSON,
minus storage-location keys) names the campaign and is stamped into every
artifact the campaign or the analysis stage writes, so mismatched files are
detectable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .prompting import ShotSampling, Task, Variant

CONFIG_VERSION = 1

DEFAULT_TASKS = (
    Task.COMPLETION.value,
    Task.EXPLANATION.value,
    Task.CONSISTENCY_JUDGMENT.value,
    Task.VERBALIZE_ALTERNATIVES.value,
)

KNOWN_BACKENDS = ("oracle", "adversarial", "random_valid", "scripted", "http")

# Pure storage locations: they never change what a campaign computes, so they
# are excluded from the campaign digest and from the results-file header.
STORAGE_KEYS = ("output_dir", "cache_dir")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    """Everything a mine/run/analyze cycle needs, in one flat record."""

    # dataset
    constant_range: tuple[int, int] = (0, 4)
    lengths: tuple[int, ...] = (4,)
    base: int = 10
    start_index: int = 1
    max_offset: int = 4

    # prompting
    variant: str = Variant.PLAIN.value
    n_shots: int | None = None  # None = per-task default
    shot_sampling: str = ShotSampling.RANDOM.value
    role_text: str | None = None
    model_name: str | None = None

    # backend
    backend: str = "oracle"
    backend_seed: int = 0
    tie_break: str = "min_value"
    http_base_url: str | None = None
    http_model: str | None = None
    api_key_env: str = "AMBIGSEQ_API_KEY"
    fixtures_file: str | None = None
    cache_dir: str | None = None

    # campaign
    tasks: tuple[str, ...] = DEFAULT_TASKS
    n_runs: int = 3
    rng_seed: int = 0
    want_top_logprobs: int = 5
    limit_sequences: int | None = None
    output_dir: str = "results"

    def __post_init__(self) -> None:
        object.__setattr__(self, "constant_range", tuple(self.constant_range))
        object.__setattr__(self, "lengths", tuple(self.lengths))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        self.validate()

    def validate(self) -> None:
        lo, hi = self.constant_range
        if lo > hi or lo < 0:
            raise ConfigError(f"bad constant_range {self.constant_range}")
        if not self.lengths or any(n < 1 for n in self.lengths):
            raise ConfigError(f"bad lengths {self.lengths}")
        if self.base not in (10, 2):
            raise ConfigError(f"unsupported base {self.base}")
        if self.max_offset < 0:
            raise ConfigError(f"bad max_offset {self.max_offset}")
        Variant(self.variant)
        ShotSampling(self.shot_sampling)
        if self.backend not in KNOWN_BACKENDS:
            raise ConfigError(
                f"unknown backend {self.backend!r}; expected one of {KNOWN_BACKENDS}"
            )
        if self.backend == "http" and not (self.http_base_url and self.http_model):
            raise ConfigError("http backend needs http_base_url and http_model")
        if self.backend == "scripted" and not self.fixtures_file:
            raise ConfigError("scripted backend needs fixtures_file")
        unknown = [t for t in self.tasks if t not in DEFAULT_TASKS]
        if unknown:
            raise ConfigError(f"unknown tasks {unknown}")
        if not self.tasks:
            raise ConfigError("tasks cannot be empty")
        if Task.CONSISTENCY_JUDGMENT.value in self.tasks and not (
            Task.COMPLETION.value in self.tasks
            and Task.EXPLANATION.value in self.tasks
        ):
            raise ConfigError(
                "consistency_judgment needs completion and explanation results "
                "from the same run"
            )
        if self.backend == "random_valid":
            supported = {Task.COMPLETION.value, Task.EXPLANATION.value}
            extra = [t for t in self.tasks if t not in supported]
            if extra:
                raise ConfigError(
                    "random_valid backend only answers completion and "
                    f"explanation tasks; remove {extra} or choose another backend"
                )
        if self.n_runs < 1:
            raise ConfigError(f"n_runs must be >= 1, got {self.n_runs}")
        if self.n_shots is not None and self.n_shots < 0:
            raise ConfigError(f"n_shots must be >= 0, got {self.n_shots}")
        if not 0 <= self.want_top_logprobs <= 5:
            raise ConfigError("want_top_logprobs must be within 0..5")
        if self.limit_sequences is not None and self.limit_sequences < 1:
            raise ConfigError("limit_sequences must be >= 1 when set")

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        data = asdict(self)
        data["constant_range"] = list(self.constant_range)
        data["lengths"] = list(self.lengths)
        data["tasks"] = list(self.tasks)
        return data

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "CampaignConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("constant_range", "lengths", "tasks"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "CampaignConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_json(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(canonical_json(self.to_json()) + "\n")

    def override(self, **changes: Any) -> "CampaignConfig":
        return replace(self, **changes)

    def experiment_json(self) -> dict[str, Any]:
        """Config keys that define what is run, excluding where artifacts live.

        Two campaigns that differ only in storage locations (output directory,
        response cache) produce identical result content, so those keys do not
        participate in the campaign identity.
        """
        data = self.to_json()
        for key in STORAGE_KEYS:
            data.pop(key, None)
        return data

    def digest(self) -> str:
        """Short stable identifier of the experiment-defining configuration."""
        return hashlib.sha256(
            canonical_json(self.experiment_json()).encode()
        ).hexdigest()[:12]

    # -- derived views ------------------------------------------------------

    @property
    def variant_enum(self) -> Variant:
        return Variant(self.variant)

    @property
    def shot_sampling_enum(self) -> ShotSampling:
        return ShotSampling(self.shot_sampling)

    @property
    def task_enums(self) -> tuple[Task, ...]:
        # canonical execution order, not config order: judgments and
        # verbalizations consume same-run completion/explanation answers
        ordered = [t for t in DEFAULT_TASKS if t in self.tasks]
        return tuple(Task(t) for t in ordered)


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))
