"""Desk-scale LoRA adapter arithmetic and training-config validation.

An adapter holds a rank-r decomposition (A: r x k, B: d x r) plus a scaling
factor alpha; merging folds (alpha/rank) * B @ A into the dense base weight.
Everything runs in float64 so the merge/forward oracle tests carry no
precision ambiguity.  Weight and adapter sets travel in a minimal
self-describing binary container (see ``save_weights``/``save_adapters``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Mapping, Sequence

import numpy as np

WEIGHTS_MAGIC = b"PLTW"
ADAPTERS_MAGIC = b"PLTA"
CONTAINER_VERSION = 1

KNOWN_PROMPT_TEMPLATES = frozenset({"alpaca"})
ATTENTION_STYLE_MODULES = frozenset({"v_proj", "q_proj", "k_proj", "o_proj"})


class ShapeError(ValueError):
    pass


class ContainerFormatError(ValueError):
    pass


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a 2-D matrix with positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass
class WeightMatrix:
    """A dense base weight for one target module (d x k)."""

    name: str
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = _as_matrix(self.values, f"weight {self.name!r}")

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


@dataclass
class LoraAdapter:
    """Low-rank update for one target module: W' = W + (alpha/rank) * B @ A."""

    target: str
    rank: int
    alpha: float
    A: np.ndarray  # rank x k
    B: np.ndarray  # d x rank

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError(f"rank must be a positive integer, got {self.rank}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        self.A = _as_matrix(self.A, f"adapter {self.target!r} A")
        self.B = _as_matrix(self.B, f"adapter {self.target!r} B")
        if self.A.shape[0] != self.rank:
            raise ShapeError(
                f"adapter {self.target!r}: A is {self.A.shape}, expected ({self.rank}, k)"
            )
        if self.B.shape[1] != self.rank:
            raise ShapeError(
                f"adapter {self.target!r}: B is {self.B.shape}, expected (d, {self.rank})"
            )

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank


def merge_adapter(weight: WeightMatrix, adapter: LoraAdapter) -> WeightMatrix:
    """Fold the scaled low-rank product into the base weight; W is untouched."""
    if adapter.target != weight.name:
        raise ShapeError(
            f"adapter targets {adapter.target!r} but weight is {weight.name!r}"
        )
    if adapter.B.shape[0] != weight.d or adapter.A.shape[1] != weight.k:
        raise ShapeError(
            f"adapter {adapter.target!r} shapes B{adapter.B.shape} @ A{adapter.A.shape} "
            f"do not fit weight {weight.values.shape}"
        )
    merged = weight.values + adapter.scaling * (adapter.B @ adapter.A)
    return WeightMatrix(weight.name, merged)


def adapter_forward(weight: WeightMatrix, adapter: LoraAdapter, x: np.ndarray) -> np.ndarray:
    """Unmerged forward path: W @ x + (alpha/rank) * B @ (A @ x)."""
    if adapter.target != weight.name:
        raise ShapeError(
            f"adapter targets {adapter.target!r} but weight is {weight.name!r}"
        )
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (weight.k,):
        raise ShapeError(f"input has shape {x.shape}, expected ({weight.k},)")
    if adapter.B.shape[0] != weight.d or adapter.A.shape[1] != weight.k:
        raise ShapeError(
            f"adapter {adapter.target!r} shapes B{adapter.B.shape} @ A{adapter.A.shape} "
            f"do not fit weight {weight.values.shape}"
        )
    return weight.values @ x + adapter.scaling * (adapter.B @ (adapter.A @ x))


def merge_recipe(
    bases: Mapping[str, Mapping[str, WeightMatrix]],
    adapters: Sequence[LoraAdapter],
    recipe: str,
) -> dict[str, WeightMatrix]:
    """Merge an adapter set onto the named base; untargeted modules pass through."""
    if recipe not in bases:
        raise KeyError(f"unknown base {recipe!r}; have {sorted(bases)}")
    base = bases[recipe]
    missing = sorted(a.target for a in adapters if a.target not in base)
    if missing:
        raise ShapeError(f"base {recipe!r} is missing target modules: {', '.join(missing)}")
    by_target = {a.target: a for a in adapters}
    merged: dict[str, WeightMatrix] = {}
    for name, weight in base.items():
        if name in by_target:
            merged[name] = merge_adapter(weight, by_target[name])
        else:
            merged[name] = WeightMatrix(name, weight.values.copy())
    return merged


@dataclass
class FinetuneConfig:
    """Training hyperparameters; validated and emitted, never executed here."""

    batch_size: int
    micro_batch_size: int
    num_epochs: int
    learning_rate: float
    cutoff_len: int
    lora_rank: int
    lora_alpha: float
    lora_dropout: float
    target_modules: list[str]
    train_on_inputs: bool = False
    add_eos_token: bool = False
    group_by_length: bool = False
    prompt_template: str = "alpaca"
    lr_scheduler: str = "cosine"
    warmup_steps: int = 100


@dataclass
class ConfigReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_config(cfg: FinetuneConfig) -> ConfigReport:
    """Check invariants; attention-style target modules only warn."""
    report = ConfigReport()
    if cfg.lora_rank <= 0:
        report.violations.append("lora_rank must be positive")
    if not 0.0 <= cfg.lora_dropout < 1.0:
        report.violations.append("lora_dropout must be in [0, 1)")
    if not cfg.target_modules:
        report.violations.append("target_modules must be non-empty")
    if cfg.prompt_template not in KNOWN_PROMPT_TEMPLATES:
        report.violations.append(
            f"prompt_template {cfg.prompt_template!r} is not a known template"
        )
    for f_name in ("batch_size", "micro_batch_size", "num_epochs", "cutoff_len", "warmup_steps"):
        if getattr(cfg, f_name) < (0 if f_name == "warmup_steps" else 1):
            report.violations.append(f"{f_name} must be positive")
    if cfg.learning_rate <= 0:
        report.violations.append("learning_rate must be positive")
    if cfg.lora_alpha <= 0:
        report.violations.append("lora_alpha must be positive")
    attention = sorted(set(cfg.target_modules) & ATTENTION_STYLE_MODULES)
    if attention:
        report.warnings.append(
            "attention-style target modules "
            f"({', '.join(attention)}) typically underperform the MLP projections "
            "unless trainable parameters are a tiny fraction of the total"
        )
    return report


def reference_configs() -> dict[str, FinetuneConfig]:
    """The shipped 13B/70B configurations (they differ only in learning rate)."""
    def make(lr: float) -> FinetuneConfig:
        return FinetuneConfig(
            batch_size=16,
            micro_batch_size=1,
            num_epochs=1,
            learning_rate=lr,
            cutoff_len=4096,
            lora_rank=16,
            lora_alpha=16,
            lora_dropout=0.05,
            target_modules=["gate_proj", "down_proj", "up_proj"],
        )
    return {"13b": make(4e-4), "70b": make(3e-4)}


# --- container I/O ---------------------------------------------------------

def _write_name(fh: BinaryIO, name: str) -> None:
    raw = name.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ContainerFormatError("truncated container")
    return data


def _read_name(fh: BinaryIO) -> str:
    (nlen,) = struct.unpack("<H", _read_exact(fh, 2))
    return _read_exact(fh, nlen).decode("utf-8")


def save_weights(path: str | Path, modules: Mapping[str, WeightMatrix]) -> None:
    """Header (magic, version, module count), then per module name/d/k/values."""
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<BI", CONTAINER_VERSION, len(modules)))
        for name, weight in modules.items():
            _write_name(fh, name)
            fh.write(struct.pack("<II", weight.d, weight.k))
            fh.write(np.ascontiguousarray(weight.values).astype("<f8").tobytes())


def load_weights(path: str | Path) -> dict[str, WeightMatrix]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != WEIGHTS_MAGIC:
            raise ContainerFormatError(f"{path} is not a weight container")
        version, count = struct.unpack("<BI", _read_exact(fh, 5))
        if version != CONTAINER_VERSION:
            raise ContainerFormatError(f"unsupported container version {version}")
        modules: dict[str, WeightMatrix] = {}
        for _ in range(count):
            name = _read_name(fh)
            d, k = struct.unpack("<II", _read_exact(fh, 8))
            values = np.frombuffer(_read_exact(fh, 8 * d * k), dtype="<f8").reshape(d, k)
            modules[name] = WeightMatrix(name, values.copy())
        return modules


def save_adapters(path: str | Path, adapters: Sequence[LoraAdapter]) -> None:
    """Same container idea, plus per-adapter rank/alpha and the A/B factors."""
    with open(path, "wb") as fh:
        fh.write(ADAPTERS_MAGIC)
        fh.write(struct.pack("<BI", CONTAINER_VERSION, len(adapters)))
        for adapter in adapters:
            _write_name(fh, adapter.target)
            d, k = adapter.B.shape[0], adapter.A.shape[1]
            fh.write(struct.pack("<IIId", d, k, adapter.rank, adapter.alpha))
            fh.write(np.ascontiguousarray(adapter.B).astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(adapter.A).astype("<f8").tobytes())


def load_adapters(path: str | Path) -> list[LoraAdapter]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != ADAPTERS_MAGIC:
            raise ContainerFormatError(f"{path} is not an adapter container")
        version, count = struct.unpack("<BI", _read_exact(fh, 5))
        if version != CONTAINER_VERSION:
            raise ContainerFormatError(f"unsupported container version {version}")
        adapters: list[LoraAdapter] = []
        for _ in range(count):
            name = _read_name(fh)
            d, k, rank, alpha = struct.unpack("<IIId", _read_exact(fh, 20))
            b = np.frombuffer(_read_exact(fh, 8 * d * rank), dtype="<f8").reshape(d, rank)
            a = np.frombuffer(_read_exact(fh, 8 * rank * k), dtype="<f8").reshape(rank, k)
            adapters.append(LoraAdapter(name, rank, alpha, a.copy(), b.copy()))
        return adapters
