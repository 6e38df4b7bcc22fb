# Walkthrough: LoRA adapter arithmetic at desk scale.
#
# The merged weight is W + (alpha/rank) * B @ A.  Merging then multiplying
# must agree with the unmerged forward path, which makes the two code paths
# each other's oracle.
#
# Run with:  python3 demos/adapter_merging.py

import numpy as np

from platy import (
    LoraAdapter,
    WeightMatrix,
    adapter_forward,
    merge_adapter,
    merge_recipe,
    validate_config,
)
from platy.adapterlab import reference_configs

rng = np.random.default_rng(0)

# -- a rank-1 example small enough to read ------------------------------------
w = WeightMatrix("gate_proj", np.eye(2))
adapter = LoraAdapter("gate_proj", rank=1, alpha=1.0, A=[[0.0, 1.0]], B=[[1.0], [0.0]])
print("W =\n", w.values)
print("merged =\n", merge_adapter(w, adapter).values)

# -- merge/forward equivalence on random shapes --------------------------------
w = WeightMatrix("up_proj", rng.normal(size=(8, 8)))
adapter = LoraAdapter("up_proj", rank=2, alpha=16.0,
                      A=rng.normal(size=(2, 8)), B=rng.normal(size=(8, 2)))
x = rng.normal(size=8)
merged_then_multiply = merge_adapter(w, adapter).values @ x
forward = adapter_forward(w, adapter, x)
print("\nmax |merged@x - forward|:", np.max(np.abs(merged_then_multiply - forward)))

# -- one adapter set onto two different bases ----------------------------------
def random_base():
    return {
        name: WeightMatrix(name, rng.normal(size=(8, 8)))
        for name in ("gate_proj", "down_proj", "up_proj", "embed")
    }

bases = {"broad-base": random_base(), "niche-base": random_base()}
adapters = [
    LoraAdapter(name, 16, 16.0, A=rng.normal(size=(16, 8)), B=rng.normal(size=(8, 16)))
    for name in ("gate_proj", "down_proj", "up_proj")
]
for recipe in bases:
    merged = merge_recipe(bases, adapters, recipe)
    untouched = np.array_equal(merged["embed"].values, bases[recipe]["embed"].values)
    print(f"{recipe}: merged {len(adapters)} modules, untargeted module untouched: {untouched}")

# -- training-config validation --------------------------------------------------
for name, cfg in reference_configs().items():
    report = validate_config(cfg)
    print(f"\n{name} config ok={report.ok} (lr={cfg.learning_rate}, "
          f"rank={cfg.lora_rank}, alpha={cfg.lora_alpha}, scaling={cfg.lora_alpha/cfg.lora_rank})")

cfg = reference_configs()["13b"]
cfg.target_modules = ["q_proj", "v_proj"]
report = validate_config(cfg)
print("attention-style targets warn:", report.warnings[0][:72], "...")
