"""Per-depth classifiers on an SBM with and without distillation."""
import numpy as np

from nai.data import synth_sbm
from nai.experiments import CALIBRATION_SBM, desk_config
from nai.inference import InferencePolicy
from nai.pipeline import evaluate_row, train_all

data = synth_sbm(**CALIBRATION_SBM, seed=0)
print(f"SBM: n={data.graph.n} m={data.graph.m} f={data.features.shape[1]} c={data.n_classes}")
cfg = desk_config(seed=0)

rows = {}
for name, single, multi in [("plain CE", False, False), ("single only", True, False),
                            ("both stages", True, True)]:
    model, _ = train_all(data, cfg, single=single, multi=multi, gates=False)
    rows[name] = [evaluate_row(f"l={l}", model, data, InferencePolicy.fixed(l))[0].acc
                  for l in range(1, cfg.k + 1)]

print("\ntest accuracy per depth (percent)")
print("depth        " + "  ".join(f"{l:>6d}" for l in range(1, cfg.k + 1)))
for name, accs in rows.items():
    print(f"{name:<12} " + "  ".join(f"{a:6.2f}" for a in accs))
# the teacher f^(k) is shared, so the last column is identical in every row
