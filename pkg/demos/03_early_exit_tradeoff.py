"""Fixed depth against distance-based and gate-based early exit on an SBM."""
import numpy as np

from nai.data import synth_sbm
from nai.experiments import TRADEOFF_SBM, desk_config
from nai.inference import InferencePolicy
from nai.metrics import to_text
from nai.pipeline import evaluate_row, gate_policy, train_all, tune_distance_policy, validation_sweep

data = synth_sbm(**TRADEOFF_SBM, seed=0)
cfg = desk_config(seed=0)
model, _ = train_all(data, cfg)

fixed, _ = evaluate_row("fixed k=5", model, data, InferencePolicy.fixed(5))

# validation sweep over T_s for the full depth range
sweep = validation_sweep(model, data, [0.0, 0.5, 1.0, 1.5, 2.0], t_maxes=[5])
print("T_s  val acc  FP MACs/node")
for _, t_s, acc, fp in sweep:
    print(f"{t_s:3.1f}  {100 * acc:6.2f}  {fp:10.0f}")

pol, _ = tune_distance_policy(model, data, np.round(np.arange(0, 2.01, 0.05), 2))
nai_d, rep_d = evaluate_row("NAI_d", model, data, pol)
nai_g, rep_g = evaluate_row("NAI_g", model, data, gate_policy(model))
print(f"\ntuned distance policy: T_max={pol.t_max} T_s={pol.t_s}")
print(to_text([fixed, nai_d, nai_g], fixed))
print("\nexit histogram NAI_d", rep_d.histogram().tolist())
print("exit histogram NAI_g", rep_g.histogram().tolist())
