"""The command line stages end to end on a small SBM, in a scratch directory."""
import subprocess
import sys
import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp(prefix="nai-"))
cfg = out / "run.cfg"
cfg.write_text(f"""data = {out / 'sbm.naib'}
out = {out / 'runs'}
k = 3
epochs = 60
patience = 20
lr = 0.01
gate_epochs = 60
batch_size = 100
""")


def nai(*args):
    print("$ nai", " ".join(args))
    subprocess.run([sys.executable, "-m", "nai", *args, "--config", str(cfg)], check=True)


nai("make-sbm", "--blocks", "3", "--block-size", "100", "--p-in", "0.08", "--signal", "1.0")
for stage in ("precompute", "train-teacher", "distill", "train-gates"):
    nai(stage)
nai("infer", "--policy", "gate")
nai("bench", "--policy", "distance", "--ts-sweep", "0:1.5:0.5")
print((out / "runs" / "bench" / "table.txt").read_text())
print((out / "runs" / "bench" / "pareto.csv").read_text())
for p in sorted((out / "runs").rglob("*")):
    if p.is_file():
        print(p.relative_to(out))
