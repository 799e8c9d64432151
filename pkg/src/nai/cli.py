"""Command line front end: ``nai <command> [--config FILE] [--key value ...]``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import checkpoint, verify
from .classifiers import ClassifierStack, TrainConfig
from .data import load_bundle, save_bundle, synth_sbm
from .distillation import DistillConfig
from .gates import GateStack, GateTrainConfig
from .inference import InferencePolicy, ModelBundle
from .metrics import report, to_csv, to_text
from .pipeline import (PipelineConfig, evaluate, evaluate_row, fit_gates, fit_students,
                       fit_teacher, train_view)
from .propagation import Combinator

log = logging.getLogger("nai")

COMMANDS = ("precompute", "train-teacher", "distill", "train-gates", "infer", "bench", "verify",
            "make-sbm")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Flat run configuration; defaults are the Flickr settings for the SGC base model."""

    data: str = ""
    out: str = "runs"
    mode: str = "sgc"
    k: int = 7
    gamma: float = 0.5
    s2gc_divisor: str = "literal"
    lr: float = 0.001
    wd: float = 0.0
    dropout: float = 0.3
    epochs: int = 500
    patience: int = 50
    hidden: str = ""
    t_single: float = 1.2
    lam_single: float = 0.6
    t_multi: float = 1.9
    lam_multi: float = 0.8
    r: int = 0
    teacher_weight: float = 1.0
    gate_lr: float = 0.01
    gate_epochs: int = 300
    gate_patience: int = 50
    gate_restarts: int = 1
    policy: str = "distance"
    t_min: int = 1
    t_max: int = 0
    t_s: float = 0.0
    batch_size: int = 500
    seed: int = 0

    def validate(self) -> None:
        errs = []
        if self.mode not in {m.value for m in Combinator}:
            errs.append(f"mode: must be one of sgc, sign, s2gc (got {self.mode!r})")
        if self.k < 1:
            errs.append("k: must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            errs.append("gamma: must lie in [0, 1]")
        if self.s2gc_divisor not in ("literal", "mean"):
            errs.append("s2gc_divisor: must be literal or mean")
        for name in ("lr", "gate_lr", "t_single", "t_multi"):
            if getattr(self, name) <= 0:
                errs.append(f"{name}: must be positive")
        for name in ("wd", "t_s"):
            if getattr(self, name) < 0:
                errs.append(f"{name}: must be nonnegative")
        for name in ("dropout",):
            if not 0.0 <= getattr(self, name) < 1.0:
                errs.append(f"{name}: must lie in [0, 1)")
        for name in ("lam_single", "lam_multi"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                errs.append(f"{name}: must lie in [0, 1]")
        for name in ("epochs", "patience", "gate_epochs", "gate_patience", "gate_restarts", "batch_size"):
            if getattr(self, name) < 1:
                errs.append(f"{name}: must be >= 1")
        if not 0 <= self.r <= self.k:
            errs.append("r: must lie in [0, k] (0 means min(3, k - 1))")
        if self.policy not in ("distance", "gate", "fixed"):
            errs.append("policy: must be distance, gate or fixed")
        t_max = self.t_max or self.k
        if not 1 <= self.t_min <= t_max <= self.k:
            errs.append(f"t_min/t_max: need 1 <= t_min <= t_max <= k (got {self.t_min}, {t_max}, k={self.k})")
        try:
            self.hidden_sizes()
        except ValueError:
            errs.append("hidden: comma separated positive integers")
        if errs:
            raise ConfigError("; ".join(errs))

    def hidden_sizes(self) -> tuple:
        sizes = tuple(int(h) for h in self.hidden.split(",") if h.strip())
        if any(h < 1 for h in sizes):
            raise ValueError("hidden")
        return sizes

    def pipeline(self) -> PipelineConfig:
        tc = TrainConfig(lr=self.lr, wd=self.wd, dropout=self.dropout, epochs=self.epochs,
                         patience=self.patience, hidden=self.hidden_sizes())
        dc = DistillConfig(self.t_single, self.lam_single, self.t_multi, self.lam_multi,
                           self.r or None, self.teacher_weight, single=tc, multi=tc)
        gc = GateTrainConfig(lr=self.gate_lr, epochs=self.gate_epochs, patience=self.gate_patience,
                             restarts=self.gate_restarts)
        return PipelineConfig(self.mode, self.k, self.gamma, self.s2gc_divisor, tc, dc, gc,
                              self.batch_size, self.seed)

    def inference_policy(self) -> InferencePolicy:
        t_max = self.t_max or self.k
        if self.policy == "fixed":
            return InferencePolicy.fixed(t_max)
        return InferencePolicy(self.policy, self.t_min, t_max, self.t_s)


def _coerce(name: str, kind, text: str):
    try:
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
        return str(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    valid = {f.name: f.type for f in fields(RunConfig)}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in valid:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, valid[key], value)
    return out


def build_config(args) -> RunConfig:
    values = read_config(args.config) if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ----------------------------------------------------------------- artifacts

def stage_dir(cfg: RunConfig, stage: str) -> Path:
    d = Path(cfg.out) / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _need(path: Path, producer: str) -> Path:
    if not path.exists():
        raise ConfigError(f"missing upstream artifact {path} (run `nai {producer}` first)")
    return path


def _load_data(cfg: RunConfig):
    if not cfg.data:
        raise ConfigError("data: a dataset bundle path is required")
    return load_bundle(_need(Path(cfg.data), "make-sbm"))


def _load_stack(cfg: RunConfig, stage: str, producer: str) -> ClassifierStack:
    stack = ClassifierStack.load(_need(Path(cfg.out) / stage / "stack.nai", producer))
    if stack.k != cfg.k or Combinator(stack.mode).value != cfg.mode:
        raise ConfigError(f"k/mode: checkpoint has k={stack.k}, mode={Combinator(stack.mode).value}")
    return stack


def _model(cfg: RunConfig, need_gates: bool) -> ModelBundle:
    stack = _load_stack(cfg, "distill", "distill")
    gates = None
    gate_path = Path(cfg.out) / "train-gates" / "gates.nai"
    if need_gates:
        gates = GateStack.load(_need(gate_path, "train-gates"))
    elif gate_path.exists():
        gates = GateStack.load(gate_path)
    return ModelBundle(stack, cfg.gamma, gates, cfg.s2gc_divisor)


# ----------------------------------------------------------------- commands

def cmd_precompute(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    view = train_view(data, cfg.pipeline())
    meta = {"kind": "depth_features", "mode": cfg.mode, "k": cfg.k, "gamma": cfg.gamma}
    arrays = list(view.df.stack) + [view.st.coeff, view.st.aggregate, view.nodes.astype(np.float64)]
    path = stage_dir(cfg, "precompute") / "features.nai"
    checkpoint.save(path, meta, arrays)
    log.info("wrote %s (%d depths over %d training nodes)", path, cfg.k + 1, len(view.nodes))
    return 0


def cmd_train_teacher(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    pc = cfg.pipeline()
    view = train_view(data, pc)
    stack = fit_teacher(view, pc, data.n_classes, pc.stage_seeds()["teacher"])
    path = stage_dir(cfg, "train-teacher") / "stack.nai"
    stack.save(path)
    log.info("wrote %s", path)
    return 0


def cmd_distill(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    pc = cfg.pipeline()
    view = train_view(data, pc)
    stack = _load_stack(cfg, "train-teacher", "train-teacher")
    stack, s_vectors = fit_students(view, stack, pc, pc.stage_seeds()["distill"],
                                    single=not args.no_single_scale, multi=not args.no_multi_scale)
    out = stage_dir(cfg, "distill")
    stack.save(out / "stack.nai")
    checkpoint.save(out / "attention.nai", {"kind": "attention", "r": len(s_vectors)}, s_vectors)
    log.info("wrote %s", out / "stack.nai")
    return 0


def cmd_train_gates(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    pc = cfg.pipeline()
    view = train_view(data, pc)
    stack = _load_stack(cfg, "distill", "distill")
    gates = fit_gates(view, stack, pc, pc.stage_seeds()["gates"])
    path = stage_dir(cfg, "train-gates") / "gates.nai"
    gates.save(path)
    log.info("wrote %s", path)
    return 0


def _nodes(data, which: str):
    return {"test": data.test, "val": data.unlabeled, "labeled": data.labeled}[which]


def cmd_infer(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    policy = cfg.inference_policy()
    model = _model(cfg, policy.mode == "gate")
    rep = evaluate(model, data, policy, _nodes(data, args.nodes), cfg.batch_size,
                   ledger_mode="naive" if args.table1_mode else "factorized",
                   shrink_cone=args.shrink_cone)
    out = stage_dir(cfg, "infer")
    rep.write(out / "predictions.csv")
    row = report(cfg.policy, rep.ledger, rep.accuracy(data.labels), len(rep.nodes))
    to_csv([row], out / "metrics.csv")
    log.info("accuracy %.2f%%, exit histogram %s", row.acc, rep.histogram().tolist())
    return 0


def parse_sweep(text: str) -> np.ndarray:
    try:
        a, b, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"ts-sweep: expected start:stop:step, got {text!r}") from exc
    if step <= 0 or b < a or a < 0:
        raise ConfigError("ts-sweep: need 0 <= start <= stop and step > 0")
    return np.round(np.arange(a, b + step / 2, step), 10)


def cmd_bench(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    policy = cfg.inference_policy()
    model = _model(cfg, policy.mode == "gate")
    kw = dict(nodes=_nodes(data, args.nodes), batch_size=cfg.batch_size,
              ledger_mode="naive" if args.table1_mode else "factorized", shrink_cone=args.shrink_cone)
    base, _ = evaluate_row(f"fixed k={model.k}", model, data, InferencePolicy.fixed(model.k), **kw)
    rows = [base]
    out = stage_dir(cfg, "bench")
    if policy.mode == "distance" and args.ts_sweep:
        pareto = ["t_s,acc,fp_mmacs"]
        for t_s in parse_sweep(args.ts_sweep):
            pol = dataclasses.replace(policy, t_s=float(t_s))
            row, _ = evaluate_row(f"NAI_d T_s={t_s:g}", model, data, pol, **kw)
            rows.append(row)
            pareto.append(f"{t_s:g},{row.acc:.6g},{row.fp_mmacs:.6g}")
        (out / "pareto.csv").write_text("\n".join(pareto) + "\n")
    else:
        name = {"distance": f"NAI_d T_s={policy.t_s:g}", "gate": "NAI_g", "fixed": "fixed"}[cfg.policy]
        rows.append(evaluate_row(name, model, data, policy, **kw)[0])
    to_csv(rows, out / "metrics.csv")
    (out / "table.txt").write_text(to_text(rows, base) + "\n")
    log.info("\n%s", to_text(rows, base))
    return 0


def cmd_verify(cfg: RunConfig, args) -> int:
    names = args.suite or list(verify.SUITES)
    results = verify.run_all(names)
    lines = [r.line() for r in results]
    for line in lines:
        log.info(line)
    (stage_dir(cfg, "verify") / "report.txt").write_text("\n".join(lines) + "\n")
    return 0 if all(r.passed for r in results) else 1


def cmd_make_sbm(cfg: RunConfig, args) -> int:
    if not cfg.data:
        raise ConfigError("data: output path for the bundle is required")
    b = synth_sbm(args.blocks, args.block_size, args.p_in, args.p_out, args.features,
                  args.signal, cfg.seed)
    Path(cfg.data).parent.mkdir(parents=True, exist_ok=True)
    save_bundle(b, cfg.data)
    log.info("wrote %s: n=%d m=%d f=%d c=%d", cfg.data, b.graph.n, b.graph.m, b.features.shape[1], b.n_classes)
    return 0


HANDLERS = {"precompute": cmd_precompute, "train-teacher": cmd_train_teacher, "distill": cmd_distill,
            "train-gates": cmd_train_gates, "infer": cmd_infer, "bench": cmd_bench,
            "verify": cmd_verify, "make-sbm": cmd_make_sbm}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nai", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    for f in fields(RunConfig):
        kind = {"int": int, "float": float}.get(f.type if isinstance(f.type, str) else f.type.__name__, str)
        common.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "distill":
            p.add_argument("--no-single-scale", action="store_true")
            p.add_argument("--no-multi-scale", action="store_true")
        if name in ("infer", "bench"):
            p.add_argument("--nodes", choices=("test", "val", "labeled"), default="test")
            p.add_argument("--table1-mode", action="store_true",
                           help="count the stationary state as a dense product")
            p.add_argument("--shrink-cone", action="store_true")
        if name == "bench":
            p.add_argument("--ts-sweep", help="start:stop:step thresholds for the distance policy")
        if name == "verify":
            p.add_argument("--suite", action="append", choices=list(verify.SUITES))
        if name == "make-sbm":
            p.add_argument("--blocks", type=int, default=4)
            p.add_argument("--block-size", type=int, default=500)
            p.add_argument("--p-in", type=float, default=0.02)
            p.add_argument("--p-out", type=float, default=0.002)
            p.add_argument("--features", type=int, default=32)
            p.add_argument("--signal", type=float, default=0.5)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        return HANDLERS[args.command](cfg, args)
    except (ConfigError, checkpoint.CheckpointError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
