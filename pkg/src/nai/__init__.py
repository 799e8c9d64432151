"""Node-adaptive propagation for fast inductive inference with scalable GNNs."""
from .classifiers import ClassifierStack, TrainConfig
from .data import DatasetBundle, load_bundle, save_bundle, synth_sbm
from .distillation import DistillConfig
from .gates import GateStack, GateTrainConfig
from .graph import Graph, build_graph, k_hop_frontier, normalize, second_eigenvalue
from .inference import InferencePolicy, ModelBundle, PredictionReport, infer, infer_batch
from .metrics import MacLedger
from .pipeline import PipelineConfig, train_all
from .propagation import Combinator, combine, precompute_depths, stationary

__version__ = "0.1.0"
