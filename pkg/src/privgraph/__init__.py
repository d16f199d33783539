"""Privacy classification of scene-graph objects from relational context."""

from .augment import CPOSampler, CposConfig, SMOTESampler, class_ratio, cpos_augment, smote_augment
from .dataset import LabeledDataset, load_dataset, save_dataset
from .estimator import PrivacyGraphClassifier
from .evalkit import MetricsReport, confusion_counts, evaluate_model, format_table, perturb_edges, prf1
from .exceptions import PrivGraphError
from .graph import (
    CategoryNode,
    HeteroSceneGraph,
    HybridGraph,
    NodeRef,
    RelationNode,
    derive_hybrid,
    neighbors,
    parse_graph,
    serialize_graph,
    validate,
)
from .hgr import forward, init_params
from .synthgen import ContextRule, GenConfig, generate_dataset, oracle_label
from .training import TrainConfig, compute_gradients, gradcheck, imbalance_loss, train

__version__ = "0.1.0"
