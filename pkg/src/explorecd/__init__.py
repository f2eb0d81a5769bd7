"""Overlapping community detection in networks whose topology is hidden.

Node metadata seeds an inferred graph; a two-layer graph convolutional
embedder turns the current graph into non-negative community affiliations;
a limited budget of node queries, each revealing one node's true neighbors,
is spent on nodes with large and diverse affiliations.
"""

__version__ = "0.1.0"

from .datasets import NodeFeatures, load_canonical, load_ego_network, synth_agm, write_canonical
from .embed import ModelParams, gcn_forward, init_params, loss, loss_gradients, train
from .explore import QueryState, select_dfs, select_metacode, select_random
from .graph import CommunityCover, HiddenNetwork, ObservedNetwork, QueryOracle
from .init_infer import agm_infer, f_init, knn_init, mac_cluster
from .metrics import best_match_f1, cover_from_affiliations, explored_count, overlapping_nmi
from .pipeline import RunConfig, run, sweep

__all__ = [
    "CommunityCover", "HiddenNetwork", "ModelParams", "NodeFeatures", "ObservedNetwork", "QueryOracle",
    "QueryState", "RunConfig", "agm_infer", "best_match_f1", "cover_from_affiliations", "explored_count",
    "f_init", "gcn_forward", "init_params", "knn_init", "load_canonical", "load_ego_network", "loss",
    "loss_gradients", "mac_cluster", "overlapping_nmi", "run", "select_dfs", "select_metacode",
    "select_random", "sweep", "synth_agm", "train", "write_canonical",
]
