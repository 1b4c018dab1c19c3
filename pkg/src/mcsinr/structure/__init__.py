"""Construction of the aggregation structure."""

from .clustering import Clustering, ClusterColoring, cluster, color_clusters, oracle_cluster, oracle_color
from .constants import ProtocolConstants, channel_count, cluster_radius, phi_bound, t_factor
from .csa import csa_large, csa_small, estimate_sizes, use_small_path
from .reporters import ReporterTree, elect_reporters
from .ruling import RulingSetParams, ruling_set
from .state import ClusterState, Structure, build_structure

__all__ = [
    "ClusterColoring", "ClusterState", "Clustering", "ProtocolConstants", "ReporterTree",
    "RulingSetParams", "Structure", "build_structure", "channel_count", "cluster",
    "cluster_radius", "color_clusters", "csa_large", "csa_small", "elect_reporters",
    "estimate_sizes", "oracle_cluster", "oracle_color", "phi_bound", "ruling_set",
    "t_factor", "use_small_path",
]
