"""Geometric candidate pruning for dynamic ride-sharing dispatch."""

__version__ = "0.1.0"

from .geometry import MBR, DetourEllipse, WaitingCircle, circle_mbr, ellipse_mbr
from .network import NetworkPosition, RoadNetwork, TravelTimeProvider, load_network
from .pruning import CandidateSet, PruneState, match_update, move_update, prune, prune_empty
from .rtree import RTree
from .schedule import TripRequest, TripSchedule, Vehicle, build_schedule, recompute_recorder
from .selection import MatchDecision, decide, nearest_empty_vehicle, select_best_nonempty
from .simulator import SimulationConfig, generate_synthetic, run

__all__ = [
    "MBR", "DetourEllipse", "WaitingCircle", "circle_mbr", "ellipse_mbr",
    "NetworkPosition", "RoadNetwork", "TravelTimeProvider", "load_network",
    "CandidateSet", "PruneState", "match_update", "move_update", "prune", "prune_empty",
    "RTree", "TripRequest", "TripSchedule", "Vehicle", "build_schedule", "recompute_recorder",
    "MatchDecision", "decide", "nearest_empty_vehicle", "select_best_nonempty",
    "SimulationConfig", "generate_synthetic", "run",
]
