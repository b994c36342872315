"""Simulation and order-preservation checks for FIFO diverge traffic networks."""

from .errors import *  # noqa: F401,F403
from .fd import FDSet, PiecewiseAffineFD, check_assumption1, demand_eval, supply_eval
from .network import Network, NetworkSpec, build_network, cumulative_matrix, routing_matrix
from .order import ConeOrder, OrderResult, Relation, cone_compare, from_z, to_z
from .sim import DemandTable, SimConfig, Trajectory, simulate, simulate_transformed
from .dynamics import fifo_outflows, inflows, transformed_vector_field, vector_field

__version__ = "0.1.0"
