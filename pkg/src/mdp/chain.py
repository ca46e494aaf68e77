import logging
import math
from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np

from config.settings import config
from src.numerics.linalg import as_square, inf_norm, solve_linear
from src.utils.errors import Reducible

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainStructure:
    """Irreducibility and periodicity of a finite Markov chain."""

    irreducible: bool
    aperiodic: bool
    period: int

    def to_dict(self) -> dict:
        return {
            "irreducible": self.irreducible,
            "aperiodic": self.aperiodic,
            "period": self.period,
        }


def support_graph(p, edge_threshold: Optional[float] = None) -> nx.DiGraph:
    """
    Build the directed support graph of a transition matrix.

    Args:
        p: Stochastic matrix
        edge_threshold: Edge (i, j) exists iff p[i][j] > threshold

    Returns:
        networkx DiGraph on nodes 0..n-1
    """
    edge_threshold = config.EDGE_THRESHOLD if edge_threshold is None else edge_threshold
    p = as_square(p, "transition matrix")

    G = nx.DiGraph()
    G.add_nodes_from(range(p.shape[0]))
    rows, cols = np.nonzero(p > edge_threshold)
    G.add_edges_from(zip(rows.tolist(), cols.tolist()))
    return G


def _period(G: nx.DiGraph, root: int) -> int:
    # gcd over edges of depth(u) + 1 - depth(v), depths from a BFS rooted in the class
    depth = nx.single_source_shortest_path_length(G, root)
    period = 0
    for u, v in G.edges():
        if u in depth and v in depth:
            period = math.gcd(period, abs(depth[u] + 1 - depth[v]))
    return max(period, 1)


def chain_structure(p, edge_threshold: Optional[float] = None) -> ChainStructure:
    """
    Classify a chain as irreducible and/or aperiodic.

    For reducible chains the reported period is that of the closed class
    containing the smallest state index; aperiodic is False regardless.
    """
    G = support_graph(p, edge_threshold)

    irreducible = nx.is_strongly_connected(G)
    if irreducible:
        period = _period(G, 0)
    else:
        closed = min(nx.attracting_components(G), key=min)
        period = _period(G.subgraph(closed), min(closed))

    return ChainStructure(
        irreducible=irreducible,
        aperiodic=irreducible and period == 1,
        period=period,
    )


def stationary_distribution(p, stationarity_tol: Optional[float] = None) -> np.ndarray:
    """
    Stationary distribution ω of an irreducible chain.

    Solves (Pᵀ − I)ω = 0 with the redundant last balance equation replaced
    by the normalization Σω = 1. Works for periodic chains as well.

    Args:
        p: Irreducible stochastic matrix
        stationarity_tol: Allowed ‖ωᵀP − ωᵀ‖∞

    Returns:
        Positive probability vector ω

    Raises:
        Reducible: the support graph is not strongly connected
    """
    stationarity_tol = config.STATIONARITY_TOL if stationarity_tol is None else stationarity_tol
    p = as_square(p, "transition matrix")

    if not chain_structure(p).irreducible:
        raise Reducible("chain has more than one communicating class")

    n = p.shape[0]
    system = p.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    omega = solve_linear(system, rhs)

    residual = inf_norm(omega @ p - omega)
    if residual > stationarity_tol:
        logger.warning("Stationary distribution residual %.3e above %.0e", residual, stationarity_tol)
    if np.any(omega <= 0):
        logger.warning("Stationary distribution has non-positive entries: %s", omega)
    return omega
