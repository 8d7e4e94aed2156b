"""k-nearest-neighbour hyperconnectomes and the normalized hypergraph
propagation operator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .data import ConnectivityMatrix, MultiViewConnectome
from .errors import DegeneracyError, ParameterError

DEFAULT_K = 5


@dataclass(frozen=True)
class Hyperconnectome:
    """Multi-view incidence matrix, N vertices by M*N hyperedges.

    Column ``b*N + j`` is the hyperedge of view ``b`` centred on vertex ``j``.
    """

    incidence: np.ndarray
    edge_weights: np.ndarray
    vertex_degrees: np.ndarray
    edge_degrees: np.ndarray
    k: int
    n_views: int

    @property
    def n_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]


@dataclass(frozen=True)
class StackedFeatures:
    values: np.ndarray

    def view(self, b: int) -> np.ndarray:
        n = self.values.shape[0]
        return self.values[:, b * n:(b + 1) * n]


def _check_k(k: int, n: int) -> None:
    if int(k) != k or not 1 <= k <= n - 1:
        raise ParameterError(f"k must be an integer in [1, {n - 1}] for N={n}, got {k}")


def build_view_incidence(x, k: int) -> np.ndarray:
    """N x N binary incidence of one view.

    Column ``j`` holds vertex ``j`` and the ``k`` vertices with the largest
    connectivity ``x[j, i]``; equal weights go to the lower index.
    """
    values = x.values if isinstance(x, ConnectivityMatrix) else np.asarray(x, dtype=np.float64)
    n = values.shape[0]
    _check_k(k, n)
    keys = -values.astype(np.float64, copy=True)
    # the centre is added explicitly, keep it out of its own neighbour list
    np.fill_diagonal(keys, np.inf)
    order = np.argsort(keys, axis=1, kind="stable")[:, :k]
    h = np.zeros((n, n), dtype=np.float64)
    centres = np.arange(n)
    h[centres, centres] = 1.0
    h[order, centres[:, None]] = 1.0
    return h


def build_hyperconnectome(subject: MultiViewConnectome, k: int = DEFAULT_K) -> Tuple[Hyperconnectome, StackedFeatures]:
    n = subject.n_nodes
    _check_k(k, n)
    incidence = np.hstack([build_view_incidence(v, k) for v in subject.views])
    features = np.hstack([v.values for v in subject.views])
    weights = np.ones(incidence.shape[1])
    vertex_degrees = incidence @ weights
    edge_degrees = incidence.sum(axis=0)
    for arr in (incidence, weights, vertex_degrees, edge_degrees, features):
        arr.setflags(write=False)
    h = Hyperconnectome(
        incidence=incidence,
        edge_weights=weights,
        vertex_degrees=vertex_degrees,
        edge_degrees=edge_degrees,
        k=int(k),
        n_views=subject.n_views,
    )
    return h, StackedFeatures(features)


def propagation_operator(h: Hyperconnectome) -> np.ndarray:
    """``Dv^-1/2 H W De^-1 H^T Dv^-1/2`` as a dense symmetric N x N matrix."""
    if np.any(h.vertex_degrees <= 0) or np.any(h.edge_degrees <= 0):
        raise DegeneracyError("hyperconnectome has a vertex or hyperedge of zero degree")
    s = (h.incidence / np.sqrt(h.vertex_degrees)[:, None]) * np.sqrt(h.edge_weights / h.edge_degrees)[None, :]
    delta = s @ s.T
    return 0.5 * (delta + delta.T)
