"""Feature tensors and the temporal K-NN graph.

Nodes are (timestep, EPC) pairs carrying (rss, phase). Each node at time t
receives directed edges from the ``k`` nodes at time t-1 whose features are
closest to its own (Euclidean distance, ties to the smaller EPC id).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import Dataframe


def build_tensor(dataframes: Sequence[Dataframe], n_tags: int | None = None) -> np.ndarray:
    """Stack filled dataframes into a (T, N, 2) array in canonical EPC order."""
    dfs = sorted(dataframes, key=lambda df: df.epc)
    if n_tags is not None and [df.epc for df in dfs] != list(range(1, n_tags + 1)):
        raise ValueError(f"expected dataframes for EPCs 1..{n_tags}, got {[df.epc for df in dfs]}")
    lengths = {len(df.rss) for df in dfs} | {len(df.phase) for df in dfs}
    if len(lengths) != 1:
        raise ValueError(f"dataframes have unequal lengths {sorted(lengths)}")
    rss = np.stack([df.rss for df in dfs], axis=1)
    phase = np.stack([df.phase for df in dfs], axis=1)
    return np.stack([rss, phase], axis=-1).astype(float)


def knn_sources(tensors: np.ndarray, k: int) -> np.ndarray:
    """Neighbour indices for a batch of tensors.

    Parameters
    ----------
    tensors : ndarray, shape (B, T, N, D) or (T, N, D)
    k : int
        Number of in-edges per node, ``1 <= k <= N``.

    Returns
    -------
    ndarray of int, shape (B, T-1, N, k)
        ``out[b, t, j]`` lists the EPC indices at time ``t`` feeding node
        ``j`` at time ``t + 1``, nearest first.
    """
    x = np.asarray(tensors, dtype=float)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    n = x.shape[2]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    prev, cur = x[:, :-1], x[:, 1:]
    # (B, T-1, target, source)
    d2 = ((cur[:, :, :, None, :] - prev[:, :, None, :, :]) ** 2).sum(-1)
    src = np.argsort(d2, axis=-1, kind="stable")[..., :k]
    return src[0] if squeeze else src


@dataclass
class TemporalGraph:
    """Temporal K-NN graph of one sample.

    ``sources[t, j]`` holds the 0-based EPC indices at timestep ``t`` that
    link to EPC ``j`` at timestep ``t + 1``.
    """

    sources: np.ndarray
    k: int

    @property
    def n_steps(self) -> int:
        return self.sources.shape[0] + 1

    @property
    def n_tags(self) -> int:
        return self.sources.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.n_steps * self.n_tags

    def edges(self) -> list[tuple[int, int, int, int]]:
        """Edge list as 1-based ``(t_src, epc_src, t_dst, epc_dst)``, sorted."""
        out = []
        for t in range(self.sources.shape[0]):
            for j in range(self.n_tags):
                for s in self.sources[t, j]:
                    out.append((t + 1, int(s) + 1, t + 2, j + 1))
        out.sort()
        return out

    def in_degree(self) -> np.ndarray:
        deg = np.zeros((self.n_steps, self.n_tags), dtype=int)
        deg[1:] = self.k
        return deg


def build_temporal_knn_graph(tensor: np.ndarray, k: int = 3) -> TemporalGraph:
    tensor = np.asarray(tensor, dtype=float)
    if tensor.ndim != 3:
        raise ValueError("expected a (T, N, D) tensor")
    return TemporalGraph(knn_sources(tensor, k), k)


def write_edge_list(path, graph: TemporalGraph) -> None:
    with open(path, "w") as fh:
        fh.write("t_src,epc_src,t_dst,epc_dst\n")
        for e in graph.edges():
            fh.write(",".join(map(str, e)) + "\n")
