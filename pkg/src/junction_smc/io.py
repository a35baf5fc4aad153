"""File formats: graph and tree JSON, CSV matrices, SMC results and run manifests.

Vertices are written with the same 1-based labels used in memory.  Tree
links refer to positions in the ``nodes`` list (0-based).
"""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .graph import Graph
from .junction_tree import JunctionTree
from .smc import SMCResult, graph_weights


class FormatError(ValueError):
    """Raised for malformed input files."""


# ---------------------------------------------------------------------------
# manifests


def _version() -> str:
    from . import __version__

    return __version__


@dataclass
class RunManifest:
    command: str
    flags: dict
    seed: int | None = None
    version: str = field(default_factory=_version)
    python: str = field(default_factory=lambda: platform.python_version())
    numpy: str = field(default_factory=lambda: np.__version__)
    started: str = field(default_factory=lambda: _now())
    finished: str | None = None

    def finish(self) -> "RunManifest":
        self.finished = _now()
        return self

    def to_json(self) -> dict:
        return asdict(self)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def manifest_path(path: str | Path) -> Path:
    """Sidecar manifest file written next to a CSV artifact."""
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def write_json(path: str | Path | None, payload: dict, manifest: RunManifest | None = None) -> None:
    """Write ``payload`` (plus an embedded manifest) to ``path``, or stdout when ``path`` is None."""
    if manifest is not None:
        payload = dict(payload, manifest=manifest.to_json())
    text = json.dumps(payload, indent=2, sort_keys=False)
    if path is None or str(path) == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def write_csv_matrix(path: str | Path, mat, manifest: RunManifest | None = None, fmt: str = "%.17g") -> None:
    """Headerless CSV; the manifest (if any) goes to a sidecar JSON file."""
    np.savetxt(path, np.atleast_2d(mat), delimiter=",", fmt=fmt)
    if manifest is not None:
        write_json(manifest_path(path), manifest.to_json())


def read_csv_matrix(path: str | Path) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise FormatError(f"{path}: rows have different lengths")
    try:
        return np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric entry ({exc})") from exc


def _load_json(path: str | Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: expected a JSON object")
    return obj


def _int_p(obj: dict, path) -> int:
    p = obj.get("p")
    if not isinstance(p, int) or isinstance(p, bool) or p < 1:
        raise FormatError(f"{path}: 'p' must be a positive integer")
    return p


# ---------------------------------------------------------------------------
# graphs


def graph_to_json(g: Graph) -> dict:
    return {"p": g.order, "edges": [list(e) for e in sorted(g.edges)]}


def graph_from_json(obj: dict, path="<graph>") -> Graph:
    p = _int_p(obj, path)
    edges = obj.get("edges", [])
    try:
        pairs = [(int(i), int(j)) for i, j in edges]
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: 'edges' must be a list of vertex pairs") from exc
    for i, j in pairs:
        if not (1 <= i <= p and 1 <= j <= p) or i == j:
            raise FormatError(f"{path}: bad edge {[i, j]} for p={p}")
    return Graph.from_edges(range(1, p + 1), pairs)


def graph_from_adjacency(mat: np.ndarray, path="<adjacency>") -> Graph:
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
        raise FormatError(f"{path}: adjacency matrix must be square and non-empty")
    if not np.isin(mat, (0, 1)).all():
        raise FormatError(f"{path}: adjacency entries must be 0 or 1")
    if not (mat == mat.T).all() or mat.diagonal().any():
        raise FormatError(f"{path}: adjacency matrix must be symmetric with zero diagonal")
    p = mat.shape[0]
    edges = [(i + 1, j + 1) for i in range(p) for j in range(i + 1, p) if mat[i, j]]
    return Graph.from_edges(range(1, p + 1), edges)


def read_graph(path: str | Path) -> Graph:
    """Graph from JSON, or from a 0/1 adjacency CSV when the suffix is ``.csv``."""
    if str(path).lower().endswith(".csv"):
        return graph_from_adjacency(read_csv_matrix(path), path)
    return graph_from_json(_load_json(path), path)


# ---------------------------------------------------------------------------
# junction trees


def tree_to_json(t: JunctionTree, p: int | None = None) -> dict:
    p = max(t.vertices) if p is None else p
    return {"p": p, "nodes": [sorted(n) for n in t.nodes], "links": [list(e) for e in t.links]}


def tree_from_json(obj: dict, path="<tree>") -> JunctionTree:
    p = _int_p(obj, path)
    nodes, links = obj.get("nodes"), obj.get("links", [])
    if not isinstance(nodes, list) or not nodes:
        raise FormatError(f"{path}: 'nodes' must be a non-empty list")
    try:
        nodes = [[int(v) for v in n] for n in nodes]
        links = [(int(a), int(b)) for a, b in links]
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed nodes or links") from exc
    for n in nodes:
        if not n or any(not 1 <= v <= p for v in n):
            raise FormatError(f"{path}: node {n} is empty or has vertices outside 1..{p}")
    for a, b in links:
        if not (0 <= a < len(nodes) and 0 <= b < len(nodes)):
            raise FormatError(f"{path}: link {[a, b]} refers to a missing node")
    try:
        return JunctionTree.from_links(nodes, links)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_tree(path: str | Path) -> JunctionTree:
    return tree_from_json(_load_json(path), path)


# ---------------------------------------------------------------------------
# SMC results


def smc_result_to_json(result: SMCResult, max_graphs: int | None = None) -> dict:
    """Result summary; graphs are listed by decreasing weight."""
    weights = sorted(graph_weights(result.particles).items(), key=lambda kv: (-kv[1], sorted(kv[0].edges)))
    if max_graphs is not None:
        weights = weights[:max_graphs]
    return {
        "p": result.p,
        "N": result.n_particles,
        "seed": result.seed,
        "alpha": result.params.alpha,
        "beta": result.params.beta,
        "log_Z": result.log_Z,
        "omega": [math.exp(x) for x in result.log_omegas],
        "log_omega": list(result.log_omegas),
        "graphs": [{"edges": [list(e) for e in sorted(g.edges)], "weight": w} for g, w in weights],
        "runtime_s": result.runtime_s,
    }
