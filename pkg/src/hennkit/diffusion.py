"""Hypergraph energy, nonlinear diffusion, and the source-localization data.

The energy of a node signal is Q(x) = sum_e max_{i,j in e} (x_i - x_j)^2 and
its (nonlinear) Laplacian is half the gradient: per hyperedge, the extreme
pair (i*, j*) with x_{i*} maximal and x_{j*} minimal receives +/-(x_{i*} -
x_{j*}).  Explicit Euler steps of x' = -L(x) diffuse signals across nodes
and hyperedges simultaneously.

The benchmark hypergraph comes from points sampled area-uniformly on a 3-d
torus (inner radius 1, outer radius 2, i.e. centerline radius 1.5 and tube
radius 0.5); hyperedges are the maximal cliques of the Euclidean proximity
graph at radius 0.4, i.e. the maximal simplices of the Vietoris-Rips
complex.  Labeled samples are noisy snapshots of diffusions started at 10
randomly chosen source hyperedges.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import AssumptionError, ConfigError, NumericalError
from .hypergraph import Hypergraph

TORUS_CENTER_RADIUS = 1.5
TORUS_TUBE_RADIUS = 0.5
DATASET_FORMAT = "hennkit-dataset"
DATASET_VERSION = 1


def _edge_extremes(h: Hypergraph, x: np.ndarray):
    """Per hyperedge: (first argmax member, first argmin member, max - min).

    Members are stored sorted, so np.argmax/argmin pick the lexicographically
    smallest extreme pair deterministically.
    """
    tops = np.empty(h.m, dtype=int)
    bottoms = np.empty(h.m, dtype=int)
    spans = np.empty(h.m)
    for j, e in enumerate(h.edges):
        vals = x[list(e)]
        hi = int(np.argmax(vals))
        lo = int(np.argmin(vals))
        tops[j] = e[hi]
        bottoms[j] = e[lo]
        spans[j] = vals[hi] - vals[lo]
    return tops, bottoms, spans


def energy(h: Hypergraph, x: np.ndarray) -> float:
    """Q(x) = sum over hyperedges of the squared extreme pair difference."""
    x = np.asarray(x, dtype=float)
    if x.shape != (h.n,):
        raise ConfigError(f"signal must have shape ({h.n},), got {x.shape}")
    _, _, spans = _edge_extremes(h, x)
    return float(np.sum(spans**2))


def hypergraph_laplacian(h: Hypergraph, x: np.ndarray) -> np.ndarray:
    """Half-gradient of the energy; nonlinear in x.

    At signals where a hyperedge has tied extreme pairs the energy is not
    differentiable; the subgradient picks the lexicographically smallest
    pair, and hyperedges with zero span contribute nothing.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (h.n,):
        raise ConfigError(f"signal must have shape ({h.n},), got {x.shape}")
    tops, bottoms, spans = _edge_extremes(h, x)
    out = np.zeros(h.n)
    np.add.at(out, tops, spans)
    np.add.at(out, bottoms, -spans)
    return out


def diffuse(
    h: Hypergraph,
    x0: np.ndarray,
    steps: int,
    step_size: float = 0.05,
    monitor_energy: bool = True,
) -> np.ndarray:
    """Explicit Euler trajectory of shape (steps + 1, n).

    Warns when the energy increases along a step (step size beyond the
    stability threshold); aborts on non-finite values.
    """
    if step_size <= 0:
        raise ConfigError(f"step size must be positive, got {step_size}")
    x = np.array(x0, dtype=float)
    if x.shape != (h.n,):
        raise ConfigError(f"initial signal must have shape ({h.n},), got {x.shape}")
    traj = np.empty((steps + 1, h.n))
    traj[0] = x
    last_q = energy(h, x) if monitor_energy else None
    for t in range(1, steps + 1):
        x = x - step_size * hypergraph_laplacian(h, x)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"diffusion diverged at step {t}")
        traj[t] = x
        if monitor_energy:
            q = energy(h, x)
            if q > last_q + 1e-12 * max(1.0, last_q):
                warnings.warn(
                    f"energy increased at step {t} ({last_q:.6g} -> {q:.6g}); "
                    f"step size {step_size} may exceed the stability threshold",
                    RuntimeWarning,
                    stacklevel=2,
                )
            last_q = q
    return traj


@dataclass(eq=False)
class GeometricHypergraph:
    """Torus point cloud with its proximity hypergraph.

    ``points`` holds every sampled point; ``node_points`` maps hypergraph
    node index -> row of ``points`` (points isolated at the chosen radius
    cannot join any hyperedge and are dropped from the hypergraph).
    """

    points: np.ndarray
    radius: float
    node_points: np.ndarray
    hypergraph: Hypergraph
    seed: int


def _sample_torus_points(n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Area-uniform samples on the torus via rejection on the tube angle."""
    big_r, small_r = TORUS_CENTER_RADIUS, TORUS_TUBE_RADIUS
    phi = np.empty(0)
    while phi.size < n_points:
        cand = rng.uniform(0.0, 2.0 * np.pi, size=2 * n_points)
        accept = rng.uniform(0.0, 1.0, size=cand.size) <= (
            (big_r + small_r * np.cos(cand)) / (big_r + small_r)
        )
        phi = np.concatenate([phi, cand[accept]])
    phi = phi[:n_points]
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_points)
    ring = big_r + small_r * np.cos(phi)
    return np.column_stack(
        [ring * np.cos(theta), ring * np.sin(theta), small_r * np.sin(phi)]
    )


def sample_torus_vr(
    n_points: int = 500, radius: float = 0.4, seed: int = 0
) -> GeometricHypergraph:
    """Sample points on the torus and take maximal Vietoris-Rips simplices.

    Hyperedges are the maximal cliques (size >= 2) of the graph joining
    points at Euclidean distance <= radius.  Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    pts = _sample_torus_points(n_points, rng)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    close = (dist <= radius) & ~np.eye(n_points, dtype=bool)
    g = nx.from_numpy_array(close.astype(int))
    cliques = [tuple(sorted(c)) for c in nx.find_cliques(g) if len(c) >= 2]
    cliques.sort()
    if len(cliques) < 10:
        raise AssumptionError(
            f"only {len(cliques)} hyperedges at radius {radius}; "
            "need at least 10 to pick source candidates"
        )
    kept = sorted({i for c in cliques for i in c})
    remap = {p: i for i, p in enumerate(kept)}
    edges = [[remap[i] for i in c] for c in cliques]
    h = Hypergraph(len(kept), edges)
    return GeometricHypergraph(pts, radius, np.asarray(kept), h, seed)


@dataclass(eq=False)
class LabeledDataset:
    """Noisy diffusion snapshots labeled by their source hyperedge."""

    signals: np.ndarray  # (N, n)
    labels: np.ndarray  # (N,) in 0..9
    times: np.ndarray  # (N,) diffusion step of each snapshot
    train_idx: np.ndarray
    test_idx: np.ndarray
    sources: np.ndarray  # candidate hyperedge index per class
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.signals.shape[1]

    def split(self):
        return (
            (self.signals[self.train_idx], self.labels[self.train_idx]),
            (self.signals[self.test_idx], self.labels[self.test_idx]),
        )


def generate_dataset(
    gh: GeometricHypergraph,
    t_max: int = 30,
    step_size: float = 0.05,
    noise_sd: float = 0.1,
    n_train: int = 500,
    n_test: int = 300,
    seed: int = 0,
    n_classes: int = 10,
) -> LabeledDataset:
    """Source-localization samples from nonlinear diffusion trajectories.

    Per class: one noisy indicator signal of a randomly chosen source
    hyperedge, diffused for t_max steps.  Each sample draws a class and a
    time uniformly and adds fresh measurement noise.  Both the per-source
    input noise and the measurement noise are Normal(0, noise_sd^2).
    """
    h = gh.hypergraph
    if h.m < n_classes:
        raise AssumptionError(f"need {n_classes} hyperedges, have {h.m}")
    rng = np.random.default_rng(seed)
    sources = np.sort(rng.choice(h.m, size=n_classes, replace=False))
    trajectories = []
    for src in sources:
        x0 = rng.normal(0.0, noise_sd, size=h.n)
        x0[list(h.edges[src])] += 1.0
        trajectories.append(diffuse(h, x0, t_max, step_size, monitor_energy=False))
    total = n_train + n_test
    labels = rng.integers(0, n_classes, size=total)
    times = rng.integers(0, t_max + 1, size=total)
    noise = rng.normal(0.0, noise_sd, size=(total, h.n))
    signals = np.stack([trajectories[c][t] for c, t in zip(labels, times)]) + noise
    meta = {
        "m": h.m,
        "t_max": t_max,
        "step_size": step_size,
        "noise_sd": noise_sd,
        "n_points": int(gh.points.shape[0]),
        "radius": gh.radius,
        "geometry_seed": gh.seed,
    }
    return LabeledDataset(
        signals=signals,
        labels=labels,
        times=times,
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, total),
        sources=sources,
        seed=seed,
        meta=meta,
    )


def reshuffle(dataset: LabeledDataset, seed: int) -> LabeledDataset:
    """New train/test split of the same samples (for repeated evaluation)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.signals.shape[0])
    n_train = dataset.train_idx.size
    return LabeledDataset(
        signals=dataset.signals,
        labels=dataset.labels,
        times=dataset.times,
        train_idx=order[:n_train],
        test_idx=order[n_train:],
        sources=dataset.sources,
        seed=dataset.seed,
        meta=dict(dataset.meta, shuffle_seed=seed),
    )


def save_dataset(dataset: LabeledDataset, path):
    """Text format: key-value header, then one 'label,time,x_1,...,x_n' row
    per sample.  Floats use repr, so a round trip is decimal-exact."""
    buf = io.StringIO()
    buf.write(f"{DATASET_FORMAT} {DATASET_VERSION}\n")
    buf.write(f"n {dataset.signals.shape[1]}\n")
    buf.write(f"samples {dataset.signals.shape[0]}\n")
    buf.write(f"n_train {dataset.train_idx.size}\n")
    buf.write(f"n_test {dataset.test_idx.size}\n")
    buf.write(f"seed {dataset.seed}\n")
    buf.write("sources " + " ".join(str(s) for s in dataset.sources) + "\n")
    buf.write("train_idx " + " ".join(str(i) for i in dataset.train_idx) + "\n")
    buf.write("test_idx " + " ".join(str(i) for i in dataset.test_idx) + "\n")
    for key in sorted(dataset.meta):
        buf.write(f"meta.{key} {dataset.meta[key]!r}\n")
    buf.write("data\n")
    for label, time, row in zip(dataset.labels, dataset.times, dataset.signals):
        buf.write(f"{label},{time}," + ",".join(repr(float(v)) for v in row) + "\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def load_dataset(path) -> LabeledDataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(DATASET_FORMAT):
        raise ConfigError(f"{path}: not a dataset file")
    header = {}
    meta = {}
    body_at = None
    for i, line in enumerate(lines[1:], start=1):
        if line == "data":
            body_at = i + 1
            break
        key, _, value = line.partition(" ")
        if key.startswith("meta."):
            meta[key[5:]] = _parse_literal(value)
        else:
            header[key] = value
    if body_at is None:
        raise ConfigError(f"{path}: missing data section")
    n = int(header["n"])
    labels, times, rows = [], [], []
    for line in lines[body_at:]:
        if not line:
            continue
        parts = line.split(",")
        labels.append(int(parts[0]))
        times.append(int(parts[1]))
        row = np.array([float(v) for v in parts[2:]])
        if row.size != n:
            raise ConfigError(f"{path}: sample has {row.size} values, expected {n}")
        rows.append(row)
    if len(rows) != int(header["samples"]):
        raise ConfigError(f"{path}: expected {header['samples']} samples, found {len(rows)}")
    return LabeledDataset(
        signals=np.stack(rows),
        labels=np.array(labels, dtype=int),
        times=np.array(times, dtype=int),
        train_idx=np.array([int(v) for v in header["train_idx"].split()], dtype=int),
        test_idx=np.array([int(v) for v in header["test_idx"].split()], dtype=int),
        sources=np.array([int(v) for v in header["sources"].split()], dtype=int),
        seed=int(header["seed"]),
        meta=meta,
    )


def _parse_literal(text: str):
    import ast

    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text
