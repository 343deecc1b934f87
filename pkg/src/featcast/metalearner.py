"""Gradient-boosted trees mapping static features to combination weights.

Raw scores z (one per base model) pass through a softmax to become weights;
the training objective is the weighted average of each instance's per-model
validation errors.  Each boosting round fits one depth-limited regression
tree per output dimension on the objective's gradient/hessian, with exact
greedy splits and Newton leaf values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HESS_FLOOR = 1e-6
LOSS_TOL = 1e-9


@dataclass
class MetaInstance:
    series_id: str
    x: np.ndarray  # static features
    c: np.ndarray  # per-base-model validation error, >= 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        if not np.all(np.isfinite(self.x)) or not np.all(np.isfinite(self.c)):
            raise ValueError(f"meta instance {self.series_id!r} has non-finite entries")
        if np.any(self.c < 0):
            raise ValueError(f"meta instance {self.series_id!r} has negative error entries")


@dataclass
class GbdtParams:
    rounds: int = 100
    max_depth: int = 3
    eta: float = 0.1
    lam: float = 1.0
    min_child: int = 5


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class Tree:
    nodes: list[TreeNode]

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(len(x))
        stack = [(0, np.arange(len(x)))]
        while stack:
            n, idx = stack.pop()
            node = self.nodes[n]
            if node.is_leaf:
                out[idx] = node.value
            else:
                goes_left = x[idx, node.feature] < node.threshold
                stack.append((node.left, idx[goes_left]))
                stack.append((node.right, idx[~goes_left]))
        return out


@dataclass
class GbdtModel:
    model_names: tuple[str, ...]
    n_features: int
    params: GbdtParams
    rounds: list[list[Tree]] = field(default_factory=list)  # rounds[r][m]
    train_loss: list[float] = field(default_factory=list)

    def raw_scores(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.n_features:
            raise ValueError(f"feature dimension {x.shape[1]} does not match model dimension {self.n_features}")
        z = np.zeros((len(x), len(self.model_names)))
        for trees in self.rounds:
            for m, tree in enumerate(trees):
                z[:, m] += self.params.eta * tree.predict(x)
        return z[0] if single else z


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def objective(z: np.ndarray, c: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss, gradient, and (floored) hessian of the weighted-error objective
    for one instance: loss = sum_m softmax(z)_m * c_m."""
    z = np.asarray(z, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if z.shape != c.shape:
        raise ValueError(f"score shape {z.shape} does not match error shape {c.shape}")
    w = softmax(z)
    loss = float(np.dot(w, c))
    grad = w * (c - loss)
    hess = np.maximum(grad * (1.0 - 2.0 * w), HESS_FLOOR)
    return loss, grad, hess


def _build_tree(
    x: np.ndarray, grad: np.ndarray, hess: np.ndarray, params: GbdtParams
) -> Tree:
    nodes: list[TreeNode] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        g_sum = float(grad[idx].sum())
        h_sum = float(hess[idx].sum())
        node_id = len(nodes)
        nodes.append(TreeNode(value=-g_sum / (h_sum + params.lam)))
        if depth >= params.max_depth or len(idx) < 2 * params.min_child:
            return node_id
        parent_score = g_sum * g_sum / (h_sum + params.lam)
        best_gain = 0.0
        best: tuple[int, float, np.ndarray, np.ndarray] | None = None
        lo, hi = params.min_child - 1, len(idx) - params.min_child
        for f in range(x.shape[1]):
            order = idx[np.argsort(x[idx, f], kind="stable")]
            xv = x[order, f]
            gl = np.cumsum(grad[order])[lo:hi]
            hl = np.cumsum(hess[order])[lo:hi]
            # split after position i (left = order[:i+1]); only between distinct values
            gains = 0.5 * (
                gl * gl / (hl + params.lam)
                + (g_sum - gl) ** 2 / (h_sum - hl + params.lam)
                - parent_score
            )
            gains[xv[lo:hi] == xv[lo + 1 : hi + 1]] = -np.inf
            i_rel = int(np.argmax(gains))
            if gains[i_rel] > best_gain:
                best_gain = float(gains[i_rel])
                i = lo + i_rel
                thr = 0.5 * (xv[i] + xv[i + 1])
                best = (f, thr, order[: i + 1], order[i + 1 :])
        if best is None:
            return node_id
        f, thr, left_idx, right_idx = best
        nodes[node_id].feature = f
        nodes[node_id].threshold = thr
        nodes[node_id].left = grow(left_idx, depth + 1)
        nodes[node_id].right = grow(right_idx, depth + 1)
        return node_id

    grow(np.arange(len(x)), 0)
    return Tree(nodes)


def fit(
    instances: list[MetaInstance],
    model_names: tuple[str, ...],
    params: GbdtParams | None = None,
    seed: int = 0,
) -> GbdtModel:
    """Boost for `params.rounds` rounds; the logged training loss must be
    non-increasing (within 1e-9) after the first round.

    Fitting is deterministic regardless of `seed` (no subsampling); the seed
    is accepted so callers can treat all stages uniformly.
    """
    params = params or GbdtParams()
    if len(instances) < max(10, 2 * params.min_child):
        raise ValueError(f"need at least {max(10, 2 * params.min_child)} instances, got {len(instances)}")
    dims = {len(inst.x) for inst in instances}
    if len(dims) != 1:
        raise ValueError("inconsistent feature dimensions across instances")
    n_features = dims.pop()
    if {len(inst.c) for inst in instances} != {len(model_names)}:
        raise ValueError("error vectors do not match the model pool size")

    x = np.stack([inst.x for inst in instances])
    c = np.stack([inst.c for inst in instances])
    n, M = c.shape
    z = np.zeros((n, M))
    model = GbdtModel(model_names=tuple(model_names), n_features=n_features, params=params)

    def mean_loss() -> float:
        w = softmax(z)
        return float(np.mean(np.sum(w * c, axis=1)))

    for r in range(params.rounds):
        w = softmax(z)
        loss_i = np.sum(w * c, axis=1, keepdims=True)
        grad = w * (c - loss_i)
        hess = np.maximum(grad * (1.0 - 2.0 * w), HESS_FLOOR)
        trees = []
        for m in range(M):
            tree = _build_tree(x, grad[:, m], hess[:, m], params)
            z[:, m] += params.eta * tree.predict(x)
            trees.append(tree)
        model.rounds.append(trees)
        loss = mean_loss()
        if model.train_loss and loss > model.train_loss[-1] + LOSS_TOL:
            raise RuntimeError(
                f"boosting loss increased at round {r + 1}: {model.train_loss[-1]:.12g} -> {loss:.12g}"
            )
        model.train_loss.append(loss)
    return model


def predict_weights(model: GbdtModel, x: np.ndarray) -> np.ndarray:
    """Softmax combination weights for one feature vector (or a stack)."""
    z = model.raw_scores(x)
    return softmax(z)


def combine(weights: np.ndarray, forecasts: np.ndarray) -> np.ndarray:
    """Weighted average of base forecasts: (M,) weights x (M, h) forecasts."""
    weights = np.asarray(weights, dtype=np.float64)
    forecasts = np.asarray(forecasts, dtype=np.float64)
    if forecasts.ndim != 2 or len(weights) != forecasts.shape[0]:
        raise ValueError(f"weights ({weights.shape}) do not match forecasts ({forecasts.shape})")
    return weights @ forecasts


MAGIC = "featcast-gbdt v1"


def save_model(path, model: GbdtModel) -> None:
    p = model.params
    lines = [
        MAGIC,
        "models " + ",".join(model.model_names),
        f"n_features {model.n_features}",
        f"params rounds={p.rounds} max_depth={p.max_depth} eta={float(p.eta).hex()} "
        f"lam={float(p.lam).hex()} min_child={p.min_child}",
    ]
    for r, trees in enumerate(model.rounds):
        for m, tree in enumerate(trees):
            lines.append(f"tree round={r} dim={m} nodes={len(tree.nodes)}")
            for node in tree.nodes:
                if node.is_leaf:
                    lines.append(f"leaf {float(node.value).hex()}")
                else:
                    lines.append(
                        f"split f={node.feature} t={float(node.threshold).hex()} l={node.left} r={node.right}"
                    )
    lines.append("end")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> GbdtModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MAGIC:
        raise ValueError(f"{path}: not a {MAGIC!r} file")
    names = tuple(lines[1].split(" ", 1)[1].split(","))
    n_features = int(lines[2].split()[1])
    opts = dict(f.split("=", 1) for f in lines[3].split()[1:])
    params = GbdtParams(
        rounds=int(opts["rounds"]),
        max_depth=int(opts["max_depth"]),
        eta=float.fromhex(opts["eta"]),
        lam=float.fromhex(opts["lam"]),
        min_child=int(opts["min_child"]),
    )
    model = GbdtModel(model_names=names, n_features=n_features, params=params)
    pos = 4
    while pos < len(lines) and lines[pos] != "end":
        header = lines[pos].split()
        if header[0] != "tree":
            raise ValueError(f"{path}: unexpected line {lines[pos]!r}")
        meta = dict(f.split("=", 1) for f in header[1:])
        r, m, count = int(meta["round"]), int(meta["dim"]), int(meta["nodes"])
        nodes = []
        for i in range(count):
            fields = lines[pos + 1 + i].split()
            if fields[0] == "leaf":
                nodes.append(TreeNode(value=float.fromhex(fields[1])))
            else:
                kv = dict(f.split("=", 1) for f in fields[1:])
                nodes.append(
                    TreeNode(
                        feature=int(kv["f"]), threshold=float.fromhex(kv["t"]),
                        left=int(kv["l"]), right=int(kv["r"]),
                    )
                )
        while len(model.rounds) <= r:
            model.rounds.append([])
        while len(model.rounds[r]) <= m:
            model.rounds[r].append(Tree([]))
        model.rounds[r][m] = Tree(nodes)
        pos += 1 + count
    return model
