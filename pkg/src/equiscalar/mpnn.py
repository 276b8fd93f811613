"""Scalar-coefficient message passing for charged-particle force regression.

Per layer, four scalar networks multiply hidden-vector differences:

    m_r_i = sum_{j != i} (h_r_i - h_r_j) g_r(E_i) + sum_{j != i} (h_v_i - h_v_j) g_v(E_i)
    m_v_i = sum_{j != i} (h_r_i - h_r_j) gt_r(E_i) + sum_{j != i} (h_v_i - h_v_j) gt_v(E_i)

with residual updates h <- h + m. The networks consume only invariant edge
scalars, so rotation equivariance, translation invariance, and permutation
equivariance hold by construction. In "concat" mode E_i is the full set
{e_i1, ..., e_in} concatenated in canonical (sorted) block order, so the
input does not depend on particle numbering; "pooled" mode feeds
(e_ij, sum_k e_ik) per pair to decouple the width from n. Everything is float64 numpy with
hand-rolled reverse-mode gradients.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, ShapeError
from .physics import Particle, em_force_scalar

CONCAT = "concat"
POOLED = "pooled"

READOUT_POSITION = "position"
READOUT_VELOCITY = "velocity"


# -- edge features -----------------------------------------------------------


@dataclass(frozen=True)
class EdgeConfig:
    include_inv_sqrt: bool = False
    rbf_centers: tuple = ()
    rbf_width: float = 0.5

    @property
    def dim(self) -> int:
        return 3 + int(self.include_inv_sqrt) + len(self.rbf_centers)


def edge_features(qs, rs, vs, config: EdgeConfig = EdgeConfig()) -> np.ndarray:
    """(n, n, C) invariant scalars per ordered pair; diagonal entries use
    delta = 0 (the inverse channel is defined as 0 there)."""
    qs = np.asarray(qs, dtype=np.float64)
    rs = np.asarray(rs, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    n = qs.size
    if rs.shape != (n, 3) or vs.shape != (n, 3):
        raise ShapeError(f"expected (n, 3) positions and velocities for n={n}")
    delta = rs[:, None, :] - rs[None, :, :]
    dist_sq = np.einsum("ijk,ijk->ij", delta, delta)
    channels = [
        np.outer(qs, qs),
        vs @ vs.T,
        dist_sq,
    ]
    if config.include_inv_sqrt:
        off_diag = ~np.eye(n, dtype=bool)
        if np.any(dist_sq[off_diag] == 0.0):
            raise DegenerateInputError(
                "coincident positions with the inverse-sqrt channel enabled"
            )
        inv = np.zeros_like(dist_sq)
        inv[off_diag] = dist_sq[off_diag] ** -0.5
        channels.append(inv)
    if config.rbf_centers:
        dist = np.sqrt(dist_sq)
        for c in config.rbf_centers:
            channels.append(np.exp(-((dist - c) ** 2) / (2.0 * config.rbf_width**2)))
    return np.stack(channels, axis=-1)


def _sorted_blocks(rows: np.ndarray) -> np.ndarray:
    """Flatten the rows in lexicographic order, making the result a function
    of the row multiset rather than the row order."""
    order = np.lexsort(rows.T[::-1])
    return rows[order].ravel()


# -- scalar feedforward net ---------------------------------------------------


def _act(name, x):
    if name == "tanh":
        return np.tanh(x)
    if name == "softplus":
        return np.logaddexp(0.0, x)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, x):
    if name == "tanh":
        return 1.0 - np.tanh(x) ** 2
    if name == "softplus":
        return 1.0 / (1.0 + np.exp(-x))
    raise ValueError(f"unknown activation {name!r}")


class ScalarNet:
    """Fully connected net with scalar output and cached-forward backprop."""

    def __init__(self, widths, activation="tanh", rng=None, init_scale=1.0):
        if widths[-1] != 1:
            raise ShapeError("scalar net output width must be 1")
        self.widths = list(widths)
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            self.weights.append(rng.standard_normal((fan_out, fan_in)) * init_scale / np.sqrt(fan_in))
            self.biases.append(np.zeros(fan_out))

    def forward(self, x):
        """Evaluate on one input vector or a stack of them.

        Returns (value, cache): a float for a 1-d input, an (m,) array for an
        (m, in_width) input.
        """
        a = np.asarray(x, dtype=np.float64)
        single = a.ndim == 1
        a = np.atleast_2d(a)
        if a.shape[1] != self.widths[0]:
            raise ShapeError(f"net expects input width {self.widths[0]}, got {a.shape[1]}")
        activations = [a]
        pre = []
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            pre.append(z)
            a = z if layer == len(self.weights) - 1 else _act(self.activation, z)
            activations.append(a)
        out = a[:, 0]
        return (float(out[0]) if single else out), (activations, pre)

    def backward(self, cache, dscalar):
        """Parameter gradients for d(loss)/d(output) = dscalar, summed over
        the rows the cached forward was run on."""
        activations, pre = cache
        grads_w = [np.zeros_like(w) for w in self.weights]
        grads_b = [np.zeros_like(b) for b in self.biases]
        delta = np.atleast_1d(np.asarray(dscalar, dtype=np.float64))[:, None]
        for layer in reversed(range(len(self.weights))):
            if layer != len(self.weights) - 1:
                delta = delta * _act_grad(self.activation, pre[layer])
            grads_w[layer] += delta.T @ activations[layer]
            grads_b[layer] += delta.sum(axis=0)
            delta = delta @ self.weights[layer]
        return grads_w, grads_b

    def zero_grads(self):
        return [np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases]


NET_NAMES = ("g_r", "g_v", "gt_r", "gt_v")


class MpnnModel:
    """T message-passing layers, four scalar nets per layer, weights shared
    across nodes and pairs (permutation equivariance by construction)."""

    def __init__(
        self,
        n_particles,
        layers=2,
        hidden=(16, 16),
        activation="tanh",
        mode=CONCAT,
        edge_config=EdgeConfig(),
        readout=READOUT_POSITION,
        seed=0,
        init_scale=1.0,
    ):
        if mode not in (CONCAT, POOLED):
            raise ValueError(f"unknown mode {mode!r}")
        if readout not in (READOUT_POSITION, READOUT_VELOCITY):
            raise ValueError(f"unknown readout {readout!r}")
        self.n_particles = n_particles
        self.layers = layers
        self.mode = mode
        self.edge_config = edge_config
        self.readout = readout
        self.activation = activation
        self.hidden = tuple(hidden)
        in_width = (
            edge_config.dim * n_particles if mode == CONCAT else 2 * edge_config.dim
        )
        rng = np.random.default_rng(seed)
        self.nets = [
            {
                name: ScalarNet([in_width, *hidden, 1], activation, rng, init_scale)
                for name in NET_NAMES
            }
            for _ in range(layers)
        ]

    # -- forward ---------------------------------------------------------

    def forward(self, qs, rs, vs, want_cache=False):
        qs = np.asarray(qs, dtype=np.float64)
        rs = np.asarray(rs, dtype=np.float64)
        vs = np.asarray(vs, dtype=np.float64)
        n = qs.size
        if self.mode == CONCAT and n != self.n_particles:
            raise ShapeError(
                f"concat-mode model built for n={self.n_particles}, got n={n}"
            )
        e = edge_features(qs, rs, vs, self.edge_config)
        h_r = rs - rs.mean(axis=0)
        h_v = vs.copy()
        cache = {"inputs": [], "h": [(h_r.copy(), h_v.copy())], "n": n}
        for layer in range(self.layers):
            nets = self.nets[layer]
            if self.mode == CONCAT:
                # z_i is the multiset {e_i1..e_in} concatenated in a canonical
                # (lexicographically sorted) block order, so that reordering
                # the particles cannot change the net input.
                z = np.stack([_sorted_blocks(e[i]) for i in range(n)])
                vals = {}
                net_caches = {}
                for name in NET_NAMES:
                    vals[name], net_caches[name] = nets[name].forward(z)
                s_r = n * h_r - h_r.sum(axis=0)  # sum_{j != i} (h_i - h_j)
                s_v = n * h_v - h_v.sum(axis=0)
                m_r = s_r * vals["g_r"][:, None] + s_v * vals["g_v"][:, None]
                m_v = s_r * vals["gt_r"][:, None] + s_v * vals["gt_v"][:, None]
                cache["inputs"].append(
                    {"kind": CONCAT, "vals": vals, "net_caches": net_caches,
                     "s_r": s_r, "s_v": s_v}
                )
            else:
                pooled = e.sum(axis=1)  # (n, C)
                iidx, jidx = np.nonzero(~np.eye(n, dtype=bool))
                z = np.concatenate([e[iidx, jidx], pooled[iidx]], axis=1)  # (P, 2C)
                vals = {}
                net_caches = {}
                for name in NET_NAMES:
                    vals[name], net_caches[name] = nets[name].forward(z)
                dr = h_r[iidx] - h_r[jidx]  # (P, 3)
                dv = h_v[iidx] - h_v[jidx]
                m_r = np.zeros_like(h_r)
                m_v = np.zeros_like(h_v)
                np.add.at(m_r, iidx, dr * vals["g_r"][:, None] + dv * vals["g_v"][:, None])
                np.add.at(m_v, iidx, dr * vals["gt_r"][:, None] + dv * vals["gt_v"][:, None])
                cache["inputs"].append(
                    {"kind": POOLED, "vals": vals, "net_caches": net_caches,
                     "iidx": iidx, "jidx": jidx}
                )
            h_r = h_r + m_r
            h_v = h_v + m_v
            cache["h"].append((h_r.copy(), h_v.copy()))
        out = h_r if self.readout == READOUT_POSITION else h_v
        if want_cache:
            return out, cache
        return out

    # -- backward ----------------------------------------------------------

    def backward(self, cache, dout):
        """Reverse-mode parameter gradients for upstream d(loss)/d(output)."""
        n = cache["n"]
        grads = [
            {name: self.nets[layer][name].zero_grads() for name in NET_NAMES}
            for layer in range(self.layers)
        ]
        dh_r = dout.copy() if self.readout == READOUT_POSITION else np.zeros((n, 3))
        dh_v = dout.copy() if self.readout == READOUT_VELOCITY else np.zeros((n, 3))
        for layer in reversed(range(self.layers)):
            info = cache["inputs"][layer]
            h_r_prev, h_v_prev = cache["h"][layer]
            dm_r = dh_r  # residual update: gradient reaches both h and m
            dm_v = dh_v
            if info["kind"] == CONCAT:
                vals = info["vals"]
                s_r, s_v = info["s_r"], info["s_v"]
                dval = {
                    "g_r": np.einsum("ik,ik->i", dm_r, s_r),
                    "g_v": np.einsum("ik,ik->i", dm_r, s_v),
                    "gt_r": np.einsum("ik,ik->i", dm_v, s_r),
                    "gt_v": np.einsum("ik,ik->i", dm_v, s_v),
                }
                ds_r = dm_r * vals["g_r"][:, None] + dm_v * vals["gt_r"][:, None]
                ds_v = dm_r * vals["g_v"][:, None] + dm_v * vals["gt_v"][:, None]
                # s_i = n h_i - sum_j h_j
                dh_r = dh_r + n * ds_r - ds_r.sum(axis=0)
                dh_v = dh_v + n * ds_v - ds_v.sum(axis=0)
                for name in NET_NAMES:
                    gw, gb = self.nets[layer][name].backward(
                        info["net_caches"][name], dval[name]
                    )
                    acc_w, acc_b = grads[layer][name]
                    for a, g in zip(acc_w, gw):
                        a += g
                    for a, g in zip(acc_b, gb):
                        a += g
            else:
                vals = info["vals"]
                iidx, jidx = info["iidx"], info["jidx"]
                dr = h_r_prev[iidx] - h_r_prev[jidx]
                dv = h_v_prev[iidx] - h_v_prev[jidx]
                dval = {
                    "g_r": np.einsum("pk,pk->p", dm_r[iidx], dr),
                    "g_v": np.einsum("pk,pk->p", dm_r[iidx], dv),
                    "gt_r": np.einsum("pk,pk->p", dm_v[iidx], dr),
                    "gt_v": np.einsum("pk,pk->p", dm_v[iidx], dv),
                }
                for name in NET_NAMES:
                    gw, gb = self.nets[layer][name].backward(
                        info["net_caches"][name], dval[name]
                    )
                    acc_w, acc_b = grads[layer][name]
                    for a, g in zip(acc_w, gw):
                        a += g
                    for a, g in zip(acc_b, gb):
                        a += g
                contrib_r = dm_r[iidx] * vals["g_r"][:, None] + dm_v[iidx] * vals["gt_r"][:, None]
                contrib_v = dm_r[iidx] * vals["g_v"][:, None] + dm_v[iidx] * vals["gt_v"][:, None]
                dh_r_new = dh_r.copy()
                dh_v_new = dh_v.copy()
                np.add.at(dh_r_new, iidx, contrib_r)
                np.subtract.at(dh_r_new, jidx, contrib_r)
                np.add.at(dh_v_new, iidx, contrib_v)
                np.subtract.at(dh_v_new, jidx, contrib_v)
                dh_r = dh_r_new
                dh_v = dh_v_new
        return grads

    # -- parameter access --------------------------------------------------

    def parameters(self):
        """Flat list of (layer, name, 'w'|'b', index, array) views."""
        out = []
        for layer in range(self.layers):
            for name in NET_NAMES:
                net = self.nets[layer][name]
                for idx, w in enumerate(net.weights):
                    out.append((layer, name, "w", idx, w))
                for idx, b in enumerate(net.biases):
                    out.append((layer, name, "b", idx, b))
        return out

    def apply_gradients(self, grads, lr):
        for layer in range(self.layers):
            for name in NET_NAMES:
                net = self.nets[layer][name]
                gw, gb = grads[layer][name]
                for w, g in zip(net.weights, gw):
                    w -= lr * g
                for b, g in zip(net.biases, gb):
                    b -= lr * g

    def to_dict(self):
        return {
            "n_particles": self.n_particles,
            "layers": self.layers,
            "hidden": list(self.hidden),
            "activation": self.activation,
            "mode": self.mode,
            "readout": self.readout,
            "edge_config": {
                "include_inv_sqrt": self.edge_config.include_inv_sqrt,
                "rbf_centers": list(self.edge_config.rbf_centers),
                "rbf_width": self.edge_config.rbf_width,
            },
            "nets": [
                {
                    name: {
                        "weights": [w.tolist() for w in self.nets[layer][name].weights],
                        "biases": [b.tolist() for b in self.nets[layer][name].biases],
                    }
                    for name in NET_NAMES
                }
                for layer in range(self.layers)
            ],
        }

    @classmethod
    def from_dict(cls, obj):
        cfg = obj["edge_config"]
        model = cls(
            obj["n_particles"],
            layers=obj["layers"],
            hidden=tuple(obj["hidden"]),
            activation=obj["activation"],
            mode=obj["mode"],
            edge_config=EdgeConfig(
                cfg["include_inv_sqrt"], tuple(cfg["rbf_centers"]), cfg["rbf_width"]
            ),
            readout=obj["readout"],
        )
        for layer, nets in enumerate(obj["nets"]):
            for name in NET_NAMES:
                model.nets[layer][name].weights = [
                    np.asarray(w, dtype=np.float64) for w in nets[name]["weights"]
                ]
                model.nets[layer][name].biases = [
                    np.asarray(b, dtype=np.float64) for b in nets[name]["biases"]
                ]
        return model

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- dataset -------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    qs: np.ndarray  # (S, n)
    rs: np.ndarray  # (S, n, 3)
    vs: np.ndarray  # (S, n, 3)
    targets: np.ndarray  # (S, n, 3)

    @property
    def size(self):
        return self.qs.shape[0]


MIN_SEPARATION = 0.1
MAX_REJECTION_ATTEMPTS = 10000


def generate_dataset(rng, n_particles: int, n_samples: int, k=1.0, c=1.0) -> Dataset:
    """Random charged configurations with per-particle force targets.

    Positions uniform in [-1, 1]^3 with minimum pairwise distance 0.1
    (whole-configuration rejection), velocities Gaussian sigma 0.3, charges
    uniform in {-1, +1}. Targets recompute exactly as em_force_scalar.
    """
    if n_particles < 2:
        raise ShapeError("need at least 2 particles")
    qs = np.empty((n_samples, n_particles))
    rs = np.empty((n_samples, n_particles, 3))
    vs = np.empty((n_samples, n_particles, 3))
    targets = np.empty((n_samples, n_particles, 3))
    for s in range(n_samples):
        for attempt in range(MAX_REJECTION_ATTEMPTS + 1):
            if attempt == MAX_REJECTION_ATTEMPTS:
                raise DegenerateInputError(
                    f"rejection sampling failed after {MAX_REJECTION_ATTEMPTS} attempts"
                )
            pos = rng.uniform(-1.0, 1.0, size=(n_particles, 3))
            dists = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            np.fill_diagonal(dists, np.inf)
            if dists.min() >= MIN_SEPARATION:
                break
        qs[s] = rng.choice([-1.0, 1.0], size=n_particles)
        rs[s] = pos
        vs[s] = rng.normal(0.0, 0.3, size=(n_particles, 3))
        targets[s] = forces_for(qs[s], rs[s], vs[s], k, c)
    return Dataset(qs, rs, vs, targets)


def forces_for(qs, rs, vs, k=1.0, c=1.0) -> np.ndarray:
    """Per-particle electromagnetic force from the scalar-form law."""
    n = len(qs)
    out = np.empty((n, 3))
    for i in range(n):
        test = Particle(rs[i], vs[i], charge=qs[i])
        sources = [Particle(rs[j], vs[j], charge=qs[j]) for j in range(n) if j != i]
        out[i] = em_force_scalar(test, sources, k, c)
    return out


# -- training -------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    val_fraction: float = 0.2
    # Stop once val MSE <= ratio * epoch-0 val MSE (None = run all epochs).
    stop_at_val_ratio: float | None = None


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)  # (epoch, train_mse, val_mse)
    aborted: bool = False

    @property
    def initial_val(self):
        return self.epochs[0][2]

    @property
    def final_val(self):
        return self.epochs[-1][2]


DIVERGENCE_LIMIT = 1e6


def mse_loss(pred, target):
    diff = pred - target
    return float(np.mean(diff * diff))


def evaluate_mse(model, dataset, indices):
    total = 0.0
    for s in indices:
        pred = model.forward(dataset.qs[s], dataset.rs[s], dataset.vs[s])
        total += mse_loss(pred, dataset.targets[s])
    return total / len(indices)


def train(model: MpnnModel, dataset: Dataset, config: TrainConfig) -> TrainReport:
    """Plain SGD on per-particle force MSE; deterministic given the seed."""
    rng = np.random.default_rng(config.seed)
    n_val = max(1, int(round(dataset.size * config.val_fraction)))
    perm = rng.permutation(dataset.size)
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    report = TrainReport()
    val0 = evaluate_mse(model, dataset, val_idx)
    train0 = evaluate_mse(model, dataset, train_idx)
    report.epochs.append((0, train0, val0))
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(train_idx)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            acc = None
            batch_loss = 0.0
            for s in batch:
                pred, cache = model.forward(
                    dataset.qs[s], dataset.rs[s], dataset.vs[s], want_cache=True
                )
                diff = pred - dataset.targets[s]
                batch_loss += float(np.mean(diff * diff))
                dout = 2.0 * diff / diff.size
                grads = model.backward(cache, dout)
                if acc is None:
                    acc = grads
                else:
                    for layer in range(model.layers):
                        for name in NET_NAMES:
                            aw, ab = acc[layer][name]
                            gw, gb = grads[layer][name]
                            for a, g in zip(aw, gw):
                                a += g
                            for a, g in zip(ab, gb):
                                a += g
            # mean gradient over the batch
            for layer in range(model.layers):
                for name in NET_NAMES:
                    aw, ab = acc[layer][name]
                    for a in aw:
                        a /= len(batch)
                    for a in ab:
                        a /= len(batch)
            model.apply_gradients(acc, config.lr)
            epoch_loss += batch_loss
        train_mse = epoch_loss / len(order)
        val_mse = evaluate_mse(model, dataset, val_idx)
        report.epochs.append((epoch, train_mse, val_mse))
        if train_mse > DIVERGENCE_LIMIT or not np.isfinite(train_mse):
            report.aborted = True
            break
        if config.stop_at_val_ratio is not None and val_mse <= config.stop_at_val_ratio * val0:
            break
    return report
