"""Geometry-regularized twin autoencoders.

Two independent encoder/decoder pairs, one per domain, trained with

    L = L_recon + lambda * L_align + L_anchor

where ``L_align`` pulls each encoding onto its precomputed aligned
coordinate and ``L_anchor`` pulls each anchored point onto the aligned
coordinate of its correspondent in the other domain. After training the
decoders can be swapped to map points across domains.

Networks are plain numpy MLPs with manual reverse-mode gradients.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, DivergenceError

__all__ = [
    "LossReport",
    "MlpParams",
    "TrainConfig",
    "TwinModel",
    "cross_map",
    "decode",
    "encode",
    "init_twin",
    "load_model",
    "loss_and_grads",
    "save_model",
    "train_twin",
]

MODEL_FORMAT_VERSION = 1
DOMAINS = ("X", "Y")

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0).astype(a.dtype)),
}


@dataclass
class MlpParams:
    """Fully connected network; hidden layers use ``activation``, the output is linear.

    ``weights[l]`` has shape ``(layer_dims[l], layer_dims[l + 1])``.
    """

    layer_dims: list
    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count mismatch")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_dims[l], self.layer_dims[l + 1]) or b.shape != (self.layer_dims[l + 1],):
                raise ValueError(f"layer {l} has incompatible shapes {W.shape}, {b.shape}")

    @classmethod
    def init(cls, layer_dims, rng, activation="tanh"):
        """Fan-in scaled uniform weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = np.sqrt(3.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_dims), weights, biases, activation)

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def forward(self, X, keep=False):
        """Apply the network; with ``keep`` also return per-layer activations."""
        act, _ = _ACTIVATIONS[self.activation]
        A = X
        acts = [X]
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            Z = A @ W + b
            A = Z if l == last else act(Z)
            acts.append(A)
        return (A, acts) if keep else A

    def backward(self, acts, grad_out):
        """Gradients of a scalar loss given ``dL/d(output)``.

        Returns ``(grad_weights, grad_biases, grad_input)``.
        """
        _, dact = _ACTIVATIONS[self.activation]
        gW = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        G = grad_out
        last = len(self.weights) - 1
        for l in range(last, -1, -1):
            if l != last:
                G = G * dact(acts[l + 1])
            gW[l] = acts[l].T @ G
            gb[l] = G.sum(axis=0)
            G = G @ self.weights[l].T
        return gW, gb, G

    def to_dict(self):
        return {
            "layer_dims": list(map(int, self.layer_dims)),
            "activation": self.activation,
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d):
        dims = d["layer_dims"]
        weights = [np.asarray(w, dtype=float).reshape(dims[l], dims[l + 1]) for l, w in enumerate(d["weights"])]
        biases = [np.asarray(b, dtype=float) for b in d["biases"]]
        return cls(dims, weights, biases, d["activation"])


@dataclass
class Scaler:
    """Affine standardization ``(x - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X):
        return (X - self.mean) / self.scale

    def inverse(self, Z):
        return Z * self.scale + self.mean

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def fit(cls, X):
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def to_dict(self):
        return {"mean": np.asarray(self.mean).tolist(), "scale": np.asarray(self.scale).tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


@dataclass
class TwinModel:
    """Two autoencoders sharing one latent space.

    ``scaler_x``/``scaler_y`` standardize inputs with training statistics.
    ``latent`` maps internal codes to embedding coordinates; it uses one
    scalar scale for all latent axes so distances keep their shape.
    """

    encoder_x: MlpParams
    decoder_x: MlpParams
    encoder_y: MlpParams
    decoder_y: MlpParams
    latent_dim: int
    lam: float = 10.0
    scaler_x: Scaler | None = None
    scaler_y: Scaler | None = None
    latent: Scaler | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.latent_dim
        if m < 1:
            raise ValueError("latent_dim must be >= 1")
        for enc, dec in ((self.encoder_x, self.decoder_x), (self.encoder_y, self.decoder_y)):
            if enc.out_dim != m or dec.in_dim != m or dec.out_dim != enc.in_dim:
                raise ValueError("encoder/decoder dimensions do not match the latent space")
        self.scaler_x = self.scaler_x or Scaler.identity(self.encoder_x.in_dim)
        self.scaler_y = self.scaler_y or Scaler.identity(self.encoder_y.in_dim)
        self.latent = self.latent or Scaler(np.zeros(m), np.ones(m))

    @property
    def d_x(self):
        return self.encoder_x.in_dim

    @property
    def d_y(self):
        return self.encoder_y.in_dim

    def networks(self):
        return {"encoder_x": self.encoder_x, "decoder_x": self.decoder_x,
                "encoder_y": self.encoder_y, "decoder_y": self.decoder_y}

    def parameters(self):
        """Yield ``(name, array)`` for every weight and bias (arrays are live)."""
        for net_name, net in self.networks().items():
            for l, (W, b) in enumerate(zip(net.weights, net.biases)):
                yield f"{net_name}.W{l}", W
                yield f"{net_name}.b{l}", b

    def copy(self):
        return copy.deepcopy(self)

    def _domain(self, domain):
        if domain == "X":
            return self.encoder_x, self.decoder_x, self.scaler_x
        if domain == "Y":
            return self.encoder_y, self.decoder_y, self.scaler_y
        raise ValueError(f"domain must be 'X' or 'Y', got {domain!r}")

    def to_dict(self):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "latent_dim": int(self.latent_dim),
            "lambda": float(self.lam),
            "networks": {k: v.to_dict() for k, v in self.networks().items()},
            "scalers": {"X": self.scaler_x.to_dict(), "Y": self.scaler_y.to_dict(), "latent": self.latent.to_dict()},
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model format version {d.get('format_version')}")
        nets = {k: MlpParams.from_dict(v) for k, v in d["networks"].items()}
        sc = d["scalers"]
        return cls(nets["encoder_x"], nets["decoder_x"], nets["encoder_y"], nets["decoder_y"],
                   d["latent_dim"], d["lambda"], Scaler.from_dict(sc["X"]), Scaler.from_dict(sc["Y"]),
                   Scaler.from_dict(sc["latent"]), d.get("provenance", {}))


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings. ``batch_size=None`` means full-batch."""

    epochs: int = 2000
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    batch_size: int | None = None
    seed: int = 0
    lam: float = 10.0
    grad_clip: float | None = 10.0
    beta1: float = 0.9
    beta2: float = 0.999
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class LossReport:
    """Loss terms for one evaluation of both autoencoders."""

    recon_x: float
    recon_y: float
    align_x: float
    align_y: float
    anchor_x: float
    anchor_y: float
    lam: float

    @property
    def recon(self):
        return self.recon_x + self.recon_y

    @property
    def align(self):
        return self.align_x + self.align_y

    @property
    def anchor(self):
        return self.anchor_x + self.anchor_y

    @property
    def total(self):
        return self.recon + self.lam * self.align + self.anchor

    def as_row(self):
        row = asdict(self)
        row["total"] = self.total
        return row


def init_twin(d_x, d_y, m=2, hidden=(64, 32), seed=0, activation="tanh", lam=10.0):
    """Fresh twin model with encoders ``d -> hidden... -> m`` and mirrored decoders."""
    if m < 1:
        raise ValueError("latent dimension must be >= 1")
    hidden = list(hidden)
    rng = np.random.default_rng(seed)
    enc_x = MlpParams.init([d_x, *hidden, m], rng, activation)
    dec_x = MlpParams.init([m, *hidden[::-1], d_x], rng, activation)
    enc_y = MlpParams.init([d_y, *hidden, m], rng, activation)
    dec_y = MlpParams.init([m, *hidden[::-1], d_y], rng, activation)
    return TwinModel(enc_x, dec_x, enc_y, dec_y, m, lam, provenance={"init_seed": int(seed), "hidden": hidden})


def _anchor_pairs(anchors):
    if anchors is None:
        return np.zeros((0, 2), dtype=int)
    return np.asarray(getattr(anchors, "pairs", anchors), dtype=int).reshape(-1, 2)


def _ae_terms(enc, dec, Xs, T_self, T_other, own_idx, other_idx, lam, need_grads=True):
    """Loss terms and gradients for one autoencoder on standardized inputs.

    ``T_self`` are the targets for the alignment term and
    ``T_other[other_idx]`` those for the anchored rows ``own_idx``.
    """
    n = Xs.shape[0]
    Z, enc_acts = enc.forward(Xs, keep=True)
    R, dec_acts = dec.forward(Z, keep=True)
    diff_r = R - Xs
    diff_a = Z - T_self
    recon = float(np.sum(diff_r**2) / n)
    align = float(np.sum(diff_a**2) / n)
    n_a = own_idx.size
    if n_a:
        diff_c = Z[own_idx] - T_other[other_idx]
        anchor = float(np.sum(diff_c**2) / n_a)
    else:
        anchor = 0.0
    if not need_grads:
        return (recon, align, anchor), None
    gW_dec, gb_dec, dZ = dec.backward(dec_acts, (2.0 / n) * diff_r)
    dZ = dZ + lam * (2.0 / n) * diff_a
    if n_a:
        np.add.at(dZ, own_idx, (2.0 / n_a) * diff_c)
    gW_enc, gb_enc, _ = enc.backward(enc_acts, dZ)
    return (recon, align, anchor), ((gW_enc, gb_enc), (gW_dec, gb_dec))


def _targets(model, E):
    return (np.asarray(E, dtype=float) - model.latent.mean) / model.latent.scale


def loss_and_grads(model, X_batch, Y_batch, E_x_targets, E_y_targets, anchors=None, lam=None, need_grads=True):
    """Evaluate the three-term loss of both autoencoders and its gradients.

    Inputs are in data units and targets in embedding units; both are
    mapped through the model's stored scalers. ``anchors`` holds
    ``(x_row, y_row)`` pairs indexing into the batches. ``lam`` defaults to
    ``model.lam``.

    Returns
    -------
    report : LossReport
    grads : dict or None
        ``{"encoder_x": (gW, gb), "decoder_x": ..., ...}`` with lists of
        arrays matching each network's layers.
    """
    lam = model.lam if lam is None else float(lam)
    X = model.scaler_x.transform(np.asarray(X_batch, dtype=float))
    Y = model.scaler_y.transform(np.asarray(Y_batch, dtype=float))
    Tx = _targets(model, E_x_targets)
    Ty = _targets(model, E_y_targets)
    if Tx.shape != (X.shape[0], model.latent_dim) or Ty.shape != (Y.shape[0], model.latent_dim):
        raise DataError("embedding targets are not row-aligned with the batches")
    pairs = _anchor_pairs(anchors)
    ax, ay = pairs[:, 0], pairs[:, 1]
    # overflow is reported below as a non-finite loss term
    with np.errstate(over="ignore", invalid="ignore"):
        tx, gx = _ae_terms(model.encoder_x, model.decoder_x, X, Tx, Ty, ax, ay, lam, need_grads)
        ty, gy = _ae_terms(model.encoder_y, model.decoder_y, Y, Ty, Tx, ay, ax, lam, need_grads)
    report = LossReport(tx[0], ty[0], tx[1], ty[1], tx[2], ty[2], lam)
    bad = [k for k, v in report.as_row().items() if not np.isfinite(v)]
    if bad:
        raise FloatingPointError(f"non-finite loss term(s): {', '.join(bad)}")
    if not need_grads:
        return report, None
    grads = {"encoder_x": gx[0], "decoder_x": gx[1], "encoder_y": gy[0], "decoder_y": gy[1]}
    return report, grads


class _Optimizer:
    """Adam or SGD with momentum over a list of arrays updated in place."""

    def __init__(self, params, cfg):
        self.params = params
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params] if cfg.optimizer == "adam" else None
        self.t = 0

    def step(self, grads):
        cfg = self.cfg
        if cfg.grad_clip is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > cfg.grad_clip:
                grads = [g * (cfg.grad_clip / norm) for g in grads]
        self.t += 1
        if cfg.optimizer == "adam":
            b1, b2 = cfg.beta1, cfg.beta2
            c1 = 1.0 - b1**self.t
            c2 = 1.0 - b2**self.t
            for p, g, m, v in zip(self.params, grads, self.m, self.v):
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + 1e-8)
        else:
            for p, g, m in zip(self.params, grads, self.m):
                m *= cfg.momentum
                m += g
                p -= cfg.learning_rate * m


def _flat(net_grads):
    out = []
    for gW, gb in zip(*net_grads):
        out.extend([gW, gb])
    return out


def _net_params(net):
    out = []
    for W, b in zip(net.weights, net.biases):
        out.extend([W, b])
    return out


def _embedding_rows(aligned, n_x, n_y):
    E_x = np.asarray(aligned.E_x if hasattr(aligned, "E_x") else aligned[0], dtype=float)
    E_y = np.asarray(aligned.E_y if hasattr(aligned, "E_y") else aligned[1], dtype=float)
    if E_x.shape[0] != n_x or E_y.shape[0] != n_y:
        raise DataError(
            f"embedding rows ({E_x.shape[0]}, {E_y.shape[0]}) do not match training rows ({n_x}, {n_y})"
        )
    return E_x, E_y


def train_twin(model, pair_train, aligned, anchors, cfg=TrainConfig(), fit_scalers=True):
    """Train both autoencoders against a precomputed aligned embedding.

    Parameters
    ----------
    model : TwinModel
        Starting point; it is copied, not modified.
    pair_train : DomainPair
        Training rows only.
    aligned : AlignedEmbedding
        Coordinates for exactly the training rows, in the same order.
    anchors : AnchorSet
        Anchor pairs indexing training rows.
    cfg : TrainConfig
    fit_scalers : bool
        Fit input and latent scalers on the training data first.

    Returns
    -------
    model : TwinModel
    history : list of LossReport
        One report per epoch, evaluated on the full training set before
        that epoch's update.

    Raises
    ------
    DivergenceError
        If the loss becomes non-finite; it carries the last finite model
        and history.
    """
    model = model.copy()
    X = np.asarray(pair_train.X, dtype=float)
    Y = np.asarray(pair_train.Y, dtype=float)
    E_x, E_y = _embedding_rows(aligned, X.shape[0], Y.shape[0])
    if X.shape[1] != model.d_x or Y.shape[1] != model.d_y:
        raise DataError("training features do not match the model input dimensions")
    pairs = _anchor_pairs(anchors)
    model.lam = float(cfg.lam)
    if cfg.epochs == 0:
        return model, []
    if fit_scalers:
        model.scaler_x = Scaler.fit(X)
        model.scaler_y = Scaler.fit(Y)
        E = np.vstack([E_x, E_y])
        center = E.mean(axis=0)
        spread = float(np.sqrt(np.mean(np.sum((E - center) ** 2, axis=1))))
        model.latent = Scaler(center, np.full(model.latent_dim, spread if spread > 0 else 1.0))
    model.provenance = dict(model.provenance, train_config=cfg.to_dict(),
                            embedding_hash=getattr(aligned, "hash", None))

    opt_x = _Optimizer(_net_params(model.encoder_x) + _net_params(model.decoder_x), cfg)
    opt_y = _Optimizer(_net_params(model.encoder_y) + _net_params(model.decoder_y), cfg)
    rng = np.random.default_rng(cfg.seed)
    history = []
    good = model.copy()
    n = X.shape[0]
    full_batch = cfg.batch_size is None or cfg.batch_size >= max(X.shape[0], Y.shape[0])

    for epoch in range(cfg.epochs):
        try:
            if full_batch:
                report, grads = loss_and_grads(model, X, Y, E_x, E_y, pairs, cfg.lam)
            else:
                report, _ = loss_and_grads(model, X, Y, E_x, E_y, pairs, cfg.lam, need_grads=False)
        except FloatingPointError as exc:
            raise DivergenceError(f"training diverged at epoch {epoch}: {exc}", good, history) from None
        history.append(report)
        if full_batch:
            opt_x.step(_flat(grads["encoder_x"]) + _flat(grads["decoder_x"]))
            opt_y.step(_flat(grads["encoder_y"]) + _flat(grads["decoder_y"]))
        else:
            if X.shape[0] != Y.shape[0]:
                raise DataError("minibatch training needs row-matched domains")
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                rows = order[start:start + cfg.batch_size]
                pos = np.full(n, -1)
                pos[rows] = np.arange(rows.size)
                inside = (pos[pairs[:, 0]] >= 0) & (pos[pairs[:, 1]] >= 0) if pairs.size else np.zeros(0, bool)
                batch_pairs = np.column_stack([pos[pairs[inside, 0]], pos[pairs[inside, 1]]])
                try:
                    _, grads = loss_and_grads(model, X[rows], Y[rows], E_x[rows], E_y[rows], batch_pairs, cfg.lam)
                except FloatingPointError as exc:
                    raise DivergenceError(f"training diverged at epoch {epoch}: {exc}", good, history) from None
                opt_x.step(_flat(grads["encoder_x"]) + _flat(grads["decoder_x"]))
                opt_y.step(_flat(grads["encoder_y"]) + _flat(grads["decoder_y"]))
        if not all(np.all(np.isfinite(p)) for _, p in model.parameters()):
            raise DivergenceError(f"parameters became non-finite at epoch {epoch}", good, history)
        if epoch % 100 == 99:
            good = model.copy()
    return model, history


def _check_points(points, d, what):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if points.ndim != 2 or points.shape[1] != d:
        raise DataError(f"{what}: expected {d} columns, got shape {points.shape}")
    return points


def encode(model, domain, points):
    """Embed points of one domain into the shared space."""
    enc, _, scaler = model._domain(domain)
    X = _check_points(points, enc.in_dim, f"encode({domain})")
    Z = enc.forward(scaler.transform(X))
    return model.latent.inverse(Z)


def decode(model, domain, coords):
    """Map shared-space coordinates to a domain's feature space."""
    _, dec, scaler = model._domain(domain)
    E = _check_points(coords, model.latent_dim, f"decode({domain})")
    R = dec.forward(model.latent.transform(E))
    return scaler.inverse(R)


def cross_map(model, from_domain, points):
    """Decoder swap: encode with one domain's encoder, decode with the other's decoder."""
    if from_domain not in DOMAINS:
        raise ValueError(f"domain must be 'X' or 'Y', got {from_domain!r}")
    other = "Y" if from_domain == "X" else "X"
    return decode(model, other, encode(model, from_domain, points))


def save_model(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), sort_keys=True, default=_jsonable))
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def load_model(path):
    return TwinModel.from_dict(json.loads(Path(path).read_text()))
