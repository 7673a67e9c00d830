"""Set-based value network: dense layers, encoders, scalers, forward passes.

The network scores a (first-stage decision, scenario) pair.  Both inputs are
sets of per-element feature rows; each side runs through its own element net,
a sum over elements, and a post-aggregation net.  The two embeddings are
concatenated and a small feed-forward net maps them to one scalar in scaled
label space.  The sum makes both encoders permutation invariant and lets one
trained model serve instances of any size.

Hidden layers use ReLU; the last layer of every subnet is linear.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray    # (out_dim,)
    activation: str = "relu"  # "relu" or "identity"

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.weight.T + self.bias
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return z


@dataclass
class ColumnScaler:
    """Per-column min-max scaler; a constant column maps to 0."""

    mins: np.ndarray
    maxs: np.ndarray

    @property
    def span(self) -> np.ndarray:
        return self.maxs - self.mins

    def transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        span = self.span
        safe = np.where(span > 0.0, span, 1.0)
        out = (rows - self.mins) / safe
        return np.where(span > 0.0, out, 0.0)


@dataclass
class LabelScaler:
    lo: float
    hi: float

    @property
    def span(self) -> float:
        return self.hi - self.lo

    def transform(self, y):
        if self.span <= 0.0:
            return np.zeros_like(np.asarray(y, dtype=np.float64))
        return (np.asarray(y, dtype=np.float64) - self.lo) / self.span

    def inverse(self, s):
        if self.span <= 0.0:
            return np.full_like(np.asarray(s, dtype=np.float64), self.lo)
        return np.asarray(s, dtype=np.float64) * self.span + self.lo


@dataclass
class SetEncoder:
    element_net: list
    post_net: list


@dataclass
class ValueModel:
    """Trained scorer for (first-stage, scenario) pairs of one problem family."""

    family: str
    target_mode: str
    x_encoder: SetEncoder
    xi_encoder: SetEncoder
    value_net: list
    x_scaler: ColumnScaler
    xi_scaler: ColumnScaler
    label_scaler: LabelScaler
    arch: dict = field(default_factory=dict)


# architecture profiles: (element widths, post widths, value widths); the
# last width of each subnet is its linear output dimension
PROFILES = {
    "desk": {"element": [16, 8], "post": [32, 4], "value": [4]},
    "full-knapsack": {"element": [32, 16], "post": [64, 8], "value": [8]},
    "full-capital": {"element": [16, 4], "post": [32, 8], "value": [8]},
}


def _init_layers(rng, widths, in_dim, last_linear=True):
    layers = []
    d = in_dim
    for k, w in enumerate(widths):
        bound = 1.0 / np.sqrt(d)
        weight = rng.uniform(-bound, bound, size=(w, d))
        bias = rng.uniform(-bound, bound, size=w)
        act = "identity" if (last_linear and k == len(widths) - 1) else "relu"
        layers.append(DenseLayer(weight, bias, act))
        d = w
    return layers


def build_model(
    family: str,
    x_feature_dim: int,
    xi_feature_dim: int,
    target_mode: str = "sum",
    profile: str = "desk",
    seed: int = 0,
) -> ValueModel:
    """Fresh model with seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] init.

    Scalers start as identity placeholders and are fitted during training.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown architecture profile {profile!r}")
    spec = PROFILES[profile]
    rng = np.random.default_rng(seed)
    x_enc = SetEncoder(
        _init_layers(rng, spec["element"], x_feature_dim),
        _init_layers(rng, spec["post"], spec["element"][-1]),
    )
    xi_enc = SetEncoder(
        _init_layers(rng, spec["element"], xi_feature_dim),
        _init_layers(rng, spec["post"], spec["element"][-1]),
    )
    val_in = 2 * spec["post"][-1]
    value = _init_layers(rng, spec["value"] + [1], val_in)
    return ValueModel(
        family=family,
        target_mode=target_mode,
        x_encoder=x_enc,
        xi_encoder=xi_enc,
        value_net=value,
        x_scaler=ColumnScaler(np.zeros(x_feature_dim), np.ones(x_feature_dim)),
        xi_scaler=ColumnScaler(np.zeros(xi_feature_dim), np.ones(xi_feature_dim)),
        label_scaler=LabelScaler(0.0, 1.0),
        arch={"profile": profile, "widths": spec},
    )


def run_layers(layers, x: np.ndarray) -> np.ndarray:
    for layer in layers:
        x = layer.forward(x)
    return x


def encode_set(encoder: SetEncoder, rows: np.ndarray) -> np.ndarray:
    """Embed a set of feature rows: element net, sum over rows, post net.

    ``rows`` has shape (n, F) for one set or (B, n, F) for a batch.
    """
    rows = np.asarray(rows, dtype=np.float64)
    squeeze = rows.ndim == 2
    if squeeze:
        rows = rows[None]
    B, n, F = rows.shape
    h = run_layers(encoder.element_net, rows.reshape(B * n, F))
    g = h.reshape(B, n, -1).sum(axis=1)
    out = run_layers(encoder.post_net, g)
    return out[0] if squeeze else out


def fit_scalers(model: ValueModel, x_rows_list, xi_rows_list, labels) -> None:
    """Fit min-max scalers in place from (training split) raw data."""
    xr = np.concatenate([np.asarray(r, dtype=np.float64) for r in x_rows_list], axis=0)
    sr = np.concatenate([np.asarray(r, dtype=np.float64) for r in xi_rows_list], axis=0)
    model.x_scaler = ColumnScaler(xr.min(axis=0), xr.max(axis=0))
    model.xi_scaler = ColumnScaler(sr.min(axis=0), sr.max(axis=0))
    y = np.asarray(labels, dtype=np.float64)
    model.label_scaler = LabelScaler(float(y.min()), float(y.max()))


def predict_scaled(model: ValueModel, x_rows, xi_rows) -> float | np.ndarray:
    """Network output in scaled label space.

    Accepts one pair of row matrices or a batch (B, n, F) pair.
    """
    xr = model.x_scaler.transform(np.asarray(x_rows, dtype=np.float64))
    sr = model.xi_scaler.transform(np.asarray(xi_rows, dtype=np.float64))
    squeeze = xr.ndim == 2
    ex = encode_set(model.x_encoder, xr)
    es = encode_set(model.xi_encoder, sr)
    if squeeze:
        h = np.concatenate([ex, es])[None]
    else:
        h = np.concatenate([ex, es], axis=1)
    out = run_layers(model.value_net, h)[:, 0]
    return float(out[0]) if squeeze else out


def predict_value(model: ValueModel, x_rows, xi_rows) -> float | np.ndarray:
    """Predicted label in original units."""
    s = predict_scaled(model, x_rows, xi_rows)
    out = model.label_scaler.inverse(s)
    return float(out) if np.isscalar(s) or np.ndim(out) == 0 else out
