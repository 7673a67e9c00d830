"""Training loop with hand-rolled reverse-mode gradients and Adam.

Gradients are computed by explicit backward passes through the value net,
the two post-aggregation nets, and the two element nets; the sum over set
elements backpropagates by broadcasting.  No autodiff framework is involved,
which keeps the arithmetic bit-reproducible for a fixed seed and lets the
finite-difference check below audit every parameter.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from ccgkit.nn.layers import ValueModel, fit_scalers


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite; carries epoch and batch info."""


@dataclass
class LabeledSample:
    """One raw training record: feature rows for both sides plus the label."""

    x_rows: np.ndarray
    xi_rows: np.ndarray
    label: float
    meta: dict = field(default_factory=dict)


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 256
    lr: float = 1e-3
    val_fraction: float = 0.2
    checkpoint_every: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class TrainResult:
    model: ValueModel
    curve: list
    best_epoch: int
    best_val_mae: float
    label_std: float
    wall_time: float


def _param_layers(model: ValueModel):
    """All dense layers in one fixed order."""
    return (
        list(model.x_encoder.element_net)
        + list(model.x_encoder.post_net)
        + list(model.xi_encoder.element_net)
        + list(model.xi_encoder.post_net)
        + list(model.value_net)
    )


def _forward_cached(layers, x, cache):
    for layer in layers:
        z = x @ layer.weight.T + layer.bias
        cache.append((x, z, layer))
        x = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return x


def _backward(cache, d_out, grads):
    """Walk a cached layer stack backwards, accumulating into ``grads``."""
    for (x, z, layer), g in zip(reversed(cache), reversed(grads)):
        dz = d_out * (z > 0.0) if layer.activation == "relu" else d_out
        g[0] += dz.T @ x
        g[1] += dz.sum(axis=0)
        d_out = dz @ layer.weight
    return d_out


def _model_forward_backward(model, XR, SR, y, grads=None):
    """Mean squared error over one homogeneous batch; fills grads if given.

    XR is (B, n, Fx) and SR is (B, q, Fs), both already scaled; y is (B,)
    in scaled label space.  Returns (loss, predictions, kink_flag).
    """
    B, n, _ = XR.shape
    q = SR.shape[1]
    cx_e, cx_p, cs_e, cs_p, cv = [], [], [], [], []

    hx = _forward_cached(model.x_encoder.element_net, XR.reshape(B * n, -1), cx_e)
    gx = hx.reshape(B, n, -1).sum(axis=1)
    ex = _forward_cached(model.x_encoder.post_net, gx, cx_p)

    hs = _forward_cached(model.xi_encoder.element_net, SR.reshape(B * q, -1), cs_e)
    gs = hs.reshape(B, q, -1).sum(axis=1)
    es = _forward_cached(model.xi_encoder.post_net, gs, cs_p)

    h = np.concatenate([ex, es], axis=1)
    pred = _forward_cached(model.value_net, h, cv)[:, 0]

    err = pred - y
    loss = float(np.mean(err * err))
    kink = any(
        bool(np.any(np.abs(z) < 1e-9))
        for cache in (cx_e, cx_p, cs_e, cs_p, cv)
        for (_, z, layer) in cache
        if layer.activation == "relu"
    )

    if grads is not None:
        gx_e, gx_p, gs_e, gs_p, gv = grads
        d_pred = (2.0 / B) * err[:, None]
        dh = _backward(cv, d_pred, gv)
        dx, ds = dh[:, : ex.shape[1]], dh[:, ex.shape[1]:]
        dgx = _backward(cx_p, dx, gx_p)
        d_elem_x = np.repeat(dgx, n, axis=0)
        _backward(cx_e, d_elem_x, gx_e)
        dgs = _backward(cs_p, ds, gs_p)
        d_elem_s = np.repeat(dgs, q, axis=0)
        _backward(cs_e, d_elem_s, gs_e)
    return loss, pred, kink


def _zero_grads(model):
    def z(layers):
        return [[np.zeros_like(L.weight), np.zeros_like(L.bias)] for L in layers]

    return (
        z(model.x_encoder.element_net),
        z(model.x_encoder.post_net),
        z(model.xi_encoder.element_net),
        z(model.xi_encoder.post_net),
        z(model.value_net),
    )


def _scaled_arrays(model, samples):
    """Scale all samples and group them by (set size, scenario rows)."""
    groups = {}
    for idx, s in enumerate(samples):
        key = (s.x_rows.shape[0], s.xi_rows.shape[0])
        groups.setdefault(key, []).append(idx)
    packed = {}
    for key in sorted(groups):
        idxs = groups[key]
        XR = np.stack([model.x_scaler.transform(samples[i].x_rows) for i in idxs])
        SR = np.stack([model.xi_scaler.transform(samples[i].xi_rows) for i in idxs])
        y = model.label_scaler.transform(np.array([samples[i].label for i in idxs]))
        packed[key] = (XR, SR, y)
    return packed


def _eval_mae(model, packed) -> float:
    """Mean absolute error in original label units over packed groups."""
    total, count = 0.0, 0
    span = model.label_scaler.span if model.label_scaler.span > 0 else 1.0
    for XR, SR, y in packed.values():
        _, pred, _ = _model_forward_backward(model, XR, SR, y)
        total += float(np.sum(np.abs(pred - y))) * span
        count += len(y)
    return total / max(count, 1)


def train_model(model: ValueModel, samples, config: TrainConfig | None = None) -> TrainResult:
    """Fit ``model`` in place on raw labeled samples; returns the best snapshot.

    The data is split into train and validation by a seeded permutation,
    scalers are fitted on the training split only, and every
    ``checkpoint_every`` epochs the parameters with the lowest validation
    MAE seen so far are snapshotted.  The returned model carries those best
    parameters, not the final ones.
    """
    config = config or TrainConfig()
    t0 = time.perf_counter()
    if len(samples) < 2:
        raise ValueError("need at least two samples to split train and validation")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(samples))
    n_val = max(1, int(round(config.val_fraction * len(samples))))
    val_idx = sorted(perm[:n_val].tolist())
    train_idx = sorted(perm[n_val:].tolist())
    train_samples = [samples[i] for i in train_idx]
    val_samples = [samples[i] for i in val_idx]

    fit_scalers(
        model,
        [s.x_rows for s in train_samples],
        [s.xi_rows for s in train_samples],
        [s.label for s in train_samples],
    )
    packed_train = _scaled_arrays(model, train_samples)
    packed_val = _scaled_arrays(model, val_samples)
    label_std = float(np.std(np.array([s.label for s in samples])))
    span = model.label_scaler.span if model.label_scaler.span > 0 else 1.0

    layers = _param_layers(model)
    mom = [[np.zeros_like(L.weight), np.zeros_like(L.bias)] for L in layers]
    vel = [[np.zeros_like(L.weight), np.zeros_like(L.bias)] for L in layers]
    step = 0

    best_val = float("inf")
    best_epoch = -1
    best_params = None
    curve = []

    for epoch in range(1, config.epochs + 1):
        batches = []
        for key in sorted(packed_train):
            size = len(packed_train[key][2])
            order = rng.permutation(size)
            for start in range(0, size, config.batch_size):
                batches.append((key, order[start : start + config.batch_size]))
        rng.shuffle(batches)

        abs_sum, count = 0.0, 0
        for key, rows in batches:
            XR, SR, y = packed_train[key]
            xb, sb, yb = XR[rows], SR[rows], y[rows]
            grads = _zero_grads(model)
            loss, pred, _ = _model_forward_backward(model, xb, sb, yb, grads)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} (batch of {len(yb)})"
                )
            abs_sum += float(np.sum(np.abs(pred - yb))) * span
            count += len(yb)

            step += 1
            flat = [g for group in grads for g in group]
            bc1 = 1.0 - config.beta1**step
            bc2 = 1.0 - config.beta2**step
            for L, m, v, g in zip(layers, mom, vel, flat):
                for arr, mm, vv, gg in ((L.weight, m[0], v[0], g[0]), (L.bias, m[1], v[1], g[1])):
                    mm *= config.beta1
                    mm += (1 - config.beta1) * gg
                    vv *= config.beta2
                    vv += (1 - config.beta2) * gg * gg
                    arr -= config.lr * (mm / bc1) / (np.sqrt(vv / bc2) + config.adam_eps)

        train_mae = abs_sum / max(count, 1)
        val_mae = _eval_mae(model, packed_val)
        curve.append({"epoch": epoch, "train_mae": train_mae, "val_mae": val_mae})

        if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
            if val_mae < best_val:
                best_val = val_mae
                best_epoch = epoch
                best_params = [
                    (L.weight.copy(), L.bias.copy()) for L in layers
                ]

    if best_params is not None:
        for L, (w, b) in zip(layers, best_params):
            L.weight[...] = w
            L.bias[...] = b
    return TrainResult(
        model=model,
        curve=curve,
        best_epoch=best_epoch,
        best_val_mae=best_val,
        label_std=label_std,
        wall_time=time.perf_counter() - t0,
    )


@dataclass
class GradCheckResult:
    max_rel_error: float
    at_kink: bool


def grad_check(model: ValueModel, sample: LabeledSample, step: float = 1e-5) -> GradCheckResult:
    """Compare analytic gradients to central finite differences.

    Works on the squared error of a single sample in scaled space.  If any
    ReLU pre-activation sits within ``2 * step`` of zero the point is a
    subgradient point: the result is flagged ``at_kink`` and the caller
    should skip it rather than trust either gradient.
    """
    if not (1e-7 <= step <= 1e-3):
        raise ValueError("finite-difference step must lie in [1e-7, 1e-3]")
    XR = model.x_scaler.transform(sample.x_rows)[None]
    SR = model.xi_scaler.transform(sample.xi_rows)[None]
    y = model.label_scaler.transform(np.array([sample.label]))

    grads = _zero_grads(model)
    _, _, _ = _model_forward_backward(model, XR, SR, y, grads)

    # kink proximity uses the step size: a pre-activation closer to zero than
    # the perturbation can flip sign under the finite difference
    kink = _near_kink(model, XR, SR, y, 2.0 * step)

    layers = _param_layers(model)
    flat = [g for group in grads for g in group]
    max_rel = 0.0
    for L, g in zip(layers, flat):
        for arr, ga in ((L.weight, g[0]), (L.bias, g[1])):
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                ix = it.multi_index
                orig = arr[ix]
                arr[ix] = orig + step
                lp, _, _ = _model_forward_backward(model, XR, SR, y)
                arr[ix] = orig - step
                lm, _, _ = _model_forward_backward(model, XR, SR, y)
                arr[ix] = orig
                gn = (lp - lm) / (2.0 * step)
                denom = max(abs(ga[ix]), abs(gn), 1e-6)
                max_rel = max(max_rel, abs(ga[ix] - gn) / denom)
                it.iternext()
    return GradCheckResult(max_rel, kink)


def _near_kink(model, XR, SR, y, tol) -> bool:
    B, n, _ = XR.shape
    q = SR.shape[1]
    caches = [[], [], [], [], []]
    hx = _forward_cached(model.x_encoder.element_net, XR.reshape(B * n, -1), caches[0])
    ex = _forward_cached(model.x_encoder.post_net, hx.reshape(B, n, -1).sum(axis=1), caches[1])
    hs = _forward_cached(model.xi_encoder.element_net, SR.reshape(B * q, -1), caches[2])
    es = _forward_cached(model.xi_encoder.post_net, hs.reshape(B, q, -1).sum(axis=1), caches[3])
    _forward_cached(model.value_net, np.concatenate([ex, es], axis=1), caches[4])
    for cache in caches:
        for (_, z, layer) in cache:
            if layer.activation == "relu" and np.any(np.abs(z) < tol):
                return True
    return False
