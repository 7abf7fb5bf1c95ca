"""Multi-head 1-D convolutional forecaster with hand-derived backprop.

Four input heads — last week's sales plus the month, weekday, and year of
the forecast anchor, each calendar scalar repeated across the 7 positions
so every head shares the same geometry — go through two valid
convolutions with ReLU and a max-pool, are concatenated, and feed two
ReLU dense layers plus a linear 7-day output.  Training is plain
mini-batch Adam on MSE in normalized space; gradients are computed by a
reverse-mode pass written out layer by layer (verified against central
finite differences in the test suite).

All products route through einsum (see linalg), so training is
bit-reproducible across runs and across worker threads.
"""

import datetime
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import data, rng
from .errors import ConfigError, DataError, NumericError, ShapeError, StorageError

HEADS = ("sales", "month", "weekday", "year")
HEAD_LEN = data.PERIOD

_MAGIC = "transferlab-model v1"


@dataclass(frozen=True)
class ModelConfig:
    conv_filters: int = 32
    kernel_size: int = 3
    pool_size: int = 2
    dense1: int = 200
    dense2: int = 100
    output_len: int = 7
    base_epochs: int = 20
    retrain_epochs: int = 25
    batch_size: int = 16
    adam_alpha: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("conv_filters", "kernel_size", "pool_size", "dense1",
                     "dense2", "output_len", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")
        if self.base_epochs < 0 or self.retrain_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        if self.conv2_len < 1:
            raise ConfigError(
                f"kernel_size {self.kernel_size} leaves no positions after two "
                f"valid convolutions over {HEAD_LEN} inputs"
            )
        if self.pooled_len < 1:
            raise ConfigError(
                f"pool_size {self.pool_size} exceeds the {self.conv2_len} "
                "positions left after convolution"
            )

    @property
    def conv1_len(self):
        return HEAD_LEN - self.kernel_size + 1

    @property
    def conv2_len(self):
        return self.conv1_len - self.kernel_size + 1

    @property
    def pooled_len(self):
        return self.conv2_len // self.pool_size

    @property
    def concat_width(self):
        return len(HEADS) * self.conv_filters * self.pooled_len

    def param_shapes(self):
        """Ordered (key, shape) pairs for every trainable tensor."""
        shapes = []
        for head in HEADS:
            shapes.append((f"conv1.{head}.w", (self.conv_filters, 1, self.kernel_size)))
            shapes.append((f"conv1.{head}.b", (self.conv_filters,)))
            shapes.append((f"conv2.{head}.w",
                           (self.conv_filters, self.conv_filters, self.kernel_size)))
            shapes.append((f"conv2.{head}.b", (self.conv_filters,)))
        shapes.append(("dense1.w", (self.concat_width, self.dense1)))
        shapes.append(("dense1.b", (self.dense1,)))
        shapes.append(("dense2.w", (self.dense1, self.dense2)))
        shapes.append(("dense2.b", (self.dense2,)))
        shapes.append(("out.w", (self.dense2, self.output_len)))
        shapes.append(("out.b", (self.output_len,)))
        return shapes


class EvalResult(NamedTuple):
    mape: float           # percent
    rmse: float           # original revenue units
    n_predictions: int


@dataclass(eq=False)
class ForecastModel:
    config: ModelConfig
    params: dict
    train_log: list = field(default_factory=list)
    provenance: list = field(default_factory=list)

    def copy(self):
        return ForecastModel(
            config=self.config,
            params={k: v.copy() for k, v in self.params.items()},
            train_log=list(self.train_log),
            provenance=list(self.provenance),
        )


def _fan_in(key, config):
    if key.startswith("conv1."):
        return 1 * config.kernel_size
    if key.startswith("conv2."):
        return config.conv_filters * config.kernel_size
    if key.startswith("dense1."):
        return config.concat_width
    if key.startswith("dense2."):
        return config.dense1
    return config.dense2  # out.*


def init_model(config):
    """Create a model with uniform(+-sqrt(6/fan_in)) parameters, seeded."""
    stream = rng.derive(config.seed, "model-init")
    params = {}
    for key, shape in config.param_shapes():
        limit = np.sqrt(6.0 / _fan_in(key, config))
        size = int(np.prod(shape))
        params[key] = (stream.uniforms(size) * 2.0 - 1.0).reshape(shape) * limit
    return ForecastModel(config=config, params=params)


def encode_inputs(windows, scaler):
    """Normalized (n, 4, 7) head tensor in HEADS order."""
    feats = scaler.transform(data.feature_matrix(windows))
    n = feats.shape[0]
    x = np.empty((n, len(HEADS), HEAD_LEN))
    x[:, 0, :] = feats[:, data.SALES_COLS]
    x[:, 1, :] = feats[:, data.MONTH_COL][:, None]
    x[:, 2, :] = feats[:, data.WEEKDAY_COL][:, None]
    x[:, 3, :] = feats[:, data.YEAR_COL][:, None]
    return x


def encode_targets(windows, scaler):
    """Normalized (n, 7) target matrix."""
    return scaler.transform_target(data.target_matrix(windows))


def _check_finite(name, arr):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite activation in layer {name}")


def _conv_windows(x, kernel):
    """Sliding (n, c, L_out, kernel) view over the position axis."""
    return np.lib.stride_tricks.sliding_window_view(x, kernel, axis=2)


def forward(model, x, want_cache=False):
    """Run the network on a normalized (n, 4, 7) batch.

    Returns the (n, output_len) prediction in normalized space, plus the
    per-layer activation cache when requested (used by backprop and by
    the SVCCA activation capture).
    """
    cfg = model.config
    p = model.params
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != len(HEADS) or x.shape[2] != HEAD_LEN:
        raise ShapeError(f"forward expects (n, {len(HEADS)}, {HEAD_LEN}) input, got {x.shape}")
    cache = {"x": x, "conv1": {}, "conv2": {}, "pool": {},
             "z1": {}, "z2": {}, "argmax": {}}
    pooled = []
    for hi, head in enumerate(HEADS):
        xh = x[:, hi:hi + 1, :]                       # (n, 1, 7)
        v0 = _conv_windows(xh, cfg.kernel_size)       # (n, 1, L1, k)
        z1 = np.einsum("nclk,fck->nfl", v0, p[f"conv1.{head}.w"]) \
            + p[f"conv1.{head}.b"][:, None]
        a1 = np.maximum(z1, 0.0)
        v1 = _conv_windows(a1, cfg.kernel_size)       # (n, F, L2, k)
        z2 = np.einsum("nclk,fck->nfl", v1, p[f"conv2.{head}.w"]) \
            + p[f"conv2.{head}.b"][:, None]
        a2 = np.maximum(z2, 0.0)
        lp = cfg.pooled_len
        windows = a2[:, :, :lp * cfg.pool_size].reshape(
            a2.shape[0], a2.shape[1], lp, cfg.pool_size)
        arg = windows.argmax(axis=3)                  # first max wins ties
        pool = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
        _check_finite(f"pool:{head}", pool)
        cache["z1"][head] = z1
        cache["conv1"][head] = a1
        cache["z2"][head] = z2
        cache["conv2"][head] = a2
        cache["argmax"][head] = arg
        cache["pool"][head] = pool
        pooled.append(pool.reshape(pool.shape[0], -1))
    concat = np.concatenate(pooled, axis=1)           # (n, concat_width)
    zd1 = np.einsum("ik,kj->ij", concat, p["dense1.w"]) + p["dense1.b"]
    ad1 = np.maximum(zd1, 0.0)
    zd2 = np.einsum("ik,kj->ij", ad1, p["dense2.w"]) + p["dense2.b"]
    ad2 = np.maximum(zd2, 0.0)
    out = np.einsum("ik,kj->ij", ad2, p["out.w"]) + p["out.b"]
    _check_finite("output", out)
    cache.update(concat=concat, zd1=zd1, dense1=ad1, zd2=zd2, dense2=ad2, output=out)
    if want_cache:
        return out, cache
    return out


def loss_and_grad(model, x, targets):
    """MSE over the batch plus gradients for every parameter tensor."""
    cfg = model.config
    p = model.params
    targets = np.asarray(targets, dtype=np.float64)
    if x.shape[0] == 0:
        raise ShapeError("loss_and_grad requires a non-empty batch")
    out, cache = forward(model, x, want_cache=True)
    diff = out - targets
    n_terms = diff.size
    mse = float(np.einsum("ij,ij->", diff, diff) / n_terms)
    if not np.isfinite(mse):
        raise NumericError("non-finite training loss")

    grads = {}
    dout = (2.0 / n_terms) * diff                      # (n, out_len)
    grads["out.w"] = np.einsum("ik,ij->kj", cache["dense2"], dout)
    grads["out.b"] = dout.sum(axis=0)
    dad2 = np.einsum("ij,kj->ik", dout, p["out.w"])
    dzd2 = dad2 * (cache["zd2"] > 0.0)
    grads["dense2.w"] = np.einsum("ik,ij->kj", cache["dense1"], dzd2)
    grads["dense2.b"] = dzd2.sum(axis=0)
    dad1 = np.einsum("ij,kj->ik", dzd2, p["dense2.w"])
    dzd1 = dad1 * (cache["zd1"] > 0.0)
    grads["dense1.w"] = np.einsum("ik,ij->kj", cache["concat"], dzd1)
    grads["dense1.b"] = dzd1.sum(axis=0)
    dconcat = np.einsum("ij,kj->ik", dzd1, p["dense1.w"])

    width = cfg.conv_filters * cfg.pooled_len
    for hi, head in enumerate(HEADS):
        dpool = dconcat[:, hi * width:(hi + 1) * width].reshape(
            -1, cfg.conv_filters, cfg.pooled_len)
        # unpool: route each gradient to the argmax position
        a2 = cache["conv2"][head]
        da2 = np.zeros_like(a2)
        da2_windows = da2[:, :, :cfg.pooled_len * cfg.pool_size].reshape(
            a2.shape[0], a2.shape[1], cfg.pooled_len, cfg.pool_size)
        np.put_along_axis(da2_windows, cache["argmax"][head][..., None],
                          dpool[..., None], axis=3)
        dz2 = da2 * (cache["z2"][head] > 0.0)
        v1 = _conv_windows(cache["conv1"][head], cfg.kernel_size)
        grads[f"conv2.{head}.w"] = np.einsum("nfl,nclk->fck", dz2, v1)
        grads[f"conv2.{head}.b"] = dz2.sum(axis=(0, 2))
        da1 = np.zeros_like(cache["conv1"][head])
        w2 = p[f"conv2.{head}.w"]
        for k in range(cfg.kernel_size):
            da1[:, :, k:k + cfg.conv2_len] += np.einsum("nfl,fc->ncl", dz2, w2[:, :, k])
        dz1 = da1 * (cache["z1"][head] > 0.0)
        xh = cache["x"][:, hi:hi + 1, :]
        v0 = _conv_windows(xh, cfg.kernel_size)
        grads[f"conv1.{head}.w"] = np.einsum("nfl,nclk->fck", dz1, v0)
        grads[f"conv1.{head}.b"] = dz1.sum(axis=(0, 2))
    return mse, grads


class AdamState:
    """Per-training-run Adam moments; models carry none between runs."""

    def __init__(self, model):
        self.m = {k: np.zeros_like(v) for k, v in model.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in model.params.items()}
        self.t = 0


def adam_step(model, grads, state):
    """One in-place Adam update with bias correction."""
    cfg = model.config
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for key, g in grads.items():
        m = state.m[key] = b1 * state.m[key] + (1.0 - b1) * g
        v = state.v[key] = b2 * state.v[key] + (1.0 - b2) * (g * g)
        model.params[key] -= cfg.adam_alpha * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
    return model


def train(model, dataset, epochs, shuffle_seed):
    """Fit in place for ``epochs`` seeded-shuffle epochs; returns the model.

    Appends one mean-MSE entry per epoch to train_log and the dataset's
    branch id to provenance (also when epochs=0, marking exposure).
    """
    if not dataset.train:
        raise DataError(f"branch {dataset.branch_id}: empty training split")
    x = encode_inputs(list(dataset.train), dataset.scaler)
    t = encode_targets(list(dataset.train), dataset.scaler)
    n = x.shape[0]
    state = AdamState(model)
    shuffle = rng.derive(shuffle_seed, "train-shuffle")
    batch = model.config.batch_size
    for epoch in range(epochs):
        order = shuffle.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            try:
                mse, grads = loss_and_grad(model, x[idx], t[idx])
            except NumericError as exc:
                raise NumericError(
                    f"branch {dataset.branch_id} epoch {epoch} "
                    f"batch {start // batch}: {exc}"
                ) from exc
            adam_step(model, grads, state)
            total += mse * len(idx)
        model.train_log.append(total / n)
    model.provenance.append(dataset.branch_id)
    return model


def predict(model, windows, scaler):
    """Forecast in original revenue units for a list of windows."""
    x = encode_inputs(list(windows), scaler)
    out = forward(model, x)
    return scaler.inverse_target(out)


def compute_rmse(actuals, forecasts):
    """Root mean squared error pooled over all entries, original units."""
    err = (np.asarray(forecasts, dtype=np.float64)
           - np.asarray(actuals, dtype=np.float64)).ravel()
    return float(np.sqrt(np.einsum("i,i->", err, err) / err.size))


def compute_mape(actuals, forecasts):
    """Mean absolute percentage error (percent); actuals must be nonzero."""
    a = np.asarray(actuals, dtype=np.float64).ravel()
    f = np.asarray(forecasts, dtype=np.float64).ravel()
    return float(100.0 * np.mean(np.abs(a - f) / np.abs(a)))


def evaluate(model, test_windows, scaler):
    """Pooled MAPE (percent) and RMSE over all windows' per-day terms."""
    test_windows = list(test_windows)
    if not test_windows:
        raise DataError("evaluate requires at least one window")
    forecasts = predict(model, test_windows, scaler)
    actuals = data.target_matrix(test_windows)
    zero_rows, zero_cols = np.nonzero(actuals == 0.0)
    if zero_rows.size:
        w = test_windows[int(zero_rows[0])]
        day = w.anchor + datetime.timedelta(days=int(zero_cols[0]))
        raise DataError(
            f"MAPE undefined: actual revenue 0 on {day.isoformat()} "
            f"(window anchored {w.anchor.isoformat()})"
        )
    return EvalResult(
        mape=compute_mape(actuals, forecasts),
        rmse=compute_rmse(actuals, forecasts),
        n_predictions=actuals.size,
    )


# ------------------------------------------------------------ checkpoints

def save_model(model, path):
    """Write config, provenance, train log and raw tensors; bit-exact."""
    cfg = model.config
    tensors = [{"key": k, "shape": list(v.shape)} for k, v in sorted(model.params.items())]
    header = {
        "config": {f: getattr(cfg, f) for f in cfg.__dataclass_fields__},
        "provenance": model.provenance,
        "train_log": model.train_log,
        "tensors": tensors,
    }
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC.encode() + b"\n")
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            for entry in tensors:
                arr = np.ascontiguousarray(model.params[entry["key"]], dtype="<f8")
                fh.write(arr.tobytes())
    except OSError as exc:
        raise StorageError(f"cannot write model checkpoint {path}: {exc}") from exc


def load_model(path):
    try:
        with open(path, "rb") as fh:
            magic = fh.readline().rstrip(b"\n").decode()
            if magic != _MAGIC:
                raise StorageError(f"{path}: not a model checkpoint (magic {magic!r})")
            header = json.loads(fh.readline().decode())
            blob = fh.read()
    except OSError as exc:
        raise StorageError(f"cannot read model checkpoint {path}: {exc}") from exc
    config = ModelConfig(**header["config"])
    params = {}
    offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        chunk = blob[offset:offset + count * 8]
        if len(chunk) != count * 8:
            raise StorageError(f"{path}: truncated tensor {entry['key']}")
        params[entry["key"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += count * 8
    if offset != len(blob):
        raise StorageError(f"{path}: trailing bytes after tensors")
    expected = {k for k, _ in config.param_shapes()}
    if set(params) != expected:
        raise StorageError(f"{path}: tensor set does not match config")
    return ForecastModel(
        config=config,
        params=params,
        train_log=list(header["train_log"]),
        provenance=list(header["provenance"]),
    )
