"""Per-site probing heads: a two-layer MLP trained on frozen features.

The probe is a ``input_dim -> hidden -> num_classes`` MLP with ReLU and
dropout after the activation, trained with decoupled-weight-decay Adam
under a linear-warmup + cosine-decay schedule, cross-entropy loss on the
logits. Training is deterministic given (data, config, seed): weights are
initialized from a PCG64 stream seeded per probe, mini-batch shuffling is
reseeded per epoch from the same root seed, and the last partial batch is
kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .metrics import (
    BINARY,
    BINARY_POSITIVE,
    MACRO,
    MACRO_OVR,
    PredictionBatch,
    accuracy,
    auc,
    prf1,
)
from .tensor_store import MODULES, FeatureTensor, RunManifest, read_ftd


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or gradient goes non-finite during training."""

    def __init__(self, message: str, last_finite_epoch: int | None = None,
                 loss_trace: tuple[float, ...] = ()):
        super().__init__(message)
        self.last_finite_epoch = last_finite_epoch
        self.loss_trace = loss_trace


class DegenerateTestSplitError(ValueError):
    """Test split empty or holding a single class; metrics are undefined."""


@dataclass(frozen=True)
class ProbeConfig:
    """Training recipe for one probing head.

    ``hidden_dim=None`` resolves to ``min(512, input_dim)`` at train time.
    """

    hidden_dim: int | None = None
    dropout: float = 0.1
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    epochs: int = 20
    batch_size: int = 4
    warmup_ratio: float = 0.05
    repeats: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1 or self.repeats < 1:
            raise ValueError("epochs, batch_size, and repeats must be >= 1")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ValueError("warmup_ratio must be in [0, 1)")

    def resolve_hidden(self, input_dim: int) -> int:
        return self.hidden_dim if self.hidden_dim is not None else min(512, input_dim)

    def to_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "dropout": self.dropout,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "warmup_ratio": self.warmup_ratio,
            "repeats": self.repeats,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeConfig":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


@dataclass(frozen=True)
class MetricSet:
    """The five probe metrics, each in [0, 1], plus any zero-division flags."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
        }
        if self.flags:
            d["flags"] = list(self.flags)
        return d


METRIC_FIELDS = ("accuracy", "precision", "recall", "f1", "auc")


def mean_metric_set(sets: list[MetricSet]) -> MetricSet:
    flags: list[str] = []
    for s in sets:
        for f in s.flags:
            if f not in flags:
                flags.append(f)
    return MetricSet(
        *(float(np.mean([getattr(s, name) for s in sets])) for name in METRIC_FIELDS),
        flags=tuple(flags),
    )


def cosine_warmup_lr(step: int, total_steps: int, warmup_ratio: float, base_lr: float) -> float:
    """Learning rate at a 0-based *step*: linear warmup then cosine decay.

    The warmup spans ``w = floor(warmup_ratio * total_steps)`` steps rising
    to ``base_lr``; afterwards the rate follows half a cosine from
    ``base_lr`` down toward 0 over the remaining steps.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} out of range [0, {total_steps})")
    w = math.floor(warmup_ratio * total_steps)
    if step < w:
        return base_lr * (step + 1) / w
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * (step - w) / max(1, total_steps - w)))


def adamw_init(params: list[np.ndarray]) -> dict:
    return {
        "m": [np.zeros_like(p) for p in params],
        "v": [np.zeros_like(p) for p in params],
        "t": 0,
    }


def adamw_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: dict,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> tuple[list[np.ndarray], dict]:
    """One decoupled-weight-decay Adam update, in place on *params*."""
    b1, b2 = betas
    state["t"] += 1
    t = state["t"]
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient for parameter {i} at step {t}")
        m = state["m"][i]
        v = state["v"][i]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p)
    return params, state


@dataclass
class TrainedProbe:
    """Frozen weights of a trained two-layer probe plus its loss trace."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    config: ProbeConfig
    loss_trace: tuple[float, ...]

    @property
    def input_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.w2.shape[1])

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for a batch of feature rows; dropout is inference-disabled."""
        x = np.asarray(x, dtype=np.float64)
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        return _softmax(self.forward(x))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_matrix(features) -> np.ndarray:
    data = features.data if isinstance(features, FeatureTensor) else features
    return np.asarray(data, dtype=np.float64)


def train_probe(
    train_features,
    train_labels,
    num_classes: int,
    config: ProbeConfig,
    seed: int,
) -> TrainedProbe:
    """Train one probing head on frozen features.

    Runs ``config.epochs`` epochs of shuffled mini-batches with AdamW and
    the warmup+cosine schedule. Deterministic for fixed (data, config,
    seed); raises ``TrainingDivergedError`` on a non-finite loss, reporting
    the last finite epoch.
    """
    x = _as_matrix(train_features)
    y = np.asarray(train_labels, dtype=np.int64)
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if x.ndim != 2 or len(x) != len(y) or len(y) == 0:
        raise ValueError("features and labels must be non-empty and aligned")
    if y.min() < 0 or y.max() >= num_classes:
        raise ValueError("training label out of range")
    if not np.all(np.isfinite(x)):
        raise ValueError("training features must be finite")

    n, input_dim = x.shape
    hidden = config.resolve_hidden(input_dim)

    root = np.random.SeedSequence(seed)
    init_ss, drop_ss, shuffle_ss = root.spawn(3)
    init_rng = np.random.Generator(np.random.PCG64(init_ss))
    drop_rng = np.random.Generator(np.random.PCG64(drop_ss))
    epoch_seeds = shuffle_ss.spawn(config.epochs)

    # Uniform +-sqrt(1/fan_in) weights, zero biases; W1 drawn before W2.
    s1 = math.sqrt(1.0 / input_dim)
    s2 = math.sqrt(1.0 / hidden)
    w1 = init_rng.uniform(-s1, s1, size=(input_dim, hidden))
    w2 = init_rng.uniform(-s2, s2, size=(hidden, num_classes))
    b1 = np.zeros(hidden)
    b2 = np.zeros(num_classes)

    params = [w1, b1, w2, b2]
    state = adamw_init(params)
    onehot = np.eye(num_classes)[y]

    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    step = 0
    trace: list[float] = []

    for epoch in range(config.epochs):
        perm_rng = np.random.Generator(np.random.PCG64(epoch_seeds[epoch]))
        perm = perm_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb, yb = x[idx], onehot[idx]
            bsz = len(idx)

            h_pre = xb @ w1 + b1
            h = np.maximum(h_pre, 0.0)
            if config.dropout > 0.0:
                keep = drop_rng.random((bsz, hidden)) >= config.dropout
                hd = h * keep / (1.0 - config.dropout)
            else:
                hd = h
            logits = hd @ w2 + b2

            zmax = logits.max(axis=1, keepdims=True)
            logsumexp = zmax + np.log(np.exp(logits - zmax).sum(axis=1, keepdims=True))
            loss = float(np.mean((logsumexp - logits)[yb.astype(bool)]))
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss in epoch {epoch}; "
                    f"last finite epoch: {epoch - 1 if epoch else None}",
                    last_finite_epoch=epoch - 1 if epoch else None,
                    loss_trace=tuple(trace),
                )
            epoch_loss += loss * bsz

            probs = _softmax(logits)
            g_logits = (probs - yb) / bsz
            g_w2 = hd.T @ g_logits
            g_b2 = g_logits.sum(axis=0)
            g_hd = g_logits @ w2.T
            if config.dropout > 0.0:
                g_h = g_hd * keep / (1.0 - config.dropout)
            else:
                g_h = g_hd
            g_pre = g_h * (h_pre > 0.0)
            g_w1 = xb.T @ g_pre
            g_b1 = g_pre.sum(axis=0)

            lr = cosine_warmup_lr(step, total_steps, config.warmup_ratio, config.learning_rate)
            adamw_step(
                params,
                [g_w1, g_b1, g_w2, g_b2],
                state,
                lr,
                weight_decay=config.weight_decay,
            )
            step += 1
        trace.append(epoch_loss / n)

    return TrainedProbe(w1, b1, w2, b2, replace(config, seed=seed), tuple(trace))


def evaluate_probe(probe: TrainedProbe, test_features, test_labels) -> MetricSet:
    """Score a probe on held-out features.

    Binary batches report positive-class precision/recall/F1 and binary
    AUC; multiclass batches report macro scores and one-vs-rest AUC.
    """
    x = _as_matrix(test_features)
    y = np.asarray(test_labels, dtype=np.int64)
    if len(y) == 0:
        raise DegenerateTestSplitError("empty test split")
    if len(np.unique(y)) < 2:
        raise DegenerateTestSplitError("test split holds a single class")
    scores = probe.predict_scores(x)
    batch = PredictionBatch(y, scores.argmax(axis=1), scores)
    binary = probe.num_classes == 2
    p = prf1(batch, BINARY_POSITIVE if binary else MACRO)
    a = auc(batch, BINARY if binary else MACRO_OVR)
    flags = p.zero_division_flags + tuple(
        f"auc: class {c} absent from test labels, skipped" for c in a.skipped_classes
    )
    return MetricSet(accuracy(batch), p.precision, p.recall, p.f1, a.value, flags)


@dataclass(frozen=True)
class LayerProbeResult:
    """Mean metrics of the probes trained at one site."""

    site_id: str
    module: str
    layer_index: int
    aggregation: str
    metrics: MetricSet
    repeats: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "site_id": self.site_id,
            "module": self.module,
            "layer_index": self.layer_index,
            "aggregation": self.aggregation,
            "metrics": self.metrics.to_dict(),
            "repeats": self.repeats,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerProbeResult":
        m = d["metrics"]
        return cls(
            site_id=d["site_id"],
            module=d["module"],
            layer_index=int(d["layer_index"]),
            aggregation=d["aggregation"],
            metrics=MetricSet(
                m["accuracy"], m["precision"], m["recall"], m["f1"], m["auc"],
                tuple(m.get("flags", ())),
            ),
            repeats=int(d["repeats"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class SiteError:
    site_id: str
    message: str


@dataclass
class SweepResult:
    results: list[LayerProbeResult]
    errors: list[SiteError]


def _site_order(site) -> tuple:
    return (MODULES.index(site.module), site.layer_index, site.aggregation, site.site_id)


def _probe_one_site(site, manifest: RunManifest, base_dir, config: ProbeConfig) -> LayerProbeResult:
    import os

    tensor = read_ftd(os.path.join(os.fspath(base_dir), site.file))
    if tensor.n_samples != manifest.n_samples:
        raise ValueError(
            f"{tensor.n_samples} feature rows but manifest declares {manifest.n_samples} samples"
        )
    labels = np.asarray(manifest.labels, dtype=np.int64)
    train_mask = manifest.train_mask()
    test_mask = manifest.test_mask()
    num_classes = len(manifest.class_names)
    x = tensor.data
    per_repeat = []
    for r in range(config.repeats):
        probe = train_probe(x[train_mask], labels[train_mask], num_classes, config, config.seed + r)
        per_repeat.append(evaluate_probe(probe, x[test_mask], labels[test_mask]))
    return LayerProbeResult(
        site_id=site.site_id,
        module=site.module,
        layer_index=site.layer_index,
        aggregation=site.aggregation,
        metrics=mean_metric_set(per_repeat),
        repeats=config.repeats,
        seed=config.seed,
    )


def probe_site_sweep(
    manifest: RunManifest,
    base_dir,
    config: ProbeConfig,
    jobs: int = 1,
) -> SweepResult:
    """Train and evaluate probes at every site of a validated run.

    Each site gets ``config.repeats`` probes (seeds ``config.seed + 0 ..
    repeats - 1``) whose metrics are averaged. Sites are independent: a
    failure at one site is recorded with its site_id and the rest proceed.
    Results come back sorted by pipeline order (module, layer_index)
    regardless of scheduling.
    """
    sites = sorted(manifest.sites, key=_site_order)
    results: list[LayerProbeResult] = []
    errors: list[SiteError] = []

    def run(site):
        return _probe_one_site(site, manifest, base_dir, config)

    if jobs > 1 and len(sites) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [(site, pool.submit(run, site)) for site in sites]
            for site, fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:
                    errors.append(SiteError(site.site_id, str(exc)))
    else:
        for site in sites:
            try:
                results.append(run(site))
            except Exception as exc:
                errors.append(SiteError(site.site_id, str(exc)))

    results.sort(key=lambda r: (MODULES.index(r.module), r.layer_index, r.aggregation, r.site_id))
    errors.sort(key=lambda e: e.site_id)
    return SweepResult(results, errors)
