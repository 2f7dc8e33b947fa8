"""Multi-label span labeling with attention-pooled span representations.

Every span up to ``max_span_width`` tokens gets an independent sigmoid
probability for each (relation label, role) pair. Token vectors are
learned embeddings contextualized by a windowed mean; a span vector is
the softmax(c . M)-weighted sum of its token vectors.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from mare.artifact import pack_array, read_artifact, unpack_array, write_artifact
from mare.corpus import Attribute, Document, Schema, Span
from mare.crf import check_schema
from mare.errors import ConfigError
from mare.optim import AdamW

logger = logging.getLogger(__name__)

ARTIFACT_FORMAT = "mare-span"
ARTIFACT_VERSION = 1
PROB_CLAMP = 1e-7
UNK = "<unk>"
# learning rate used for the pretrained embedder in the original setup
PAPER_EMBEDDING_LR = 5e-5


@dataclass(frozen=True)
class SpanPrediction:
    span: Span
    label: str
    role: str
    probability: float


def span_label_set(schema: Schema) -> list[tuple[str, str]]:
    return schema.pairs()


def enumerate_spans(n: int, max_span_width: int) -> list[Span]:
    if n < 1 or max_span_width < 1:
        raise ValueError("need n >= 1 and max_span_width >= 1")
    return [Span(i, j) for i in range(n) for j in range(i + 1, min(i + max_span_width, n) + 1)]


def attention_weights(scores: Sequence[float]) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty score slice")
    e = np.exp(scores - scores.max())
    return e / e.sum()


def span_representation(embeddings: np.ndarray, span: Span, attention: np.ndarray) -> np.ndarray:
    if not 0 <= span.start < span.end <= len(embeddings):
        raise ValueError(f"span {span} outside {len(embeddings)} tokens")
    window = embeddings[span.start:span.end]
    return attention_weights(window @ attention) @ window


def span_label_probs(rep: np.ndarray, head: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return expit(rep @ head + bias)


def bce_loss(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross-entropy over all (span, label) cells, clamped at 1e-7."""
    p = np.clip(np.asarray(probs, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(targets, dtype=float)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def context_matrix(n: int, window: int) -> np.ndarray:
    """Row i averages tokens within ``window`` positions of i."""
    A = np.zeros((n, n))
    for i in range(n):
        lo, hi = max(0, i - window), min(n, i + window + 1)
        A[i, lo:hi] = 1.0 / (hi - lo)
    return A


@dataclass
class SpanConfig:
    embedding_dim: int = 32
    max_span_width: int = 8
    context_window: int = 2
    head_lr: float = 1e-3
    embedding_lr: float = 1e-3
    weight_decay: float = 1e-2
    batch_size: int = 6
    epochs: int = 10
    seed: int = 0
    threshold: float = 0.5
    negative_sample_rate: float = 1.0
    endpoint_features: bool = True
    init_scale: float = 0.1

    def __post_init__(self):
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be positive")
        if self.max_span_width < 1:
            raise ConfigError("max_span_width must be at least 1")
        if self.context_window < 0:
            raise ConfigError("context_window must be non-negative")
        if self.head_lr <= 0 or self.embedding_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not 0.0 < self.negative_sample_rate <= 1.0:
            raise ConfigError("negative_sample_rate must be in (0, 1]")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")


@dataclass
class SpanModel:
    """Span labeler parameters.

    ``head`` has ``embedding_dim`` rows, or three times that when endpoint
    features (first and last token vectors) are concatenated to the pooled
    span vector.
    """

    vocab: tuple[str, ...]
    embeddings: np.ndarray  # [len(vocab), d]; row 0 is the unknown token
    attention: np.ndarray   # [d]
    head: np.ndarray        # [h, T]
    bias: np.ndarray        # [T]
    labels: tuple[tuple[str, str], ...]
    max_span_width: int = 8
    context_window: int = 2
    threshold: float = 0.5
    endpoint_features: bool = True
    schema_fingerprint: str = ""
    config: dict = field(default_factory=dict)
    history: list[float] = field(default_factory=list)
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._index = {w: i for i, w in enumerate(self.vocab)}

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @classmethod
    def zeros(cls, schema: Schema, vocab: Iterable[str] = (), dim: int = 8,
              **kwargs) -> SpanModel:
        vocab = (UNK,) + tuple(w for w in vocab if w != UNK)
        labels = tuple(span_label_set(schema))
        endpoint = kwargs.get("endpoint_features", True)
        h = dim * (3 if endpoint else 1)
        return cls(vocab, np.zeros((len(vocab), dim)), np.zeros(dim), np.zeros((h, len(labels))),
                   np.zeros(len(labels)), labels, schema_fingerprint=schema.fingerprint(),
                   **kwargs)

    def check(self) -> None:
        d = self.dim
        h = d * (3 if self.endpoint_features else 1)
        if (self.attention.shape != (d,) or self.head.shape != (h, len(self.labels))
                or self.bias.shape != (len(self.labels),)):
            raise ConfigError("span model weight shapes are inconsistent")
        if self.max_span_width < 1:
            raise ConfigError("max_span_width must be at least 1")

    def token_ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self._index.get(t.lower(), 0) for t in tokens], dtype=np.int64)


@dataclass
class _Layout:
    starts: np.ndarray  # [P]
    ends: np.ndarray    # [P], exclusive
    idx: np.ndarray     # [P, W] token index per slot (clamped)
    mask: np.ndarray    # [P, W]


def _layout(n: int, width: int) -> _Layout:
    spans = enumerate_spans(n, width)
    starts = np.array([s.start for s in spans])
    ends = np.array([s.end for s in spans])
    W = min(width, n)
    offsets = np.arange(W)
    raw = starts[:, None] + offsets[None, :]
    mask = raw < ends[:, None]
    return _Layout(starts, ends, np.where(mask, raw, 0), mask)


def _params(model: SpanModel) -> dict[str, np.ndarray]:
    return {"embeddings": model.embeddings, "attention": model.attention,
            "head": model.head, "bias": model.bias}


def _forward(params, token_ids, layout: _Layout, ctx: np.ndarray, endpoint: bool):
    E = params["embeddings"][token_ids]
    C = E + ctx @ E
    a = C @ params["attention"]
    s = np.where(layout.mask, a[layout.idx], -np.inf)
    s = s - s.max(axis=1, keepdims=True)
    e = np.where(layout.mask, np.exp(s), 0.0)
    w = e / e.sum(axis=1, keepdims=True)
    G = C[layout.idx]
    rep = np.einsum("pw,pwd->pd", w, G)
    feat = np.concatenate([rep, C[layout.starts], C[layout.ends - 1]], axis=1) if endpoint else rep
    probs = expit(feat @ params["head"] + params["bias"])
    return probs, (C, w, G, feat)


def _loss_and_grad(params, token_ids, layout, ctx, endpoint, targets, selected=None):
    """BCE over selected spans and its gradient w.r.t. every parameter."""
    probs, (C, w, G, feat) = _forward(params, token_ids, layout, ctx, endpoint)
    if selected is None:
        selected = np.ones(len(probs), dtype=bool)
    P, T = probs.shape
    # a document with nothing sampled contributes zero loss and gradient
    count = max(int(selected.sum()), 1) * T
    pc = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    cell = -(targets * np.log(pc) + (1.0 - targets) * np.log1p(-pc))
    loss = float(cell[selected].sum() / count)

    unclipped = (probs > PROB_CLAMP) & (probs < 1.0 - PROB_CLAMP)
    dlogits = (probs - targets) * unclipped * selected[:, None] / count
    d = C.shape[1]
    g_head = feat.T @ dlogits
    g_bias = dlogits.sum(axis=0)
    dfeat = dlogits @ params["head"].T
    drep = dfeat[:, :d]

    dw = np.einsum("pwd,pd->pw", G, drep)
    ds = w * (dw - (w * dw).sum(axis=1, keepdims=True))
    dG = w[:, :, None] * drep[:, None, :]
    n = len(token_ids)
    flat = layout.idx[layout.mask]
    da = np.bincount(flat, weights=ds[layout.mask], minlength=n)
    dC = np.zeros_like(C)
    np.add.at(dC, flat, dG[layout.mask])
    if endpoint:
        np.add.at(dC, layout.starts, dfeat[:, d:2 * d])
        np.add.at(dC, layout.ends - 1, dfeat[:, 2 * d:])
    dC += da[:, None] * params["attention"][None, :]
    g_att = C.T @ da
    dE = dC + ctx.T @ dC
    g_emb = np.zeros_like(params["embeddings"])
    np.add.at(g_emb, token_ids, dE)
    return loss, {"embeddings": g_emb, "attention": g_att, "head": g_head, "bias": g_bias}


def loss_and_gradient(model: SpanModel, doc: Document, targets: np.ndarray | None = None):
    """Full-document BCE loss and gradients for embeddings, attention vector and head."""
    model.check()
    n = len(doc.tokens)
    layout = _layout(n, model.max_span_width)
    if targets is None:
        targets = span_targets(doc, model.labels, model.max_span_width)
    return _loss_and_grad(_params(model), model.token_ids(doc.tokens), layout,
                          context_matrix(n, model.context_window), model.endpoint_features,
                          targets)


def span_targets(doc: Document, labels: Sequence[tuple[str, str]], max_span_width: int) -> np.ndarray:
    """Gold bits per (span, label); a span may carry several labels."""
    spans = enumerate_spans(len(doc.tokens), max_span_width)
    row = {(s.start, s.end): i for i, s in enumerate(spans)}
    col = {pair: j for j, pair in enumerate(labels)}
    y = np.zeros((len(spans), len(labels)))
    for rel in doc.relations:
        for att in rel.attributes:
            i = row.get((att.span.start, att.span.end))
            j = col.get((rel.label, att.role))
            if i is not None and j is not None:
                y[i, j] = 1.0
    return y


def build_vocab(corpus: Iterable[Document]) -> list[str]:
    return sorted({t.lower() for doc in corpus for t in doc.tokens})


def train(corpus: Sequence[Document], schema: Schema, config: SpanConfig | None = None,
          on_epoch: Callable[[int, float], None] | None = None) -> SpanModel:
    config = config or SpanConfig()
    if not corpus:
        raise ConfigError("cannot train on an empty corpus")
    rng = np.random.default_rng(config.seed)
    model = SpanModel.zeros(schema, build_vocab(corpus), config.embedding_dim,
                            max_span_width=config.max_span_width,
                            context_window=config.context_window, threshold=config.threshold,
                            endpoint_features=config.endpoint_features)
    model.config = asdict(config)
    model.embeddings[:] = rng.normal(0.0, config.init_scale, model.embeddings.shape)
    model.head[:] = rng.normal(0.0, config.init_scale, model.head.shape)

    data = []
    too_wide = positives = cells = 0
    for doc in corpus:
        n = len(doc.tokens)
        y = span_targets(doc, model.labels, config.max_span_width)
        too_wide += sum(len(a.span) > config.max_span_width
                        for r in doc.relations for a in r.attributes)
        positives += y.sum()
        cells += y.size
        data.append((model.token_ids(doc.tokens), _layout(n, config.max_span_width),
                     context_matrix(n, config.context_window), y))
    if too_wide:
        logger.warning("%d gold attributes exceed max span width %d", too_wide,
                       config.max_span_width)
    prior = min(max(positives / cells, 1e-4), 0.5)
    model.bias[:] = np.log(prior / (1.0 - prior))

    params = _params(model)
    lrs = {"embeddings": config.embedding_lr, "attention": config.head_lr,
           "head": config.head_lr, "bias": config.head_lr}
    opt = AdamW(params, lr=lrs, weight_decay=config.weight_decay)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(data))
        total = 0.0
        for b in range(0, len(order), config.batch_size):
            batch = order[b:b + config.batch_size]
            for g in grads.values():
                g.fill(0.0)
            for i in batch:
                ids, layout, ctx, y = data[i]
                selected = None
                if config.negative_sample_rate < 1.0:
                    selected = (y.any(axis=1)
                                | (rng.random(len(y)) < config.negative_sample_rate))
                loss, g = _loss_and_grad(params, ids, layout, ctx, config.endpoint_features,
                                         y, selected)
                total += loss
                for k in grads:
                    grads[k] += g[k]
            for g in grads.values():
                g /= len(batch)
            opt.step(grads)
        mean = total / len(data)
        model.history.append(mean)
        logger.info("epoch %d: loss %.5f (%.1fs)", epoch + 1, mean, time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(epoch + 1, mean)
    return model


def span_probabilities(model: SpanModel, doc: Document) -> tuple[list[Span], np.ndarray]:
    model.check()
    n = len(doc.tokens)
    layout = _layout(n, model.max_span_width)
    probs, _ = _forward(_params(model), model.token_ids(doc.tokens), layout,
                        context_matrix(n, model.context_window), model.endpoint_features)
    spans = [Span(int(s), int(e)) for s, e in zip(layout.starts, layout.ends)]
    return spans, probs


def predict(model: SpanModel, doc: Document, schema: Schema | None = None,
            threshold: float | None = None) -> list[SpanPrediction]:
    """All (span, label, role) with probability >= threshold (inclusive)."""
    check_schema(model, schema)
    threshold = model.threshold if threshold is None else threshold
    spans, probs = span_probabilities(model, doc)
    out = []
    for i, j in zip(*np.nonzero(probs >= threshold)):
        label, role = model.labels[j]
        out.append(SpanPrediction(spans[i], label, role, float(probs[i, j])))
    return out


def to_attributes(predictions: Iterable[SpanPrediction],
                  suppress_overlaps: bool = True) -> set[tuple[str, Attribute]]:
    """Flatten span predictions to (label, Attribute) pairs.

    With ``suppress_overlaps``, overlapping spans carrying the same
    (label, role) are reduced to the most probable one.
    """
    preds = sorted(predictions, key=lambda p: (-p.probability, p.span.start, p.span.end,
                                               p.label, p.role))
    kept: dict[tuple[str, str], list[Span]] = {}
    out = set()
    for p in preds:
        taken = kept.setdefault((p.label, p.role), [])
        if suppress_overlaps and any(p.span.overlaps(s) for s in taken):
            continue
        taken.append(p.span)
        out.add((p.label, Attribute(p.span, p.role)))
    return out


def prediction_record(doc_id: str, predictions: Iterable[SpanPrediction]) -> dict:
    spans = sorted(predictions, key=lambda p: (p.span.start, p.span.end, p.label, p.role))
    return {"docId": doc_id, "spans": [
        {"start": p.span.start, "end": p.span.end, "label": p.label, "role": p.role,
         "prob": round(p.probability, 6)} for p in spans]}


def save_model(model: SpanModel, path: str | Path) -> None:
    write_artifact({
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "schemaFingerprint": model.schema_fingerprint,
        "vocab": list(model.vocab),
        "labels": [list(p) for p in model.labels],
        "embeddings": pack_array(model.embeddings),
        "attention": pack_array(model.attention),
        "head": pack_array(model.head),
        "bias": pack_array(model.bias),
        "maxSpanWidth": model.max_span_width,
        "contextWindow": model.context_window,
        "threshold": model.threshold,
        "endpointFeatures": model.endpoint_features,
        "config": model.config,
        "history": model.history,
    }, path)


def load_model(path: str | Path) -> SpanModel:
    payload = read_artifact(path, ARTIFACT_FORMAT)
    if payload.get("version") != ARTIFACT_VERSION:
        raise ConfigError(f"{path}: unsupported model version {payload.get('version')}")
    model = SpanModel(
        vocab=tuple(payload["vocab"]),
        embeddings=unpack_array(payload["embeddings"]),
        attention=unpack_array(payload["attention"]),
        head=unpack_array(payload["head"]),
        bias=unpack_array(payload["bias"]),
        labels=tuple(tuple(p) for p in payload["labels"]),
        max_span_width=payload["maxSpanWidth"],
        context_window=payload["contextWindow"],
        threshold=payload["threshold"],
        endpoint_features=payload["endpointFeatures"],
        schema_fingerprint=payload["schemaFingerprint"],
        config=payload.get("config", {}),
        history=payload.get("history", []),
    )
    model.check()
    return model
