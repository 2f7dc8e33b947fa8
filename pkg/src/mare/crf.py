"""Linear-chain CRF tagger over hashed sparse token features.

Emission scores are a linear function of hashed feature indicators; the
CRF adds tag-transition, start and end scores. Training minimizes the
negative log-likelihood with AdamW.
"""

from __future__ import annotations

import logging
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from mare.artifact import pack_array, read_artifact, unpack_array, write_artifact
from mare.corpus import Document, Schema
from mare.errors import ConfigError
from mare.optim import AdamW
from mare.tagscheme import Tag, encode, tag_set

logger = logging.getLogger(__name__)

HASH_BITS = 20
BOUNDARY = "<pad>"
ARTIFACT_FORMAT = "mare-crf"
ARTIFACT_VERSION = 1


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

def word_shape(token: str) -> str:
    out = []
    for ch in token:
        if ch.isupper():
            c = "X"
        elif ch.islower():
            c = "x"
        elif ch.isdigit():
            c = "d"
        else:
            c = ch
        if not out or out[-1] != c:
            out.append(c)
    return "".join(out)


def _tok(tokens: Sequence[str], i: int) -> str:
    return tokens[i].lower() if 0 <= i < len(tokens) else BOUNDARY


def feature_strings(tokens: Sequence[str], position: int) -> list[str]:
    """Feature template instances for one token position."""
    if not 0 <= position < len(tokens):
        raise IndexError(position)
    word = tokens[position]
    low = word.lower()
    feats = ["bias", f"w={low}", f"shape={word_shape(word)}", f"digit={word.isdigit()}"]
    for k in (1, 2, 3):
        feats.append(f"pre{k}={low[:k]}")
        feats.append(f"suf{k}={low[-k:]}")
    for off in (-2, -1, 1, 2):
        feats.append(f"w[{off:+d}]={_tok(tokens, position + off)}")
    feats.append(f"bi[-1]={_tok(tokens, position - 1)}|{low}")
    feats.append(f"bi[+1]={low}|{_tok(tokens, position + 1)}")
    return feats


def hash_feature(name: str, hash_bits: int = HASH_BITS) -> int:
    return zlib.crc32(name.encode("utf-8")) & ((1 << hash_bits) - 1)


def extract_features(tokens: Sequence[str], position: int, hash_bits: int = HASH_BITS) -> np.ndarray:
    """Sorted unique hashed feature ids for ``tokens[position]``."""
    ids = {hash_feature(f, hash_bits) for f in feature_strings(tokens, position)}
    return np.array(sorted(ids), dtype=np.int64)


def document_features(tokens: Sequence[str], hash_bits: int = HASH_BITS) -> list[np.ndarray]:
    return [extract_features(tokens, i, hash_bits) for i in range(len(tokens))]


# ---------------------------------------------------------------------------
# Linear-chain dynamic programs
# ---------------------------------------------------------------------------

@dataclass
class Potentials:
    emissions: np.ndarray    # [n, K]
    transitions: np.ndarray  # [K, K], from -> to
    start: np.ndarray        # [K]
    end: np.ndarray          # [K]

    @property
    def shape(self) -> tuple[int, int]:
        return self.emissions.shape


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def path_score(pot: Potentials, path: Sequence[int]) -> float:
    path = np.asarray(path)
    score = pot.start[path[0]] + pot.end[path[-1]]
    score += pot.emissions[np.arange(len(path)), path].sum()
    score += pot.transitions[path[:-1], path[1:]].sum()
    return float(score)


def forward_scores(pot: Potentials) -> np.ndarray:
    """alpha[t, k]: log-sum of scores of prefixes ending at tag k."""
    n, K = pot.shape
    alpha = np.empty((n, K))
    alpha[0] = pot.start + pot.emissions[0]
    for t in range(1, n):
        alpha[t] = _lse(alpha[t - 1][:, None] + pot.transitions, axis=0) + pot.emissions[t]
    return alpha


def backward_scores(pot: Potentials) -> np.ndarray:
    """beta[t, k]: log-sum of scores of suffixes after tag k at t (end included)."""
    n, K = pot.shape
    beta = np.empty((n, K))
    beta[-1] = pot.end
    for t in range(n - 2, -1, -1):
        beta[t] = _lse(pot.transitions + (pot.emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def forward_log_partition(pot: Potentials) -> float:
    if pot.shape[0] < 1:
        raise ValueError("need at least one position")
    alpha = forward_scores(pot)
    return float(_lse(alpha[-1] + pot.end, axis=0))


def marginals(pot: Potentials) -> tuple[np.ndarray, np.ndarray, float]:
    """Unary marginals [n, K], summed pairwise marginals [K, K] and log Z."""
    alpha = forward_scores(pot)
    beta = backward_scores(pot)
    log_z = float(_lse(alpha[-1] + pot.end, axis=0))
    unary = np.exp(alpha + beta - log_z)
    if pot.shape[0] > 1:
        pair = (alpha[:-1, :, None] + pot.transitions[None]
                + (pot.emissions[1:] + beta[1:])[:, None, :])
        pairwise = np.exp(pair - log_z).sum(axis=0)
    else:
        pairwise = np.zeros_like(pot.transitions)
    return unary, pairwise, log_z


def viterbi(pot: Potentials) -> tuple[list[int], float]:
    """Highest-scoring tag path; ties go to the lowest tag index while backtracking."""
    n, K = pot.shape
    if n < 1:
        raise ValueError("need at least one position")
    delta = pot.start + pot.emissions[0]
    back = np.zeros((n, K), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + pot.transitions
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(K)] + pot.emissions[t]
    final = delta + pot.end
    last = int(np.argmax(final))
    path = [last]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path, float(final[last])


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    batch_size: int = 6
    epochs: int = 10
    seed: int = 0
    hash_bits: int = HASH_BITS

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not 1 <= self.hash_bits <= 32:
            raise ConfigError("hash_bits must be in [1, 32]")


@dataclass
class CrfModel:
    """CRF weights.

    Emission weights are stored only for feature ids seen in training
    (``feature_ids``, sorted); every other row of the ``2**hash_bits x K``
    emission matrix is identically zero.
    """

    tags: tuple[str, ...]
    feature_ids: np.ndarray
    emission: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    end: np.ndarray
    schema_fingerprint: str
    hash_bits: int = HASH_BITS
    config: dict = field(default_factory=dict)
    history: list[float] = field(default_factory=list)

    @property
    def num_tags(self) -> int:
        return len(self.tags)

    @classmethod
    def zeros(cls, schema: Schema, feature_ids=(), hash_bits: int = HASH_BITS) -> CrfModel:
        tags = tuple(str(t) for t in tag_set(schema))
        K = len(tags)
        ids = np.unique(np.asarray(feature_ids, dtype=np.int64))
        return cls(tags, ids, np.zeros((len(ids), K)), np.zeros((K, K)), np.zeros(K),
                   np.zeros(K), schema.fingerprint(), hash_bits)

    def check(self) -> None:
        K = self.num_tags
        if (self.emission.shape != (len(self.feature_ids), K) or self.transitions.shape != (K, K)
                or self.start.shape != (K,) or self.end.shape != (K,)):
            raise ConfigError(
                f"weight shapes inconsistent with {K} tags: emission {self.emission.shape}, "
                f"transitions {self.transitions.shape}")

    def rows(self, features: np.ndarray) -> np.ndarray:
        """Map hashed ids to emission rows, dropping ids never seen in training."""
        features = np.asarray(features, dtype=np.int64)
        if features.size and (features.min() < 0 or features.max() >= (1 << self.hash_bits)):
            raise ConfigError(f"feature id outside hash space of {self.hash_bits} bits")
        pos = np.searchsorted(self.feature_ids, features)
        pos = np.minimum(pos, max(len(self.feature_ids) - 1, 0))
        if not len(self.feature_ids):
            return np.zeros(0, dtype=np.int64)
        return pos[self.feature_ids[pos] == features]


def score_potentials(model: CrfModel, features: Sequence[np.ndarray]) -> Potentials:
    model.check()
    n, K = len(features), model.num_tags
    emissions = np.zeros((n, K))
    for t, feats in enumerate(features):
        rows = model.rows(feats)
        if rows.size:
            emissions[t] = model.emission[rows].sum(axis=0)
    return Potentials(emissions, model.transitions, model.start, model.end)


@dataclass
class _Example:
    rows: np.ndarray          # unique emission rows touched by this example
    design: sparse.csr_matrix  # [n, len(rows)] feature indicators
    gold: np.ndarray          # [n] tag indices


def _prepare(model: CrfModel, features: Sequence[np.ndarray], gold: Sequence[int]) -> _Example:
    tok_idx, row_idx = [], []
    for t, feats in enumerate(features):
        rows = model.rows(feats)
        tok_idx.append(np.full(len(rows), t, dtype=np.int64))
        row_idx.append(rows)
    tok_idx = np.concatenate(tok_idx) if tok_idx else np.zeros(0, dtype=np.int64)
    row_idx = np.concatenate(row_idx) if row_idx else np.zeros(0, dtype=np.int64)
    uniq, inv = np.unique(row_idx, return_inverse=True)
    design = sparse.csr_matrix((np.ones(len(inv)), (tok_idx, inv)), shape=(len(features), len(uniq)))
    return _Example(uniq, design, np.asarray(gold, dtype=np.int64))


@dataclass
class CrfGradient:
    rows: np.ndarray       # emission rows with non-zero gradient
    emission: np.ndarray   # [len(rows), K]
    transitions: np.ndarray
    start: np.ndarray
    end: np.ndarray

    def dense_emission(self, num_rows: int) -> np.ndarray:
        out = np.zeros((num_rows, self.emission.shape[1]))
        out[self.rows] = self.emission
        return out


def _nll(params: dict[str, np.ndarray], ex: _Example) -> tuple[float, CrfGradient]:
    W = params["emission"][ex.rows]
    emissions = np.asarray(ex.design @ W)
    pot = Potentials(emissions, params["transitions"], params["start"], params["end"])
    unary, pairwise, log_z = marginals(pot)
    gold = ex.gold
    n, K = emissions.shape
    loss = log_z - path_score(pot, gold)

    onehot = np.zeros((n, K))
    onehot[np.arange(n), gold] = 1.0
    diff = unary - onehot
    g_emission = np.asarray(ex.design.T @ diff)
    g_trans = pairwise.copy()
    np.add.at(g_trans, (gold[:-1], gold[1:]), -1.0)
    g_start = unary[0].copy()
    g_start[gold[0]] -= 1.0
    g_end = unary[-1].copy()
    g_end[gold[-1]] -= 1.0
    return loss, CrfGradient(ex.rows, g_emission, g_trans, g_start, g_end)


def _params(model: CrfModel) -> dict[str, np.ndarray]:
    return {"emission": model.emission, "transitions": model.transitions,
            "start": model.start, "end": model.end}


def nll_and_gradient(model: CrfModel, features: Sequence[np.ndarray],
                     gold: Sequence[int]) -> tuple[float, CrfGradient]:
    """Negative log-likelihood of ``gold`` and its gradient (expected minus observed counts)."""
    model.check()
    gold = np.asarray(gold, dtype=np.int64)
    if len(gold) != len(features) or len(gold) == 0:
        raise ValueError("gold path must have one tag per token")
    if gold.min() < 0 or gold.max() >= model.num_tags:
        raise ValueError("gold tag index outside the tag set")
    return _nll(_params(model), _prepare(model, features, gold))


# ---------------------------------------------------------------------------
# Training and prediction
# ---------------------------------------------------------------------------

def gold_tag_indices(doc: Document, schema: Schema) -> np.ndarray:
    tags, _ = encode(doc, schema)
    index = {t: i for i, t in enumerate(tag_set(schema))}
    return np.array([index[t] for t in tags], dtype=np.int64)


def train(corpus: Sequence[Document], schema: Schema, config: TrainConfig | None = None,
          on_epoch: Callable[[int, float], None] | None = None) -> CrfModel:
    config = config or TrainConfig()
    if not corpus:
        raise ConfigError("cannot train on an empty corpus")
    index = {t: i for i, t in enumerate(tag_set(schema))}

    features, golds, dropped = [], [], 0
    for doc in corpus:
        tags, report = encode(doc, schema)
        dropped += len(report.dropped)
        golds.append(np.array([index[t] for t in tags], dtype=np.int64))
        features.append(document_features(doc.tokens, config.hash_bits))
    if dropped:
        logger.info("%d overlapping gold attributes dropped from tagging targets", dropped)

    all_ids = np.concatenate([f for doc in features for f in doc])
    model = CrfModel.zeros(schema, all_ids, config.hash_bits)
    model.config = asdict(config)
    examples = [_prepare(model, f, g) for f, g in zip(features, golds)]

    params = _params(model)
    opt = AdamW(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(examples))
        total = 0.0
        for b in range(0, len(order), config.batch_size):
            batch = order[b:b + config.batch_size]
            for g in grads.values():
                g.fill(0.0)
            for i in batch:
                loss, grad = _nll(params, examples[i])
                total += loss
                grads["emission"][grad.rows] += grad.emission
                grads["transitions"] += grad.transitions
                grads["start"] += grad.start
                grads["end"] += grad.end
            for g in grads.values():
                g /= len(batch)
            opt.step(grads)
        mean = total / len(examples)
        model.history.append(mean)
        logger.info("epoch %d: loss %.4f (%.1fs)", epoch + 1, mean, time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(epoch + 1, mean)
    return model


def check_schema(model, schema: Schema) -> None:
    if schema is not None and model.schema_fingerprint != schema.fingerprint():
        raise ConfigError(
            f"model was trained for schema {model.schema_fingerprint}, "
            f"got schema {schema.fingerprint()}")


def predict_indices(model: CrfModel, doc: Document) -> list[int]:
    pot = score_potentials(model, document_features(doc.tokens, model.hash_bits))
    path, _ = viterbi(pot)
    return path


def predict(model: CrfModel, doc: Document, schema: Schema | None = None) -> list[Tag]:
    check_schema(model, schema)
    return [Tag.parse(model.tags[i]) for i in predict_indices(model, doc)]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_model(model: CrfModel, path: str | Path) -> None:
    write_artifact({
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "schemaFingerprint": model.schema_fingerprint,
        "tags": list(model.tags),
        "hashBits": model.hash_bits,
        "featureIds": pack_array(model.feature_ids),
        "emission": pack_array(model.emission),
        "transitions": pack_array(model.transitions),
        "start": pack_array(model.start),
        "end": pack_array(model.end),
        "config": model.config,
        "history": model.history,
    }, path)


def load_model(path: str | Path) -> CrfModel:
    payload = read_artifact(path, ARTIFACT_FORMAT)
    if payload.get("version") != ARTIFACT_VERSION:
        raise ConfigError(f"{path}: unsupported model version {payload.get('version')}")
    model = CrfModel(
        tags=tuple(payload["tags"]),
        feature_ids=unpack_array(payload["featureIds"]),
        emission=unpack_array(payload["emission"]),
        transitions=unpack_array(payload["transitions"]),
        start=unpack_array(payload["start"]),
        end=unpack_array(payload["end"]),
        schema_fingerprint=payload["schemaFingerprint"],
        hash_bits=payload["hashBits"],
        config=payload.get("config", {}),
        history=payload.get("history", []),
    )
    model.check()
    return model
