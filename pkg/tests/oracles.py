"""Independent reference computations used by the tests.

Nothing here calls the code under test except to read parameters: path
scores are summed by hand over explicit enumerations, and gradients are
central finite differences of a loss callback.
"""

import itertools

import numpy as np

FD_EPS = 1e-5
FD_TOL = 1e-4
# Below this magnitude a coordinate is compared absolutely (tolerance
# FD_TOL * FD_FLOOR = 1e-8). Central differences at eps = 1e-5 carry roundoff
# of about 1e-16 * |loss| / eps, i.e. ~1e-10 for these losses, so relative
# error on smaller coordinates measures the oracle's noise, not the gradient.
FD_FLOOR = 1e-4


def random_potentials(rng, n, K, scale=2.0):
    from mare.crf import Potentials
    return Potentials(rng.normal(0, scale, (n, K)), rng.normal(0, scale, (K, K)),
                      rng.normal(0, scale, K), rng.normal(0, scale, K))


def enumerate_paths(pot):
    """Yield (path, score) for all K**n paths, scores summed term by term."""
    n, K = pot.emissions.shape
    for path in itertools.product(range(K), repeat=n):
        s = pot.start[path[0]] + pot.end[path[-1]]
        for t, k in enumerate(path):
            s += pot.emissions[t, k]
        for a, b in zip(path, path[1:]):
            s += pot.transitions[a, b]
        yield path, float(s)


def all_paths(n, K):
    """Every tag path as a row of a [K**n, n] array, in lexicographic order."""
    return np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64).reshape(-1, n)


def all_path_scores(pot):
    n, K = pot.emissions.shape
    paths = all_paths(n, K)
    scores = pot.start[paths[:, 0]] + pot.end[paths[:, -1]]
    for t in range(n):
        scores = scores + pot.emissions[t, paths[:, t]]
    for t in range(n - 1):
        scores = scores + pot.transitions[paths[:, t], paths[:, t + 1]]
    return paths, scores


def brute_log_partition(pot):
    _, scores = all_path_scores(pot)
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()))


def brute_viterbi(pot):
    """Best path by exhaustive search (first maximum in lexicographic order;
    exact ties are exercised separately)."""
    paths, scores = all_path_scores(pot)
    best = int(np.argmax(scores))
    return paths[best].tolist(), float(scores[best])


def brute_marginals(pot):
    n, K = pot.emissions.shape
    paths, scores = all_path_scores(pot)
    weights = np.exp(scores - brute_log_partition(pot))
    out = np.zeros((n, K))
    for t in range(n):
        np.add.at(out[t], paths[:, t], weights)
    return out


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), FD_FLOOR)


def finite_difference_check(loss_fn, params, grads, coords=None, eps=FD_EPS):
    """Worst relative error between ``grads`` and central differences of ``loss_fn``.

    ``params`` and ``grads`` map names to arrays of equal shape; ``params``
    are perturbed in place and restored. ``coords`` optionally restricts
    the check to a list of (name, index) pairs.
    """
    if coords is None:
        coords = [(name, idx) for name, arr in params.items() for idx in np.ndindex(arr.shape)]
    worst = 0.0
    for name, idx in coords:
        arr = params[name]
        orig = arr[idx]
        arr[idx] = orig + eps
        up = loss_fn()
        arr[idx] = orig - eps
        down = loss_fn()
        arr[idx] = orig
        worst = max(worst, relative_error(grads[name][idx], (up - down) / (2 * eps)))
    return worst


def crf_gradient_case(rng, schema, n_tokens=None, vocab=None):
    """Random CRF model with weights on the features of a random document.

    Returns (worst relative error, number of coordinates checked).
    """
    from mare import crf

    vocab = vocab or ["A1", "closed", "at", "Köln", "Stau", "3km", "wegen", "Unfall", ",", "B7"]
    n = n_tokens or int(rng.integers(1, 7))
    tokens = [vocab[i] for i in rng.integers(0, len(vocab), n)]
    feats = crf.document_features(tokens)
    model = crf.CrfModel.zeros(schema, np.concatenate(feats))
    K = model.num_tags
    model.emission[:] = rng.normal(0, 0.5, model.emission.shape)
    model.transitions[:] = rng.normal(0, 0.5, (K, K))
    model.start[:] = rng.normal(0, 0.5, K)
    model.end[:] = rng.normal(0, 0.5, K)
    gold = rng.integers(0, K, n)
    _, grad = crf.nll_and_gradient(model, feats, gold)
    params = {"emission": model.emission, "transitions": model.transitions,
              "start": model.start, "end": model.end}
    grads = {"emission": grad.dense_emission(len(model.feature_ids)),
             "transitions": grad.transitions, "start": grad.start, "end": grad.end}

    def loss():
        return crf.nll_and_gradient(model, feats, gold)[0]

    worst = finite_difference_check(loss, params, grads)
    return worst, sum(a.size for a in params.values())


def span_gradient_case(rng, schema, endpoint_features=True, n_tokens=None):
    from mare import span

    vocab = ["a", "b", "c", "d", "e"]
    n = n_tokens or int(rng.integers(1, 7))
    tokens = tuple(vocab[i] for i in rng.integers(0, len(vocab), n))
    from mare.corpus import Document
    doc = Document("g", tokens)
    model = span.SpanModel.zeros(schema, vocab, dim=4, max_span_width=3,
                                 endpoint_features=endpoint_features)
    for arr in (model.embeddings, model.attention, model.head, model.bias):
        arr[:] = rng.normal(0, 0.7, arr.shape)
    spans = span.enumerate_spans(n, model.max_span_width)
    targets = (rng.random((len(spans), len(model.labels))) < 0.3).astype(float)
    _, grads = span.loss_and_gradient(model, doc, targets)
    params = {"embeddings": model.embeddings, "attention": model.attention,
              "head": model.head, "bias": model.bias}

    def loss():
        return span.loss_and_gradient(model, doc, targets)[0]

    worst = finite_difference_check(loss, params, grads)
    return worst, sum(a.size for a in params.values())
