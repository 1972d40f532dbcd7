"""Joint word/sentence/category embedding on the unit sphere.

All vectors are unit-norm and compared by dot product (directional
similarity).  Training maximizes

    L_inter + L_intra + L_gen

where the two hinge terms keep category directions mutually separated and
pull each category's seed keywords toward it:

    L_inter = sum_{i != j} min(0, 1 - a_i.a_j - m_inter)
    L_intra = sum_i sum_{w in keywords(i)} min(0, w.a_i - m_intra)

and L_gen is a negative-sampling objective over three positive-pair
processes: (sentence, assigned category), (word, its sentence), and
(word, context word within a window).  For a positive pair (u, v) and
frequency-sampled negative words v', the contribution is

    log sigmoid(u.v) + sum_{v'} log sigmoid(-u.v')

Every update is followed by re-projection onto the sphere.  Sentences are
assigned to their argmax-similarity category at the start of each epoch.
"""

import math
from dataclasses import dataclass

import numpy as np

from .corpus import CategorySchema, Sentence, Vocabulary

# Exponent flattening the unigram negative-sampling distribution.
_NEG_POWER = 0.75


class TrainingError(RuntimeError):
    pass


@dataclass
class EmbedConfig:
    dim: int = 100
    window: int = 5
    epochs: int = 20
    learning_rate: float = 0.025
    negatives_per_positive: int = 5
    rng_seed: int = 0
    m_inter: float = 0.7
    m_intra: float = 0.5

    def validate(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.m_intra < 1:
            raise ValueError("m_intra must be in (0, 1)")
        if not 0 < self.m_inter <= 2:
            raise ValueError("m_inter must be in (0, 2]")


@dataclass
class SphereSpace:
    dim: int
    words: list[str]
    sent_ids: list[str]
    cat_names: list[str]
    word_vecs: np.ndarray  # (n_words, dim)
    sent_vecs: np.ndarray  # (n_sents, dim)
    cat_vecs: np.ndarray  # (n_cats, dim)
    m_inter: float
    m_intra: float

    def __post_init__(self):
        self._word_ids = {w: i for i, w in enumerate(self.words)}
        self._sent_rows = {s: i for i, s in enumerate(self.sent_ids)}

    def word_id(self, word: str) -> int | None:
        return self._word_ids.get(word.casefold())

    def sent_row(self, sentence_id: str) -> int:
        row = self._sent_rows.get(sentence_id)
        if row is None:
            raise ValueError(f"unknown sentence id {sentence_id!r}")
        return row


@dataclass
class TrainStats:
    gen_loss: float  # negative-sampling loss (>= 0, minimized)
    inter_loss: float  # hinge value at epoch end (<= 0)
    intra_loss: float  # hinge value at epoch end (<= 0)
    n_pairs: int


def _random_unit(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def init_space(
    vocab: Vocabulary,
    schema: CategorySchema,
    config: EmbedConfig,
    sentence_ids: list[str],
) -> SphereSpace:
    """Seeded initialization: words/sentences uniform on the sphere, each
    category at the normalized mean of its seed-keyword vectors."""
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    words = [w for w, _ in vocab.words]
    word_vecs = _random_unit(rng, (len(words), config.dim))
    sent_vecs = _random_unit(rng, (len(sentence_ids), config.dim))
    cat_vecs = np.empty((len(schema.categories), config.dim))
    for ci, (name, keywords) in enumerate(schema.categories):
        ids = []
        for kw in keywords:
            wid = vocab.id_of(kw)
            if wid is None:
                raise ValueError(f"keyword {kw!r} of category {name!r} missing from vocabulary")
            ids.append(wid)
        mean = word_vecs[ids].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            raise ValueError(f"degenerate keyword mean for category {name!r}")
        cat_vecs[ci] = mean / norm
    return SphereSpace(
        config.dim,
        words,
        list(sentence_ids),
        schema.names,
        word_vecs,
        sent_vecs,
        cat_vecs,
        config.m_inter,
        config.m_intra,
    )


def _keyword_rows(space: SphereSpace, schema: CategorySchema) -> tuple[np.ndarray, np.ndarray]:
    """Flat (word_id, category_row) arrays over all seed keywords."""
    wids, crows = [], []
    for ci, (name, keywords) in enumerate(schema.categories):
        for kw in keywords:
            wid = space.word_id(kw)
            if wid is None:
                raise ValueError(f"keyword {kw!r} of category {name!r} missing from space")
            wids.append(wid)
            crows.append(ci)
    return np.asarray(wids, dtype=np.intp), np.asarray(crows, dtype=np.intp)


def _inter_value_grad(cat_vecs: np.ndarray, m_inter: float) -> tuple[float, np.ndarray]:
    gram = cat_vecs @ cat_vecs.T
    slack = 1.0 - gram - m_inter
    active = slack < 0.0
    np.fill_diagonal(active, False)
    if not active.any():
        return 0.0, np.zeros_like(cat_vecs)
    value = float(slack[active].sum())
    grad = -2.0 * (active.astype(cat_vecs.dtype) @ cat_vecs)
    return value, grad


def loss_inter(space: SphereSpace) -> float:
    """Hinge penalty for category pairs closer than the inter margin; <= 0."""
    if len(space.cat_names) < 2:
        raise ValueError("need at least 2 categories")
    return _inter_value_grad(space.cat_vecs, space.m_inter)[0]


def _intra_value_grad(
    cat_vecs: np.ndarray,
    word_vecs: np.ndarray,
    kw_ids: np.ndarray,
    kw_cats: np.ndarray,
    m_intra: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Returns (value, grad wrt the kw word rows, grad wrt cat_vecs)."""
    kw_vecs = word_vecs[kw_ids]
    anchors = cat_vecs[kw_cats]
    dots = np.einsum("kd,kd->k", kw_vecs, anchors)
    slack = dots - m_intra
    active = slack < 0.0
    cat_grad = np.zeros_like(cat_vecs)
    if not active.any():
        return 0.0, np.zeros_like(kw_vecs), cat_grad
    value = float(slack[active].sum())
    word_grad = np.where(active[:, None], anchors, 0.0)
    np.add.at(cat_grad, kw_cats[active], kw_vecs[active])
    return value, word_grad, cat_grad


def loss_intra(space: SphereSpace, schema: CategorySchema) -> float:
    """Hinge penalty for keywords farther than the intra margin from their
    category; <= 0."""
    kw_ids, kw_cats = _keyword_rows(space, schema)
    return _intra_value_grad(space.cat_vecs, space.word_vecs, kw_ids, kw_cats, space.m_intra)[0]


@dataclass
class _PairBatch:
    """One sentence's positive pairs plus pre-sampled negative word ids.

    Pair order along axis 0: word-context pairs, then word-sentence pairs,
    then the single sentence-category pair.  negs has shape (P, K).
    """

    ww_u: np.ndarray
    ww_v: np.ndarray
    wx_u: np.ndarray
    sent_row: int
    cat_row: int
    negs: np.ndarray


def _pair_value_grads(word_vecs, sent_vec, cat_vec, batch: _PairBatch):
    """Value and gradients of the negative-sampling objective for one batch.

    Returns (value, word_idx, word_grads, d_sent, d_cat) with word gradients
    as parallel (index, row) arrays for scatter-accumulation.
    """
    nw, nx = len(batch.ww_u), len(batch.wx_u)
    p = nw + nx + 1
    dim = word_vecs.shape[1]
    u = np.empty((p, dim))
    v = np.empty((p, dim))
    u[:nw] = word_vecs[batch.ww_u]
    u[nw : nw + nx] = word_vecs[batch.wx_u]
    u[-1] = sent_vec
    v[:nw] = word_vecs[batch.ww_v]
    v[nw : nw + nx] = sent_vec
    v[-1] = cat_vec
    neg = word_vecs[batch.negs]  # (P, K, dim)

    s_pos = np.einsum("pd,pd->p", u, v)
    s_neg = np.einsum("pd,pkd->pk", u, neg)
    value = float(-np.sum(np.logaddexp(0.0, -s_pos)) - np.sum(np.logaddexp(0.0, s_neg)))

    sig_pos = 1.0 / (1.0 + np.exp(-s_pos))
    sig_neg = 1.0 / (1.0 + np.exp(-s_neg))
    grad_u = (1.0 - sig_pos)[:, None] * v - np.einsum("pk,pkd->pd", sig_neg, neg)
    grad_v = (1.0 - sig_pos)[:, None] * u
    grad_neg = -sig_neg[..., None] * u[:, None, :]

    word_idx = np.concatenate([batch.ww_u, batch.ww_v, batch.wx_u, batch.negs.ravel()])
    word_grads = np.concatenate(
        [grad_u[:nw], grad_v[:nw], grad_u[nw : nw + nx], grad_neg.reshape(-1, dim)]
    )
    d_sent = grad_v[nw : nw + nx].sum(axis=0) + grad_u[-1]
    d_cat = grad_v[-1]
    return value, word_idx, word_grads, d_sent, d_cat


_WINDOW_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _window_pairs(n: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    got = _WINDOW_CACHE.get((n, h))
    if got is None:
        ci, cj = [], []
        for i in range(n):
            for j in range(max(0, i - h), min(n, i + h + 1)):
                if j != i:
                    ci.append(i)
                    cj.append(j)
        got = (np.asarray(ci, dtype=np.intp), np.asarray(cj, dtype=np.intp))
        _WINDOW_CACHE[(n, h)] = got
    return got


def _renorm_rows(table: np.ndarray, rows: np.ndarray | None = None) -> None:
    sub = table if rows is None else table[rows]
    norms = np.sqrt(np.einsum("ij,ij->i", sub, sub))[:, None]
    if np.any(norms < 1e-12):
        raise TrainingError("vector collapsed to zero norm")
    if rows is None:
        table /= norms
    else:
        table[rows] = sub / norms


def check_norms(space: SphereSpace, tol: float = 1e-6) -> float:
    """Max |norm - 1| over all stored vectors; raises if above tol."""
    worst = 0.0
    for table in (space.word_vecs, space.sent_vecs, space.cat_vecs):
        if len(table):
            dev = float(np.max(np.abs(np.linalg.norm(table, axis=1) - 1.0)))
            worst = max(worst, dev)
    if worst > tol:
        raise TrainingError(f"unit-norm invariant violated: max deviation {worst:.3g}")
    return worst


class SphereTrainer:
    """SGD trainer; one optimizer step = one sentence's pairs + margin terms.

    Deterministic given the config seed: sentences are visited in corpus
    order and all sampling comes from a single generator.
    """

    def __init__(
        self,
        space: SphereSpace,
        corpus: list[Sentence],
        schema: CategorySchema,
        config: EmbedConfig,
        rng: np.random.Generator | None = None,
    ):
        config.validate()
        if not corpus:
            raise TrainingError("corpus is empty")
        self.space = space
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
        self._kw_ids, self._kw_cats = _keyword_rows(space, schema)

        self._sent_tokens: list[np.ndarray] = []
        self._sent_rows: list[int] = []
        counts = np.zeros(len(space.words))
        for sent in corpus:
            ids = [space.word_id(t.surface) for t in sent.tokens]
            ids = np.asarray([i for i in ids if i is not None], dtype=np.intp)
            if len(ids):
                np.add.at(counts, ids, 1.0)
            self._sent_tokens.append(ids)
            self._sent_rows.append(space.sent_row(sent.id))
        self._sent_labels = [s.id for s in corpus]
        total = counts.sum()
        if total == 0:
            raise TrainingError("no in-vocabulary tokens in corpus")
        probs = counts**_NEG_POWER
        self._neg_cum = np.cumsum(probs / probs.sum())
        self._neg_cum[-1] = 1.0

    def _sample_negatives(self, n_pairs: int) -> np.ndarray:
        k = self.config.negatives_per_positive
        r = self.rng.random((n_pairs, k))
        ids = np.searchsorted(self._neg_cum, r)
        return np.minimum(ids, len(self.space.words) - 1)

    def _build_batch(self, tok_ids: np.ndarray, sent_row: int, cat_row: int) -> _PairBatch:
        n = len(tok_ids)
        if n:
            ci, cj = _window_pairs(n, self.config.window)
            ww_u, ww_v = tok_ids[ci], tok_ids[cj]
        else:
            ww_u = ww_v = np.empty(0, dtype=np.intp)
        negs = self._sample_negatives(len(ww_u) + n + 1)
        return _PairBatch(ww_u, ww_v, tok_ids, sent_row, cat_row, negs)

    def _step(self, batch: _PairBatch, label: str, norm_check: bool) -> float:
        space, lr = self.space, self.config.learning_rate
        value, widx, wgrads, d_sent, d_cat = _pair_value_grads(
            space.word_vecs, space.sent_vecs[batch.sent_row], space.cat_vecs[batch.cat_row], batch
        )
        inter_v, d_cats = _inter_value_grad(space.cat_vecs, space.m_inter)
        intra_v, kw_grads, intra_cat_grad = _intra_value_grad(
            space.cat_vecs, space.word_vecs, self._kw_ids, self._kw_cats, space.m_intra
        )
        total = value + inter_v + intra_v
        if not math.isfinite(total):
            raise TrainingError(f"non-finite loss at sentence {label!r}")

        all_idx = np.concatenate([widx, self._kw_ids])
        all_grads = np.concatenate([wgrads, kw_grads])
        # sort + segment-sum (much faster than np.add.at for these sizes)
        order = np.argsort(all_idx, kind="stable")
        sorted_idx = all_idx[order]
        is_start = np.empty(len(sorted_idx), dtype=bool)
        is_start[0] = True
        np.not_equal(sorted_idx[1:], sorted_idx[:-1], out=is_start[1:])
        starts = np.flatnonzero(is_start)
        uniq = sorted_idx[starts]
        acc = np.add.reduceat(all_grads[order], starts, axis=0)
        space.word_vecs[uniq] += lr * acc
        _renorm_rows(space.word_vecs, uniq)

        space.sent_vecs[batch.sent_row] += lr * d_sent
        _renorm_rows(space.sent_vecs, np.asarray([batch.sent_row]))

        d_cats += intra_cat_grad
        d_cats[batch.cat_row] += d_cat
        space.cat_vecs += lr * d_cats
        _renorm_rows(space.cat_vecs)

        if norm_check:
            for table, rows in (
                (space.word_vecs, uniq),
                (space.sent_vecs, np.asarray([batch.sent_row])),
                (space.cat_vecs, None),
            ):
                sub = table if rows is None else table[rows]
                dev = np.max(np.abs(np.linalg.norm(sub, axis=1) - 1.0))
                if not np.isfinite(dev) or dev > 1e-6:
                    raise TrainingError(f"norm deviation {dev:.3g} after step at {label!r}")
        return value

    def train_epoch(self, norm_check: bool = False) -> TrainStats:
        space = self.space
        assigned = np.argmax(space.sent_vecs @ space.cat_vecs.T, axis=1)
        gen_value = 0.0
        n_pairs = 0
        for tok_ids, row, label in zip(self._sent_tokens, self._sent_rows, self._sent_labels):
            batch = self._build_batch(tok_ids, row, int(assigned[row]))
            gen_value += self._step(batch, label, norm_check)
            n_pairs += len(batch.negs)
        inter_v, _ = _inter_value_grad(space.cat_vecs, space.m_inter)
        intra_v, _, _ = _intra_value_grad(
            space.cat_vecs, space.word_vecs, self._kw_ids, self._kw_cats, space.m_intra
        )
        return TrainStats(-gen_value, inter_v, intra_v, n_pairs)

    def run(self, epochs: int | None = None, norm_check: bool = False) -> list[TrainStats]:
        n = self.config.epochs if epochs is None else epochs
        return [self.train_epoch(norm_check=norm_check) for _ in range(n)]


def train_epoch(
    space: SphereSpace,
    corpus: list[Sentence],
    schema: CategorySchema,
    config: EmbedConfig,
    rng: np.random.Generator | None = None,
) -> TrainStats:
    """One SGD pass over the corpus.  Multi-epoch runs should reuse a
    SphereTrainer so negative sampling does not restart from the seed."""
    return SphereTrainer(space, corpus, schema, config, rng=rng).train_epoch()


def sentence_scores(space: SphereSpace, sentence_id: str) -> np.ndarray:
    """Dot products of the sentence vector with every category, schema order."""
    return space.sent_vecs[space.sent_row(sentence_id)] @ space.cat_vecs.T


def phrase_similarity(space: SphereSpace, words: list[str]) -> np.ndarray:
    """Mean of in-vocabulary word vectors (not renormalized) dotted with each
    category.  Raises if no word is in the vocabulary."""
    ids = [space.word_id(w) for w in words]
    ids = [i for i in ids if i is not None]
    if not ids:
        raise ValueError(f"no in-vocabulary token in phrase {' '.join(words)!r}")
    mean = space.word_vecs[ids].mean(axis=0)
    return mean @ space.cat_vecs.T


def save_space(space: SphereSpace, path) -> None:
    """Text format: header `dim n_words n_sents n_cats m_inter m_intra`, then
    one `kind id v1 .. v_dim` row per vector (kind in word/sent/cat)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(
            f"{space.dim} {len(space.words)} {len(space.sent_ids)} "
            f"{len(space.cat_names)} {space.m_inter!r} {space.m_intra!r}\n"
        )
        for kind, ids, table in (
            ("word", space.words, space.word_vecs),
            ("sent", space.sent_ids, space.sent_vecs),
            ("cat", space.cat_names, space.cat_vecs),
        ):
            for name, vec in zip(ids, table):
                if any(c.isspace() for c in name):
                    raise ValueError(f"{kind} id {name!r} contains whitespace")
                f.write(f"{kind} {name} " + " ".join(repr(float(x)) for x in vec) + "\n")


def load_space(path) -> SphereSpace:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        dim, n_words, n_sents, n_cats = (int(x) for x in header[:4])
        m_inter, m_intra = float(header[4]), float(header[5])
        names: dict[str, list[str]] = {"word": [], "sent": [], "cat": []}
        rows: dict[str, list[np.ndarray]] = {"word": [], "sent": [], "cat": []}
        for line in f:
            parts = line.split()
            if not parts:
                continue
            kind, name = parts[0], parts[1]
            vec = np.asarray([float(x) for x in parts[2:]])
            if kind not in names or len(vec) != dim:
                raise ValueError(f"{path}: bad row for {name!r}")
            names[kind].append(name)
            rows[kind].append(vec)
    if (len(names["word"]), len(names["sent"]), len(names["cat"])) != (n_words, n_sents, n_cats):
        raise ValueError(f"{path}: row counts disagree with header")

    def stack(kind):
        return np.vstack(rows[kind]) if rows[kind] else np.empty((0, dim))

    return SphereSpace(
        dim,
        names["word"],
        names["sent"],
        names["cat"],
        stack("word"),
        stack("sent"),
        stack("cat"),
        m_inter,
        m_intra,
    )
