"""Character n-gram LangID: training, prediction, confusion statistics, paring.

The classifier is a linear softmax over hashed character n-gram counts. It is
deliberately simple: deterministic given a seed, fast enough to annotate a
crawl on one machine, and exposed behind the small `Predictor` interface so a
heavier model can be dropped in for the second-stage filtering.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateData, ModelFormatError, UnknownLanguage

MODEL_MAGIC = b"MMLI"
MODEL_VERSION = 1


@dataclass(frozen=True)
class FeatureSpec:
    """Which n-gram orders to extract and how to hash them."""

    ngram_orders: tuple[int, ...] = (1, 2, 3, 4)
    n_buckets: int = 1 << 20
    hash_seed: int = 0

    def __post_init__(self) -> None:
        orders = tuple(sorted(set(self.ngram_orders)))
        if not orders or any(n < 1 for n in orders):
            raise ValueError("ngram orders must be a non-empty set of ints >= 1")
        object.__setattr__(self, "ngram_orders", orders)
        if self.n_buckets < (1 << 10) or self.n_buckets & (self.n_buckets - 1):
            raise ValueError("n_buckets must be a power of two >= 2^10")


def extract_features(text: str, spec: FeatureSpec) -> dict[int, float]:
    """L1-normalized hashed character n-gram counts. Empty text -> {}."""
    seed = spec.hash_seed & 0xFFFFFFFF
    mask = spec.n_buckets - 1
    counts: dict[int, float] = {}
    for n in spec.ngram_orders:
        for i in range(len(text) - n + 1):
            bucket = zlib.crc32(text[i : i + n].encode("utf-8"), seed) & mask
            counts[bucket] = counts.get(bucket, 0.0) + 1.0
    total = sum(counts.values())
    if total:
        for k in counts:
            counts[k] /= total
    return counts


class Predictor(Protocol):
    """Anything that maps text to a (language, confidence) pair."""

    @property
    def languages(self) -> Sequence[str]: ...

    def predict(self, text: str) -> tuple[str, float]: ...


@dataclass(frozen=True, eq=False)
class LangIdModel:
    spec: FeatureSpec
    languages: tuple[str, ...]
    weights: np.ndarray  # [n_languages, n_buckets] float32
    bias: np.ndarray  # [n_languages] float32
    version: int = MODEL_VERSION

    def __post_init__(self) -> None:
        if len(set(self.languages)) != len(self.languages):
            raise ValueError("languages must be unique")
        if not np.all(np.isfinite(self.weights)) or not np.all(np.isfinite(self.bias)):
            raise ValueError("weights and bias must be finite")

    def predict(self, text: str) -> tuple[str, float]:
        return predict(self, text)

    def predict_batch(self, texts: Sequence[str]) -> list[tuple[str, float]]:
        return predict_batch(self, texts)


@dataclass
class TrainConfig:
    """Full-batch mode backtracks unstable steps, so a generous learning rate
    is safe there; mini-batch mode applies the rate as given."""

    epochs: int = 100
    learning_rate: float = 10.0
    seed: int = 0
    batch_size: Optional[int] = None  # None = full batch


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _feature_matrix(texts: Sequence[str], spec: FeatureSpec) -> sp.csr_matrix:
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    for text in texts:
        feats = extract_features(text, spec)
        for bucket in sorted(feats):
            indices.append(bucket)
            data.append(feats[bucket])
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(texts), spec.n_buckets),
    )


def train(
    labeled: Sequence[tuple[str, str]],
    spec: FeatureSpec,
    hyper: Optional[TrainConfig] = None,
    loss_history: Optional[list[float]] = None,
) -> LangIdModel:
    """Fit the softmax classifier by gradient descent.

    Weights start at zero, so with full-batch gradients the result depends
    only on the multiset of examples; to make that bit-exact we canonicalize
    the example order before building the design matrix. Mini-batch mode
    shuffles with the configured seed instead.
    """
    hyper = hyper or TrainConfig()
    langs = tuple(sorted({lang for _, lang in labeled}))
    if len(langs) < 2:
        raise DegenerateData("need at least two distinct languages")
    examples = list(labeled)
    if hyper.batch_size is None:
        examples.sort(key=lambda pair: (pair[1], pair[0]))
    lang_index = {lang: i for i, lang in enumerate(langs)}

    x = _feature_matrix([text for text, _ in examples], spec)
    y = np.asarray([lang_index[lang] for _, lang in examples], dtype=np.int64)
    n = len(examples)
    weights = np.zeros((len(langs), spec.n_buckets), dtype=np.float64)
    bias = np.zeros(len(langs), dtype=np.float64)
    rng = np.random.default_rng(hyper.seed)

    def mean_ce(w: np.ndarray, b: np.ndarray) -> float:
        probs = _softmax(x @ w.T + b)
        return float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))

    if hyper.batch_size is None:
        # Full batch: backtrack the step whenever it would raise the loss, so
        # the per-epoch cross-entropy is non-increasing for any learning rate.
        for _ in range(hyper.epochs):
            probs = _softmax(x @ weights.T + bias)
            loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
            if loss_history is not None:
                loss_history.append(loss)
            probs[np.arange(n), y] -= 1.0
            probs /= n
            grad_w = (x.T @ probs).T
            grad_b = probs.sum(axis=0)
            step = hyper.learning_rate
            while True:
                new_w = weights - step * grad_w
                new_b = bias - step * grad_b
                if mean_ce(new_w, new_b) <= loss or step < 1e-6:
                    break
                step /= 2.0
            weights, bias = new_w, new_b
    else:
        for _ in range(hyper.epochs):
            if loss_history is not None:
                loss_history.append(mean_ce(weights, bias))
            order = rng.permutation(n)
            for i in range(0, n, hyper.batch_size):
                batch = order[i : i + hyper.batch_size]
                xb = x[batch]
                probs = _softmax(xb @ weights.T + bias)
                probs[np.arange(len(batch)), y[batch]] -= 1.0
                probs /= len(batch)
                weights -= hyper.learning_rate * (xb.T @ probs).T
                bias -= hyper.learning_rate * probs.sum(axis=0)

    return LangIdModel(
        spec=spec,
        languages=langs,
        weights=weights.astype(np.float32),
        bias=bias.astype(np.float32),
    )


def predict_batch(model: LangIdModel, texts: Sequence[str]) -> list[tuple[str, float]]:
    """Predict every text; rows are independent, so sharding cannot change results."""
    x = _feature_matrix(texts, model.spec)
    scores = x @ model.weights.astype(np.float64).T + model.bias.astype(np.float64)
    probs = _softmax(scores)
    best = np.argmax(probs, axis=1)  # first max wins: earliest language breaks ties
    return [(model.languages[i], float(probs[row, i])) for row, i in enumerate(best)]


def predict(model: LangIdModel, text: str) -> tuple[str, float]:
    """Most likely language and its softmax probability.

    Empty text scores on the bias alone.
    """
    return predict_batch(model, [text])[0]


def cross_entropy(model: LangIdModel, labeled: Sequence[tuple[str, str]]) -> float:
    lang_index = {lang: i for i, lang in enumerate(model.languages)}
    x = _feature_matrix([text for text, _ in labeled], model.spec)
    y = np.asarray([lang_index[lang] for _, lang in labeled])
    probs = _softmax(x @ model.weights.astype(np.float64).T + model.bias.astype(np.float64))
    return float(-np.mean(np.log(probs[np.arange(len(labeled)), y] + 1e-300)))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """counts[true][predicted] over an evaluation set."""

    languages: tuple[str, ...]
    counts: np.ndarray  # [n, n] int64

    def __post_init__(self) -> None:
        n = len(self.languages)
        if self.counts.shape != (n, n):
            raise ValueError("counts must be square over the language list")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")

    def index(self, lang: str) -> int:
        try:
            return self.languages.index(lang)
        except ValueError:
            raise UnknownLanguage(lang) from None

    def row_sum(self, lang: str) -> int:
        return int(self.counts[self.index(lang)].sum())

    def col_sum(self, lang: str) -> int:
        return int(self.counts[:, self.index(lang)].sum())

    def precision(self, lang: str) -> float:
        i = self.index(lang)
        denom = self.counts[:, i].sum()
        return float(self.counts[i, i] / denom) if denom else 0.0

    def recall(self, lang: str) -> float:
        i = self.index(lang)
        denom = self.counts[i].sum()
        return float(self.counts[i, i] / denom) if denom else 0.0

    def fnr(self, lang: str) -> float:
        return 1.0 - self.recall(lang)

    def pairwise_fnr(self, lang: str, other: str) -> float:
        """Fraction of `lang` examples mis-predicted as `other`."""
        i, j = self.index(lang), self.index(other)
        denom = self.counts[i].sum()
        return float(self.counts[i, j] / denom) if denom else 0.0

    def fdr(self, distractor: str, lang: str) -> float:
        """Examples of `distractor` mis-predicted as `lang`, over true `lang` examples."""
        d, l = self.index(distractor), self.index(lang)
        denom = self.counts[l].sum()
        return float(self.counts[d, l] / denom) if denom else 0.0

    def to_dict(self) -> dict:
        return {"languages": list(self.languages), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "ConfusionMatrix":
        return cls(tuple(obj["languages"]), np.asarray(obj["counts"], dtype=np.int64))


def evaluate(model: LangIdModel, eval_set: Sequence[tuple[str, str]]) -> ConfusionMatrix:
    """Tally counts[true][predicted] over the eval set."""
    model_langs = set(model.languages)
    for _, lang in eval_set:
        if lang not in model_langs:
            raise UnknownLanguage(lang)
    index = {lang: i for i, lang in enumerate(model.languages)}
    counts = np.zeros((len(model.languages),) * 2, dtype=np.int64)
    predictions = predict_batch(model, [text for text, _ in eval_set])
    for (_, true_lang), (pred_lang, _) in zip(eval_set, predictions):
        counts[index[true_lang], index[pred_lang]] += 1
    return ConfusionMatrix(model.languages, counts)


@dataclass(frozen=True)
class RateResult:
    value: float
    zero_denominator: bool = False


def rates(cm: ConfusionMatrix, kind: str, lang: str, other: Optional[str] = None) -> RateResult:
    """One confusion-derived rate, with a flag instead of NaN on 0/0.

    fnr is 1 - recall even when the row is empty, so recall + fnr = 1 holds
    exactly; the flag still records that the denominator was zero.
    """
    i = cm.index(lang)
    if kind == "precision":
        denom = int(cm.counts[:, i].sum())
        return RateResult(cm.precision(lang), denom == 0)
    if kind == "recall":
        denom = int(cm.counts[i].sum())
        return RateResult(cm.recall(lang), denom == 0)
    if kind == "fnr":
        denom = int(cm.counts[i].sum())
        return RateResult(cm.fnr(lang), denom == 0)
    if kind == "fdr_pair":
        if other is None:
            raise ValueError("fdr_pair requires `other` (the distractor language)")
        denom = int(cm.counts[i].sum())
        return RateResult(cm.fdr(other, lang), denom == 0)
    raise ValueError(f"unknown rate kind: {kind!r}")


@dataclass(frozen=True)
class PareThresholds:
    min_precision: float = 0.33
    max_confusion: float = 0.50
    min_examples: int = 2000


@dataclass(frozen=True)
class PareEntry:
    lang: str
    precision: float
    max_confusion: float
    n_train: int
    dropped: bool
    reasons: tuple[str, ...]


@dataclass(frozen=True)
class ParingReport:
    entries: dict[str, PareEntry]

    @property
    def dropped(self) -> list[str]:
        return [lang for lang, e in self.entries.items() if e.dropped]

    def to_dict(self) -> dict:
        return {
            lang: {
                "precision": e.precision,
                "max_confusion": e.max_confusion,
                "n_train": e.n_train,
                "dropped": e.dropped,
                "reasons": list(e.reasons),
            }
            for lang, e in self.entries.items()
        }


def pare_languages(
    cm: ConfusionMatrix,
    train_sizes: dict[str, int],
    thresholds: Optional[PareThresholds] = None,
) -> ParingReport:
    """Flag languages whose LangID quality or data volume is too poor to crawl.

    Confusion with another language d is max(pairwise FNR toward d, FDR of d),
    and a language is flagged when the worst such value exceeds the threshold.
    """
    thr = thresholds or PareThresholds()
    missing = [lang for lang in cm.languages if lang not in train_sizes]
    if missing:
        raise UnknownLanguage(f"no train size for: {', '.join(missing)}")
    entries: dict[str, PareEntry] = {}
    for lang in cm.languages:
        precision = cm.precision(lang)
        confusions = [
            max(cm.pairwise_fnr(lang, other), cm.fdr(other, lang))
            for other in cm.languages
            if other != lang
        ]
        max_confusion = max(confusions, default=0.0)
        n_train = train_sizes[lang]
        reasons = []
        if precision < thr.min_precision:
            reasons.append("low_precision")
        if max_confusion > thr.max_confusion:
            reasons.append("high_confusion")
        if n_train < thr.min_examples:
            reasons.append("too_few_examples")
        entries[lang] = PareEntry(
            lang=lang,
            precision=precision,
            max_confusion=max_confusion,
            n_train=n_train,
            dropped=bool(reasons),
            reasons=tuple(reasons),
        )
    return ParingReport(entries)


def save_model(model: LangIdModel, path: str | Path) -> None:
    """Versioned flat binary: header, language list, f32 LE weights, f32 LE bias."""
    spec = model.spec
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", model.version))
        fh.write(struct.pack("<I", len(spec.ngram_orders)))
        for n in spec.ngram_orders:
            fh.write(struct.pack("<I", n))
        fh.write(struct.pack("<Q", spec.n_buckets))
        fh.write(struct.pack("<q", spec.hash_seed))
        fh.write(struct.pack("<I", len(model.languages)))
        for lang in model.languages:
            raw = lang.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(model.weights, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.bias, dtype="<f4").tobytes())


def load_model(path: str | Path) -> LangIdModel:
    with open(path, "rb") as fh:
        def read(n: int) -> bytes:
            buf = fh.read(n)
            if len(buf) != n:
                raise ModelFormatError("truncated model file")
            return buf

        if read(4) != MODEL_MAGIC:
            raise ModelFormatError("bad magic; not a LangID model file")
        (version,) = struct.unpack("<I", read(4))
        if version != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model version {version}")
        (n_orders,) = struct.unpack("<I", read(4))
        orders = tuple(struct.unpack("<I", read(4))[0] for _ in range(n_orders))
        (n_buckets,) = struct.unpack("<Q", read(8))
        (hash_seed,) = struct.unpack("<q", read(8))
        spec = FeatureSpec(ngram_orders=orders, n_buckets=n_buckets, hash_seed=hash_seed)
        (n_langs,) = struct.unpack("<I", read(4))
        languages = []
        for _ in range(n_langs):
            (length,) = struct.unpack("<H", read(2))
            languages.append(read(length).decode("utf-8"))
        weights = np.frombuffer(read(4 * n_langs * n_buckets), dtype="<f4").reshape(n_langs, n_buckets)
        bias = np.frombuffer(read(4 * n_langs), dtype="<f4")
        if fh.read(1):
            raise ModelFormatError("trailing bytes after model payload")
    return LangIdModel(spec=spec, languages=tuple(languages), weights=weights.copy(), bias=bias.copy())
