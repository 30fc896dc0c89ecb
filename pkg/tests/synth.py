"""Synthetic languages with disjoint alphabets, shared across tests.

Each language owns eight letters and a fixed Zipf-ish vocabulary, so LangID
can learn them quickly and generator labels double as ground truth.
"""

from __future__ import annotations

import random

ALPHABETS = {
    "aa": "abcdefgh",
    "bb": "ijklmnop",
    "cc": "qrstuvwx",
    "dd": "αβγδεζηθ",
    "ee": "абвгдежз",
    "en": "ικλμνξοπ",
}


class SynthLang:
    def __init__(self, lang: str, alphabet: str, vocab_size: int = 60, seed: int = 0):
        rng = random.Random(f"{lang}:{seed}")
        self.lang = lang
        self.alphabet = alphabet
        vocab: set[str] = set()
        while len(vocab) < vocab_size:
            length = rng.randint(3, 7)
            vocab.add("".join(rng.choice(alphabet) for _ in range(length)))
        self.vocab = sorted(vocab)
        self.weights = [1.0 / (i + 1) for i in range(len(self.vocab))]

    def sentence(self, rng: random.Random, n_words: int | None = None) -> str:
        n = n_words if n_words is not None else rng.randint(5, 11)
        return " ".join(rng.choices(self.vocab, weights=self.weights, k=n))

    def unique_token(self, counter: int) -> str:
        """Deterministic in-alphabet token encoding `counter` (base 8)."""
        digits = []
        counter += 1
        while counter:
            digits.append(self.alphabet[counter % 8])
            counter //= 8
        return "".join(digits)


def make_langs(names=("aa", "bb", "cc", "dd", "ee", "en"), seed: int = 0) -> dict[str, SynthLang]:
    return {name: SynthLang(name, ALPHABETS[name], seed=seed) for name in names}


def labeled_examples(langs: dict[str, SynthLang], per_lang: int, seed: int) -> list[tuple[str, str]]:
    rng = random.Random(seed)
    out = []
    for name in sorted(langs):
        for _ in range(per_lang):
            out.append((langs[name].sentence(rng), name))
    return out
