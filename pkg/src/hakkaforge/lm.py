"""Character n-gram language models with absolute discounting.

Counts above the unigram level lose a fixed discount D per seen n-gram
type; the freed mass backs off to the next lower order.  The unigram
distribution inside a higher-order model is the plain relative frequency
of the training tokens.  A standalone unigram model discounts into a
uniform floor over the vocabulary plus an unknown-token symbol, so no
query is ever impossible.

Scoring conditions each token on a sentence-start padded context and
sums log probabilities; a query never diverges because each conditional
is clipped below by a small floor.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

from .model import ForgeError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

_SAVE_MAGIC = "hakkaforge-ngram v1"


class LMError(ForgeError):
    pass


class NGramLM:
    """Backoff n-gram model over string tokens."""

    def __init__(self, order: int, discount: float, counts: dict):
        # counts: {k: {context tuple: {token: count}}} for k in 1..order,
        # unigram context is the empty tuple.
        self.order = order
        self.discount = discount
        self._counts = counts
        self._totals = {}
        self._types = {}
        for k, table in counts.items():
            self._totals[k] = {ctx: sum(c.values()) for ctx, c in table.items()}
            self._types[k] = {ctx: len(c) for ctx, c in table.items()}
        observed = set(counts.get(1, {}).get((), {}))
        self.vocabulary = frozenset(observed | {UNK})
        # The discount applies from the bigram level up.  A standalone
        # unigram model is the top level, so it discounts too; inside a
        # larger model the unigram backoff stays at the raw frequencies
        # (this is what makes D=0 reduce to exact maximum likelihood).
        self._discounts = {k: discount for k in range(2, order + 1)}
        self._discounts[1] = discount if order == 1 else 0.0

    @property
    def score_floor(self) -> float:
        return 1.0 / (10.0 * len(self.vocabulary))

    def contexts(self, k: int):
        return self._counts.get(k, {}).keys()

    def prob(self, token: str, context=()) -> float:
        """P(token | context) under the model.

        Tokens outside the vocabulary get whatever mass the floor terms
        leave them (zero in most models); use logprob for scoring, which
        applies the safety floor.
        """
        return self._prob_k(self.order, tuple(context), token)

    def _prob_k(self, k: int, context: tuple, token: str) -> float:
        if k == 1:
            table = self._counts[1].get((), {})
            n = self._totals[1].get((), 0)
            if n == 0:
                raise LMError("model has no unigram counts")
            count = table.get(token, 0)
            d = self._discounts[1]
            if d == 0.0:
                return count / n
            disc = max(count - d, 0.0) / n
            alpha = d * self._types[1][()] / n
            support = len(self.vocabulary)
            in_support = token in self.vocabulary
            return disc + (alpha / support if in_support else 0.0)
        ctx = context[-(k - 1):] if len(context) >= k - 1 else (BOS,) * (k - 1 - len(context)) + tuple(context)
        table = self._counts.get(k, {}).get(ctx)
        if not table:
            return self._prob_k(k - 1, ctx[1:], token)
        total = self._totals[k][ctx]
        d = self._discounts[k]
        disc = max(table.get(token, 0) - d, 0.0) / total
        alpha = d * self._types[k][ctx] / total
        return disc + alpha * self._prob_k(k - 1, ctx[1:], token)

    def logprob(self, tokens) -> float:
        return _score(self, tokens)


def train_ngram(sequences, order: int, discount: float) -> NGramLM:
    """Train from an iterable of token sequences.

    Contexts are padded with sentence-start symbols.  Raises on an empty
    corpus, a non-positive order, or a discount outside [0, 1).
    """
    if not isinstance(order, int) or order < 1:
        raise LMError(f"order must be an integer >= 1, got {order!r}")
    if not 0.0 <= discount < 1.0:
        raise LMError(f"discount must satisfy 0 <= D < 1, got {discount!r}")
    counts: dict = {k: {} for k in range(1, order + 1)}
    total = 0
    for seq in sequences:
        seq = list(seq)
        if not seq:
            continue
        total += len(seq)
        padded = [BOS] * (order - 1) + seq
        for i, token in enumerate(seq):
            pos = i + order - 1
            counts[1].setdefault((), {})
            counts[1][()][token] = counts[1][()].get(token, 0) + 1
            for k in range(2, order + 1):
                ctx = tuple(padded[pos - k + 1 : pos])
                table = counts[k].setdefault(ctx, {})
                table[token] = table.get(token, 0) + 1
    if total == 0:
        raise LMError("cannot train a language model on an empty corpus")
    return NGramLM(order, discount, counts)


class BiasedLM:
    """Mixture of a background model and a transcript-specific model.

    The transcript model is maximum likelihood (no discount), so with
    discount_D = 0 the mixture is the transcript model exactly, and
    raising discount_D monotonically shifts weight to the background.
    """

    def __init__(self, background: NGramLM, transcript_lm: NGramLM, w_bias: float):
        if background.order != transcript_lm.order:
            raise LMError("background and transcript models must share an order")
        if not 0.0 < w_bias <= 1.0:
            raise LMError(f"w_bias must lie in (0, 1], got {w_bias!r}")
        self.background = background
        self.transcript_lm = transcript_lm
        self.w_bias = w_bias
        self.order = background.order
        self.vocabulary = background.vocabulary | transcript_lm.vocabulary

    @property
    def score_floor(self) -> float:
        return 1.0 / (10.0 * len(self.vocabulary))

    def prob(self, token: str, context=()) -> float:
        p_t = self.transcript_lm.prob(token, context)
        p_bg = self.background.prob(token, context)
        return self.w_bias * p_t + (1.0 - self.w_bias) * p_bg

    def logprob(self, tokens) -> float:
        return _score(self, tokens)


def build_biased_lm(background: NGramLM, transcript_tokens, discount_D: float) -> BiasedLM:
    """Bias the background toward one transcript with weight 1 - discount_D."""
    if not 0.0 <= discount_D < 1.0:
        raise LMError(f"discount_D must satisfy 0 <= D < 1, got {discount_D!r}")
    tokens = list(transcript_tokens)
    if not tokens:
        raise LMError("cannot bias toward an empty transcript")
    transcript_lm = train_ngram([tokens], background.order, 0.0)
    return BiasedLM(background, transcript_lm, 1.0 - discount_D)


def _score(model, tokens) -> float:
    tokens = list(tokens)
    floor = model.score_floor
    padded = [BOS] * (model.order - 1) + tokens
    total = 0.0
    for i in range(len(tokens)):
        context = tuple(padded[i : i + model.order - 1])
        p = model.prob(tokens[i], context)
        total += math.log(max(p, floor))
    return total


def lm_logprob(model, tokens) -> float:
    """Log probability of a token sequence, always finite.

    Each conditional is clipped below by 1 / (10 * |vocabulary|) so a
    query containing unseen tokens stays usable for rescoring.
    """
    return _score(model, tokens)


def save_lm(model: NGramLM, path: str | os.PathLike):
    """Write counts as tab-separated text; probabilities rebuild on load."""
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_SAVE_MAGIC + "\n")
        fh.write(f"order\t{model.order}\n")
        fh.write(f"discount\t{model.discount!r}\n")
        for k in sorted(model._counts):
            for ctx in sorted(model._counts[k]):
                for token, count in sorted(model._counts[k][ctx].items()):
                    for part in (*ctx, token):
                        if any(c.isspace() for c in part):
                            raise LMError(f"cannot save token containing whitespace: {part!r}")
                    fh.write(f"ngram\t{k}\t{' '.join(ctx)}\t{token}\t{count}\n")


def load_lm(path: str | os.PathLike) -> NGramLM:
    path = os.fspath(path)
    order = None
    discount = None
    counts: dict = {}
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != _SAVE_MAGIC:
            raise LMError(f"{path}:1: not a saved model (bad magic {magic!r})")
        for line_no, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if parts[0] == "order" and len(parts) == 2:
                order = int(parts[1])
            elif parts[0] == "discount" and len(parts) == 2:
                discount = float(parts[1])
            elif parts[0] == "ngram" and len(parts) == 5:
                k = int(parts[1])
                ctx = tuple(parts[2].split(" ")) if parts[2] else ()
                token = parts[3]
                count = int(parts[4])
                counts.setdefault(k, {}).setdefault(ctx, {})[token] = count
            else:
                raise LMError(f"{path}:{line_no}: unrecognized line {line!r}")
    if order is None or discount is None:
        raise LMError(f"{path}: missing order or discount header")
    for k in range(1, order + 1):
        counts.setdefault(k, {})
    return NGramLM(order, discount, counts)
