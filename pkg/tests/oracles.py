"""Independent reference implementations used to check the real ones.

Deliberately brute force: enumerate everything, score directly, and keep
no clever data structures, so a bug here is unlikely to mirror a bug in
the production code.
"""

from itertools import combinations, product

import numpy as np

SIL = "SIL"


def brute_force_align(score_matrix, symbols, phones, allow_optional_silence=True):
    """Enumerate every legal alignment; return (best_total, best_paths).

    best_paths holds every interval list achieving the optimum, each as
    [(symbol, start_frame, end_frame), ...].  Scores should be integer
    valued so float summation order cannot blur ties.
    """
    scores = np.asarray(score_matrix, dtype=np.float64)
    n_frames = scores.shape[0]
    col = {s: i for i, s in enumerate(symbols)}
    k = len(phones)
    prefix = np.vstack([np.zeros(scores.shape[1]), np.cumsum(scores, axis=0)])

    best_total = -np.inf
    best_paths = []
    masks = product([0, 1], repeat=k + 1) if allow_optional_silence else [(0,) * (k + 1)]
    for mask in masks:
        seq = []
        if mask[0]:
            seq.append(SIL)
        for i, p in enumerate(phones):
            seq.append(p)
            if mask[i + 1]:
                seq.append(SIL)
        m = len(seq)
        if m > n_frames:
            continue
        cols = np.array([col[s] for s in seq])
        cuts = list(combinations(range(1, n_frames), m - 1))
        bounds = np.hstack(
            [
                np.zeros((len(cuts), 1), dtype=int),
                np.array(cuts, dtype=int).reshape(len(cuts), m - 1),
                np.full((len(cuts), 1), n_frames, dtype=int),
            ]
        )
        seg_scores = prefix[bounds[:, 1:], cols] - prefix[bounds[:, :-1], cols]
        totals = seg_scores.sum(axis=1)
        top = totals.max()
        if top > best_total:
            best_total = top
            best_paths = []
        if top == best_total:
            for row in np.nonzero(totals == best_total)[0]:
                b = bounds[row]
                best_paths.append(
                    [(seq[i], int(b[i]), int(b[i + 1])) for i in range(m)]
                )
    return best_total, best_paths


def all_segmentations(text, surfaces):
    """Every way to cover text with the given surface forms."""
    if not text:
        yield []
        return
    for length in range(1, len(text) + 1):
        head = text[:length]
        if head in surfaces:
            for rest in all_segmentations(text[length:], surfaces):
                yield [head] + rest


def leftmost_longest(segmentations):
    """The segmentation a greedy longest-match scan would produce,
    characterized order-independently: lexicographically maximal by
    token lengths."""
    return max(segmentations, key=lambda seg: tuple(len(tok) for tok in seg))


def greedy_simulation(text, surfaces):
    """Greedy longest-match from scratch; returns (tokens, failure_offset).

    failure_offset is None on success, else the position where no
    surface matches.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        for length in range(len(text) - pos, 0, -1):
            if text[pos : pos + length] in surfaces:
                tokens.append(text[pos : pos + length])
                pos += length
                break
        else:
            return tokens, pos
    return tokens, None
