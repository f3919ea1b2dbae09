"""Independent reference implementations used only to check the library.

Deliberately naive: matching is a maximum bipartite matching found by
augmenting paths over exact-equality edges, not a multiset intersection, so
it exercises a different algorithmic route than the production code.
"""

from __future__ import annotations

import unicodedata


def norm(text):
    if text is None:
        return None
    return unicodedata.normalize("NFC", text).strip()


def max_matching_size(gold: list, pred: list) -> int:
    """Size of a maximum one-to-one matching where item equality is the edge."""
    match_of_pred: dict[int, int] = {}

    def augment(g: int, seen: set[int]) -> bool:
        for j, p in enumerate(pred):
            if p == gold[g] and j not in seen:
                seen.add(j)
                if j not in match_of_pred or augment(match_of_pred[j], seen):
                    match_of_pred[j] = g
                    return True
        return False

    size = 0
    for g in range(len(gold)):
        if augment(g, set()):
            size += 1
    return size


def quad_tuple(q) -> tuple:
    return (norm(q.explicit), norm(q.implicit), norm(q.opinion), q.polarity)


def project(items: list[tuple], idxs: tuple[int, ...]) -> list[tuple]:
    return [tuple(it[i] for i in idxs) for it in items]


def prf_from_counts(n_correct: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    p = n_correct / n_pred if n_pred else 0.0
    r = n_correct / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def cell_scores(gold_by_dialogue: dict[str, list], pred_by_dialogue: dict[str, list],
                idxs: tuple[int, ...]) -> tuple[int, int, int, float, float, float]:
    """Corpus-pooled counts and scores for one projection, via max matching."""
    n_correct = n_pred = n_gold = 0
    for did, gold_quads in gold_by_dialogue.items():
        g = project([quad_tuple(q) for q in gold_quads], idxs)
        p = project([quad_tuple(q) for q in pred_by_dialogue.get(did, [])], idxs)
        n_correct += max_matching_size(g, p)
        n_gold += len(g)
        n_pred += len(p)
    return (n_correct, n_pred, n_gold) + prf_from_counts(n_correct, n_pred, n_gold)
