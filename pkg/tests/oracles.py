"""Independent reference implementations used only for checking.

Everything here is written against dense matrices or plain Python sets,
sharing no code with the package internals it verifies.
"""

import math

import numpy as np


def dense_normalized_adjacency(n_left: int, n_right: int, edges: np.ndarray) -> np.ndarray:
    """Dense left x right matrix with 1/sqrt(deg_l * deg_r) at each edge."""
    adj = np.zeros((n_left, n_right))
    for a, b in edges:
        adj[a, b] = 1.0
    left_deg = adj.sum(axis=1)
    right_deg = adj.sum(axis=0)
    out = np.zeros_like(adj)
    for a in range(n_left):
        for b in range(n_right):
            if adj[a, b]:
                out[a, b] = 1.0 / math.sqrt(left_deg[a] * right_deg[b])
    return out


def dense_propagate(
    ut_edges: np.ndarray,
    it_edges: np.ndarray,
    n_users: int,
    n_items: int,
    n_tags: int,
    user0: np.ndarray,
    item0: np.ndarray,
    tag0: np.ndarray,
    weights: np.ndarray,
):
    """Layer-combined embeddings by explicit dense matrix products.

    Per layer: users and items pull from tags through their normalized
    adjacency; the tag update averages the two transposed pulls.
    """
    tagging = dense_normalized_adjacency(n_users, n_tags, ut_edges)
    tagged = dense_normalized_adjacency(n_items, n_tags, it_edges)
    users, items, tags = user0.copy(), item0.copy(), tag0.copy()
    final_user = weights[0] * users
    final_item = weights[0] * items
    final_tag = weights[0] * tags
    for k in range(1, len(weights)):
        users, items, tags = (
            tagging @ tags,
            tagged @ tags,
            0.5 * (tagging.T @ users + tagged.T @ items),
        )
        final_user = final_user + weights[k] * users
        final_item = final_item + weights[k] * items
        final_tag = final_tag + weights[k] * tags
    return final_user, final_item, final_tag


def metric_quintet(recs, truth, n):
    """Recall/precision/hit/ndcg/mrr for one ranking, via sets and loops."""
    top = list(recs)[:n]
    truth = set(truth)
    hits = [item in truth for item in top]
    n_hits = sum(hits)
    recall = n_hits / len(truth)
    precision = n_hits / n
    hit = 1.0 if n_hits > 0 else 0.0
    numerator = 0.0
    for position, is_hit in enumerate(hits, start=1):
        if is_hit:
            numerator += 1.0 / math.log(position + 1)
    denominator = sum(1.0 / math.log(position + 1) for position in range(1, n + 1))
    ndcg = numerator / denominator
    mrr = 0.0
    for position, is_hit in enumerate(hits, start=1):
        if is_hit:
            mrr = 1.0 / position
            break
    return recall, precision, hit, ndcg, mrr


def evaluate_brute_force(finals, which, data, cutoffs):
    """Set-based re-derivation of the full evaluation report."""
    heldout = data.validation_pairs if which == "validation" else data.test_pairs
    truth_by_user = {}
    for user, item in heldout:
        truth_by_user.setdefault(int(user), set()).add(int(item))
    train_by_user = {}
    for user, item in data.train_pairs:
        train_by_user.setdefault(int(user), set()).add(int(item))

    totals = {name: {n: 0.0 for n in cutoffs} for name in ("recall", "precision", "hit", "ndcg", "mrr")}
    users = sorted(truth_by_user)
    for user in users:
        scores = finals.item @ finals.user[user]
        excluded = train_by_user.get(user, set())
        candidates = [i for i in range(scores.shape[0]) if i not in excluded]
        # descending score, ties toward the smaller index
        candidates.sort(key=lambda i: (-scores[i], i))
        for n in cutoffs:
            quintet = metric_quintet(candidates[:n], truth_by_user[user], n)
            for name, value in zip(("recall", "precision", "hit", "ndcg", "mrr"), quintet):
                totals[name][n] += value
    return {
        name: {n: totals[name][n] / len(users) for n in cutoffs} for name in totals
    }, len(users)


def finite_difference_gradients(loss_fn, table, h=1e-5):
    """Central differences of a scalar loss over every table entry."""
    grads = []
    for arr in (table.user0, table.item0, table.tag0):
        grad = np.zeros_like(arr)
        for r in range(arr.shape[0]):
            for c in range(arr.shape[1]):
                original = arr[r, c]
                arr[r, c] = original + h
                loss_plus = loss_fn()
                arr[r, c] = original - h
                loss_minus = loss_fn()
                arr[r, c] = original
                grad[r, c] = (loss_plus - loss_minus) / (2.0 * h)
        grads.append(grad)
    return grads
