"""Deterministic balanced pairwise-tree summation.

Every batch-level sum in the package (per-example gradient accumulation,
batch-norm statistics, per-example losses, and the cross-worker all-reduce)
goes through the same reduction tree: adjacent elements are combined
pairwise, lowest index on the left, level by level.  Because the tree over a
batch of B examples decomposes into the P per-worker subtrees whenever the
local batch B/P is a power of two, a P-worker reduction reproduces the
1-worker sum bit for bit.
"""

import numpy as np


def tree_sum(values):
    """Sum an ndarray over axis 0 with a fixed pairwise reduction tree.

    An odd trailing element is carried to the next level unchanged.
    """
    values = np.asarray(values)
    while values.shape[0] > 1:
        m = (values.shape[0] // 2) * 2
        reduced = values[0:m:2] + values[1:m:2]
        if values.shape[0] % 2:
            reduced = np.concatenate([reduced, values[-1:]], axis=0)
        values = reduced
    return values[0]


def tree_reduce(items, combine=None):
    """Reduce a list with the same pairwise-left tree as :func:`tree_sum`.

    `items` are combined in ascending index order; `combine` defaults to
    addition.  Reducing P partial sums of aligned power-of-two slices yields
    the same bits as one tree over the concatenated elements.
    """
    if not items:
        raise ValueError("tree_reduce of empty list")
    if combine is None:
        combine = lambda a, b: a + b
    items = list(items)
    while len(items) > 1:
        nxt = [combine(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]
