"""Contiguous-block subsampling for time-series ensembles and validation."""
import numpy as np


def block_starts(n, block_len):
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    if block_len > n:
        raise ValueError(f"block_len {block_len} exceeds the {n} available rows")
    return np.arange(0, n, block_len)


def block_subsample(n, rate, block_len, rng):
    """Sorted row indices from ``round(rate * n_blocks)`` contiguous blocks
    drawn without replacement.  The last block may be short."""
    starts = block_starts(n, block_len)
    n_blocks = len(starts)
    k = int(round(rate * n_blocks))
    k = min(max(k, 1), n_blocks)
    chosen = np.sort(rng.choice(n_blocks, size=k, replace=False))
    rows = [np.arange(starts[b], min(starts[b] + block_len, n)) for b in chosen]
    return np.concatenate(rows)


def block_bags(n, n_bags, rate, block_len, seed=0):
    """``n_bags`` (in_bag, out_of_bag) index pairs with a non-empty OOB part.

    Each bag gets its own generator spawned from ``seed`` so a bag's draw does
    not depend on how many bags precede it.
    """
    starts = block_starts(n, block_len)
    if len(starts) < 2:
        raise ValueError("need at least two blocks for out-of-bag validation")
    bags = []
    for child in np.random.SeedSequence(seed).spawn(n_bags):
        rng = np.random.default_rng(child)
        in_bag = block_subsample(n, rate, block_len, rng)
        if in_bag.size == n:
            # keep one block out
            drop = rng.integers(len(starts))
            stop = min(starts[drop] + block_len, n)
            in_bag = in_bag[(in_bag < starts[drop]) | (in_bag >= stop)]
        oob = np.setdiff1d(np.arange(n), in_bag)
        bags.append((in_bag, oob))
    return bags


def oob_grid_search(n, n_bags, rate, block_len, score_bag, seed=0):
    """Average the per-bag score vectors returned by ``score_bag(in, oob)``.

    ``score_bag`` returns one out-of-bag loss per grid point; the mean over
    bags is returned (NaN-aware, so a grid point that is singular in one bag
    is judged on the rest).
    """
    losses = [np.asarray(score_bag(i, o), dtype=float)
              for i, o in block_bags(n, n_bags, rate, block_len, seed)]
    stacked = np.vstack(losses)
    ok = np.isfinite(stacked)
    count = ok.sum(axis=0)
    total = np.where(ok, stacked, 0.0).sum(axis=0)
    return np.where(count > 0, total / np.maximum(count, 1), np.inf)


def spawn_seeds(seed, n):
    """``n`` independent integer seeds derived from ``seed``."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]
