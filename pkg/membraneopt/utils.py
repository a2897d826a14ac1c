"""
Utility functions shared by the numerical modules.
"""

import hashlib

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


def run_id(payload: bytes) -> str:
    """
    Compute a git-style object id for a run payload.

    The payload is framed like a git blob (``blob <len>\\0<payload>``) and
    hashed with SHA-1, so identical configurations and seeds always map to the
    same 40-character id.

    Args:
        payload: Canonical bytes describing the run (config JSON plus seed)

    Returns:
        40-character lowercase hex digest

    Examples:
        >>> run_id(b"")
        'e69de29bb2d1d6434b8b29ae775ad8c2e48c5391'
    """
    header = f"blob {len(payload)}\0".encode()
    return hashlib.sha1(header + payload).hexdigest()


def format_float(value: float) -> str:
    """Format a float losslessly (``%.17g``)."""
    return "%.17g" % value


def relative_change(old: float, new: float) -> float:
    """
    Relative change |new - old| / |old|.

    Returns ``abs(new - old)`` when ``old`` is zero.
    """
    scale = abs(old)
    if scale == 0.0:
        return abs(new - old)
    return abs(new - old) / scale


def tie_clusters(values: FloatArray, tol: float) -> IntArray:
    """
    Label values so that chains of neighbours closer than ``tol`` share a label.

    Labels increase with the values. With ``tol == 0`` only exactly equal
    values share a label.

    Args:
        values: 1-D array of values
        tol: Absolute gap at or below which consecutive sorted values are tied

    Returns:
        Integer label per entry, ordered like the values

    Examples:
        >>> tie_clusters(np.array([0.3, 0.1, 0.3]), 0.0).tolist()
        [1, 0, 1]
    """
    n = values.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    if n == 0:
        return labels
    order = np.argsort(values, kind="stable")
    gaps = np.diff(values[order]) > tol
    labels[order] = np.concatenate(([0], np.cumsum(gaps)))
    return labels


class _FenwickCounter:
    """Binary indexed tree counting inserted ranks."""

    def __init__(self, size: int):
        self._tree = [0] * (size + 1)

    def add(self, rank: int) -> None:
        i = rank + 1
        while i < len(self._tree):
            self._tree[i] += 1
            i += i & -i

    def count_below(self, bound: int) -> int:
        """Number of inserted ranks strictly below ``bound``."""
        total = 0
        i = bound
        while i > 0:
            total += self._tree[i]
            i -= i & -i
        return total


def count_discordant_pairs(
    levels: IntArray, keys: FloatArray, key_tol: float
) -> int:
    """
    Count pairs (i, j) with levels[i] < levels[j] and keys[i] > keys[j] + key_tol.

    Runs in O(n log n): levels are processed from highest to lowest and the keys
    of strictly higher levels are kept in a Fenwick tree over key ranks.

    Args:
        levels: Integer level per entry (e.g. tie cluster of a density)
        keys: Value per entry (e.g. the state u)
        key_tol: Absolute tolerance below which key differences are ties

    Returns:
        Number of discordant pairs

    Examples:
        >>> count_discordant_pairs(np.array([1, 0]), np.array([0.0, 1.0]), 0.0)
        1
    """
    n = keys.shape[0]
    if n < 2:
        return 0
    sorted_keys = np.sort(keys)
    ranks = np.searchsorted(sorted_keys, keys, side="left")
    bounds = np.searchsorted(sorted_keys, keys - key_tol, side="left")

    tree = _FenwickCounter(n)
    total = 0
    for level in np.unique(levels)[::-1]:
        members = np.flatnonzero(levels == level)
        for i in members:
            total += tree.count_below(int(bounds[i]))
        for i in members:
            tree.add(int(ranks[i]))
    return total
