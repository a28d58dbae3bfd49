"""Shared oracles for the test suite."""

import itertools

import numpy as np


def all_strings(alphabet: str, max_len: int) -> list[str]:
    return [""] + ["".join(p) for n in range(1, max_len + 1) for p in itertools.product(alphabet, repeat=n)]


def single_edits(s: str, alphabet: str, max_len: int):
    for i in range(len(s)):
        yield s[:i] + s[i + 1 :]
        for a in alphabet:
            if a != s[i]:
                yield s[:i] + a + s[i + 1 :]
    if len(s) < max_len:
        for i in range(len(s) + 1):
            for a in alphabet:
                yield s[:i] + a + s[i:]


def edit_script_distances(alphabet: str = "abc", max_len: int = 6) -> tuple[list[str], np.ndarray]:
    """Length of the shortest edit script between every pair of strings.

    Breadth-first search over single substitutions, insertions and deletions,
    run for all sources at once with boolean matrix products. Scripts can put
    deletions first and insertions last, so no intermediate string needs to
    exceed ``max_len``.
    """
    nodes = all_strings(alphabet, max_len)
    index = {s: i for i, s in enumerate(nodes)}
    n = len(nodes)
    adj = np.zeros((n, n), dtype=np.float32)
    for s, i in index.items():
        for t in single_edits(s, alphabet, max_len):
            adj[i, index[t]] = 1.0
    dist = np.full((n, n), -1, dtype=np.int64)
    reached = np.eye(n, dtype=bool)
    dist[reached] = 0
    frontier = reached.astype(np.float32)
    step = 0
    while not reached.all():
        step += 1
        nxt = (frontier @ adj) > 0
        new = nxt & ~reached
        dist[new] = step
        reached |= new
        frontier = new.astype(np.float32)
    return nodes, dist
