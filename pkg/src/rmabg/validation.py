"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numbers

import numpy as np


def check_random_state(seed) -> np.random.Generator:
    """Turn ``seed`` into a ``numpy.random.Generator``.

    Integers (64-bit) and ``SeedSequence`` objects seed a PCG64 bit generator,
    which is splittable through ``SeedSequence.spawn``.  An existing Generator
    is returned unchanged; ``None`` draws fresh OS entropy.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.default_rng()
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if isinstance(seed, numbers.Integral):
        return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")


def check_state(s, n_arms: int, state_count: int = 2) -> np.ndarray:
    s = np.asarray(s)
    if s.ndim != 1 or s.shape[0] != n_arms:
        raise ValueError(f"state must have shape ({n_arms},), got {s.shape}")
    if not np.issubdtype(s.dtype, np.integer):
        if not np.all(np.equal(np.mod(s, 1), 0)):
            raise ValueError("state entries must be integers")
    s = s.astype(np.int64)
    if np.any(s < 0) or np.any(s >= state_count):
        raise ValueError(f"state entries must lie in [0, {state_count})")
    return s


def check_states(S, n_arms: int, state_count: int = 2) -> np.ndarray:
    """Accept one state ``(N,)`` or a batch ``(B, N)``; always return 2-d."""
    S = np.asarray(S)
    if S.ndim == 1:
        S = S[None, :]
    if S.ndim != 2:
        raise ValueError(f"expected 1-d or 2-d states, got ndim={S.ndim}")
    return np.stack([check_state(row, n_arms, state_count) for row in S])


def check_action(a, n_arms: int, budget: int) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 1 or a.shape[0] != n_arms:
        raise ValueError(f"action must have shape ({n_arms},), got {a.shape}")
    a = a.astype(np.int64)
    if np.any((a != 0) & (a != 1)):
        raise ValueError("action entries must be 0 or 1")
    if a.sum() > budget:
        raise ValueError(f"action pulls {int(a.sum())} arms, budget is {budget}")
    return a


def top_k(values, k: int) -> np.ndarray:
    """Indices of the ``k`` largest values; ties go to the lower index."""
    values = np.asarray(values, dtype=float)
    order = np.lexsort((np.arange(values.size), -values))
    return np.sort(order[:k])


def indicator(indices, n: int) -> np.ndarray:
    a = np.zeros(n, dtype=np.int64)
    a[list(indices)] = 1
    return a
