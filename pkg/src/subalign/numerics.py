"""Dense linear-algebra primitives: thin SVD, stable softmax, norms, seeded RNG.

Everything here operates on float64 arrays and is a pure function of its
inputs; the generator returned by :func:`make_rng` is the single source of
randomness for the whole toolkit.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import SvdConvergenceError
from .validation import check_matrix


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a deterministic, platform-independent generator.

    The same ``(seed, *stream)`` key yields the same draw sequence on every
    platform (PCG64 under a SeedSequence). Extra stream keys derive
    independent substreams from one experiment seed.
    """
    key = [int(seed)] + [int(s) for s in stream]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def thin_svd(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with a deterministic sign convention.

    Returns ``(u, s, v)`` with ``m ≈ u @ diag(s) @ v.T``, orthonormal columns
    in ``u`` and ``v``, and ``s`` non-negative, non-increasing. Each column of
    ``v`` is flipped so its largest-magnitude entry is positive (``u`` flips
    along with it), which pins the otherwise arbitrary SVD signs.
    """
    m = check_matrix(m, "matrix")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise SvdConvergenceError("cannot decompose an empty matrix", attempts=0)
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails on ill-conditioned input; gesvd is slower
        # but more robust.
        try:
            u, s, vh = scipy.linalg.svd(
                m, full_matrices=False, lapack_driver="gesvd"
            )
        except Exception as exc:
            raise SvdConvergenceError(
                f"SVD failed to converge after 2 driver attempts: {exc}",
                attempts=2,
            ) from exc
    v = vh.T.copy()
    u = u.copy()
    for j in range(v.shape[1]):
        i = int(np.argmax(np.abs(v[:, j])))
        if v[i, j] < 0:
            v[:, j] = -v[:, j]
            u[:, j] = -u[:, j]
    return u, s, v


def softmax_rows(logits) -> np.ndarray:
    """Row-wise softmax, stabilised by max subtraction."""
    logits = check_matrix(logits, "logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def frobenius_norm(m) -> float:
    """Square root of the sum of squared entries."""
    m = np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.sum(m * m)))
