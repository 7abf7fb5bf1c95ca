"""Deterministic labelled random streams.

Every stochastic site in the package draws from an :class:`RngStream`
obtained by hashing ``(root_seed, site_label)``.  Results therefore depend
only on the seed and the label, never on draw order elsewhere in the
program or on thread scheduling, which is what makes parallel sweeps
byte-reproducible.

The generator is counter based: draw number ``i`` is a SplitMix64-style
bit mix of ``key + (i+1) * golden_gamma`` modulo 2**64, where ``key`` is
the first 8 bytes of SHA-256(seed|label).  Counter-based generation keeps
streams stateless apart from a draw counter and makes batched draws cheap
to vectorize.

Not suitable for cryptography.
"""

import hashlib
import math

import numpy as np

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF
_TWO_NEG53 = 2.0 ** -53


def derive_key(seed, label):
    """Hash a (seed, label) pair to a 64-bit stream key.

    Args:
        seed: integer root seed.
        label: non-empty string naming the stochastic site.

    Returns:
        Integer in [0, 2**64).
    """
    if not label:
        raise ValueError("stream label must be non-empty")
    digest = hashlib.sha256(f"{seed}|{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _mix(z):
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix_array(z):
    # uint64 arithmetic wraps modulo 2**64, matching the scalar path.
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class RngStream:
    """Single-consumer random stream identified by (seed, label).

    Scalar and batched draws interleave freely: ``uniforms(n)`` returns
    exactly the values ``n`` successive ``uniform()`` calls would have.
    """

    def __init__(self, seed, label):
        self.label = label
        self._key = derive_key(seed, label)
        self._count = 0

    def __repr__(self):
        return f"RngStream(label={self.label!r}, drawn={self._count})"

    def split(self, label):
        """Derive an independent child stream; does not consume draws."""
        return RngStream(self._key, f"{self.label}/{label}")

    def _next_u64(self):
        self._count += 1
        return _mix((self._key + self._count * _GAMMA) & _MASK)

    def _next_u64_batch(self, n):
        counters = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        return _mix_array(np.uint64(self._key) + counters * np.uint64(_GAMMA))

    def uniform(self):
        """One draw from U[0, 1) with 53-bit resolution."""
        return (self._next_u64() >> 11) * _TWO_NEG53

    def uniforms(self, n):
        """Batch of ``n`` U[0,1) draws as a float64 array."""
        if n == 0:
            return np.empty(0)
        return (self._next_u64_batch(int(n)) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53

    def normal(self, mu=0.0, sigma=1.0):
        """One Normal(mu, sigma) draw via the Box-Muller transform.

        Consumes two uniforms; only the cosine branch is used so that
        scalar and batched draws agree.  sigma=0 returns mu.
        """
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))  # 1-u1 in (0,1]: log is safe
        return mu + sigma * (r * math.cos(2.0 * math.pi * u2))

    def normals(self, n, mu=0.0, sigma=1.0):
        """Batch of ``n`` Normal(mu, sigma) draws."""
        if n == 0:
            return np.empty(0)
        u = self.uniforms(2 * int(n)).reshape(-1, 2)
        r = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        return mu + sigma * (r * np.cos(2.0 * np.pi * u[:, 1]))

    def randint_below(self, n):
        """Unbiased integer draw from [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("randint_below requires n >= 1")
        limit = (_MASK + 1) - ((_MASK + 1) % n)
        while True:
            v = self._next_u64()
            if v < limit:
                return v % n

    def permutation(self, n):
        """Fisher-Yates permutation of range(n) as an int64 array."""
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.randint_below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def derive(seed, label):
    """Create the stream for a stochastic site (see module docstring)."""
    return RngStream(seed, label)
