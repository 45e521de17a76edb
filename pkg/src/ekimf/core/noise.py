"""Counter-based Gaussian noise.

Every standard normal is a pure function of ``(key, trial, particle, step,
component)``.  Two solvers asked for the same address get the same value,
which is what the coupled particle experiments rely on.  Generation is
Philox4x32-10 (Salmon et al., SC'11) vectorized over numpy arrays, followed
by Box-Muller on 53-bit uniforms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
ROUNDS = 10


def philox4x32(counter, key, rounds: int = ROUNDS) -> np.ndarray:
    """Philox4x32 block function.

    Args:
        counter: integer array of shape ``(..., 4)``, words in ``[0, 2**32)``.
        key: two 32-bit words.

    Returns:
        uint32 array with the same shape as ``counter``.
    """
    ctr = np.asarray(counter, dtype=np.uint64)
    out_shape = ctr.shape
    ctr = ctr.reshape(-1, 4).T & _MASK32
    c0, c1, c2, c3 = ctr[0], ctr[1], ctr[2], ctr[3]
    p0 = np.empty_like(c0)
    p1 = np.empty_like(c0)
    for k0, k1 in _key_schedule(int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF, rounds):
        np.multiply(c0, _M0, out=p0)
        np.multiply(c2, _M1, out=p1)
        # new c0 = hi(p1) ^ c1 ^ k0, c2 = hi(p0) ^ c3 ^ k1, c1 = lo(p1), c3 = lo(p0)
        n0 = (p1 >> _SHIFT32) ^ c1
        n0 ^= k0
        n2 = (p0 >> _SHIFT32) ^ c3
        n2 ^= k1
        c1 = p1 & _MASK32
        c3 = p0 & _MASK32
        c0, c2 = n0, n2
    out = np.empty((4, c0.size), dtype=np.uint32)
    out[0], out[1], out[2], out[3] = c0, c1, c2, c3
    return out.T.reshape(out_shape)


@lru_cache(maxsize=64)
def _key_schedule(k0: int, k1: int, rounds: int) -> tuple:
    keys = []
    for _ in range(rounds):
        keys.append((np.uint64(k0), np.uint64(k1)))
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return tuple(keys)


def _uniform53(hi, lo) -> np.ndarray:
    # (0, 1], never 0 so log() in Box-Muller is safe
    bits = (hi.astype(np.uint64) << np.uint64(21)) ^ (lo.astype(np.uint64) >> np.uint64(11))
    bits &= np.uint64((1 << 53) - 1)
    return (bits.astype(np.float64) + 1.0) * (1.0 / 9007199254740992.0)


def _address_words(value: int) -> int:
    if not 0 <= int(value) < 2**32:
        raise ValueError(f"address component {value} outside [0, 2**32)")
    return int(value)


def derive_id(*parts) -> int:
    """Stable 32-bit identifier from arbitrary printable parts."""
    text = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=4).digest(), "little")


@dataclass(frozen=True)
class NoiseStream:
    """Immutable, addressable source of standard normals.

    ``seed`` is the 64-bit master key.  Independent families of noise (for
    instance a negative-control run that must *not* share increments) are
    obtained with :meth:`child`, which rehashes the key.
    """

    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def key(self) -> tuple[int, int]:
        return self.seed & 0xFFFFFFFF, self.seed >> 32

    def child(self, tag) -> "NoiseStream":
        digest = hashlib.blake2b(f"{self.seed}\x1f{tag}".encode(), digest_size=8).digest()
        return NoiseStream(int.from_bytes(digest, "little"))

    def normals(self, trial: int, particles, step: int, n_components: int) -> np.ndarray:
        """Standard normals for a block of particles at one step.

        Args:
            trial: trial identifier (32-bit).
            particles: int or 1-D array of particle ids.
            step: step identifier (32-bit).
            n_components: number of components per particle.

        Returns:
            ``(len(particles), n_components)`` array; row ``i`` holds the
            values at addresses ``(trial, particles[i], step, 0..n_components-1)``.
        """
        return self.normals_steps(trial, particles, [step], n_components)[0]

    def normals_steps(self, trial: int, particles, steps, n_components: int) -> np.ndarray:
        """Like :meth:`normals` for several steps at once, shape ``(steps, particles, components)``."""
        pids = np.atleast_1d(np.asarray(particles, dtype=np.int64))
        if pids.size and (pids.min() < 0 or pids.max() >= 2**32):
            raise ValueError("particle ids must lie in [0, 2**32)")
        trial = _address_words(trial)
        steps = [_address_words(k) for k in np.atleast_1d(steps)]
        n_blocks = (n_components + 1) // 2
        ctr = np.empty((len(steps), pids.size, n_blocks, 4), dtype=np.uint64)
        ctr[..., 0] = np.arange(n_blocks, dtype=np.uint64)
        ctr[..., 1] = pids.astype(np.uint64)[:, None]
        ctr[..., 2] = np.asarray(steps, dtype=np.uint64)[:, None, None]
        ctr[..., 3] = np.uint64(trial)
        words = philox4x32(ctr, self.key)
        u1 = _uniform53(words[..., 0], words[..., 1])
        u2 = _uniform53(words[..., 2], words[..., 3])
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        z = np.empty((len(steps), pids.size, 2 * n_blocks))
        z[..., 0::2] = radius * np.cos(angle)
        z[..., 1::2] = radius * np.sin(angle)
        return z[..., :n_components]

    def normal(self, trial: int, particle: int, step: int, component: int) -> float:
        """Single value at a full address."""
        return float(self.normals(trial, [particle], step, component + 1)[0, component])


def sample_gaussian(mean, cov, n: int, stream: NoiseStream, trial: int, step: int = 0,
                    first_particle: int = 0) -> np.ndarray:
    """Draw ``n`` rows ``mean + L z`` with ``z`` read at ``(trial, j, step)``.

    Row ``i`` uses particle address ``first_particle + i``.
    """
    from .linalg import as_spd

    cov = as_spd(cov)
    mean = np.asarray(mean, dtype=float).reshape(-1)
    if mean.size != cov.dim:
        raise ValueError("mean and covariance dimensions differ")
    z = stream.normals(trial, np.arange(first_particle, first_particle + n), step, cov.dim)
    return mean + z @ cov.chol.T


class PrefetchedStream:
    """Wraps a :class:`NoiseStream`, generating consecutive steps in blocks.

    Values are identical to the wrapped stream's; only the number of
    generator calls changes.  Suited to loops that request steps
    ``k, k+1, ...`` for a fixed set of particles.
    """

    def __init__(self, stream: NoiseStream, max_values: int = 2**19, max_steps: int = 64):
        self.stream = stream
        self.max_values = max_values
        self.max_steps = max_steps
        self._key = None
        self._first = 0
        self._block = None

    @property
    def seed(self) -> int:
        return self.stream.seed

    @property
    def key(self) -> tuple[int, int]:
        return self.stream.key

    def child(self, tag) -> NoiseStream:
        return self.stream.child(tag)

    def normal(self, trial: int, particle: int, step: int, component: int) -> float:
        return self.stream.normal(trial, particle, step, component)

    def normals_steps(self, trial, particles, steps, n_components):
        return self.stream.normals_steps(trial, particles, steps, n_components)

    def normals(self, trial: int, particles, step: int, n_components: int) -> np.ndarray:
        pids = np.atleast_1d(np.asarray(particles, dtype=np.int64))
        key = (int(trial), n_components, pids.size, pids.tobytes())
        idx = int(step) - self._first
        if key != self._key or not 0 <= idx < len(self._block):
            n = max(1, min(self.max_steps, self.max_values // max(1, pids.size * n_components),
                           2**32 - int(step)))
            self._block = self.stream.normals_steps(trial, pids, np.arange(int(step), int(step) + n),
                                                    n_components)
            self._key, self._first, idx = key, int(step), 0
        return self._block[idx]


def prefetched(stream) -> "PrefetchedStream":
    return stream if isinstance(stream, PrefetchedStream) else PrefetchedStream(stream)
