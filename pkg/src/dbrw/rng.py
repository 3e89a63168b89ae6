"""Counter-based randomness keyed by tree position.

Every vertex of a simulated tree owns a 128-bit digest obtained by hashing
its parent's digest together with its child index.  The random stream of a
vertex is a pure function of ``(seed, digest, slot)``, so any traversal order
(or any number of re-walks) reproduces exactly the same tree.

Slot layout used by the simulators:

* slot 0 -- offspring count of the vertex
* slot 1, 2 -- increment attached to the vertex (two uniforms, Gaussian needs both)
"""

import hashlib

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LANE_HI = np.uint64(0xD1B54A32D192ED03)
_ROOT_LO = np.uint64(0x243F6A8885A308D3)
_ROOT_HI = np.uint64(0x13198A2E03707344)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)

SLOT_OFFSPRING = 0
SLOT_INCREMENT = 1


@nb.njit(cache=True, inline="always")
def mix64(z):
    """splitmix64 finalizer (bijective on 64-bit words)."""
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def root_digest(seed):
    s = np.uint64(seed)
    lo = mix64(s ^ _ROOT_LO)
    hi = mix64((s + _GOLDEN) ^ _ROOT_HI)
    return lo, hi


@nb.njit(cache=True, inline="always")
def child_digest(lo, hi, index):
    k = np.uint64(index) + _ONE
    nlo = mix64(lo + k * _GOLDEN)
    nhi = mix64(hi ^ (nlo + k * _LANE_HI))
    return nlo, nhi


@nb.njit(cache=True, inline="always")
def stream_word(seed, lo, hi, slot):
    """64-bit output number ``slot`` of the stream keyed by ``(seed, lo, hi)``."""
    z = mix64(lo ^ (np.uint64(seed) * _LANE_HI))
    return mix64(z + hi + (np.uint64(slot) + _ONE) * _GOLDEN)


@nb.njit(cache=True, inline="always")
def word_to_open01(w):
    """Map a word to a double in (0, 1]; never returns 0 so logs and powers stay finite."""
    return ((w >> _S11) + _ONE) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True, inline="always")
def stream_uniform(seed, lo, hi, slot):
    return word_to_open01(stream_word(seed, lo, hi, slot))


@nb.njit(cache=True)
def path_digest(seed, path):
    lo, hi = root_digest(seed)
    for idx in path:
        lo, hi = child_digest(lo, hi, idx)
    return lo, hi


class VertexKey:
    """Position of a vertex: its depth and the 128-bit digest of the root-to-vertex path.

    Distinct paths collide with probability about 2**-64 per pair; collisions
    are tolerated and would only make two vertices share randomness.
    """

    __slots__ = ("depth", "lo", "hi")

    def __init__(self, depth, lo, hi):
        self.depth = int(depth)
        self.lo = int(lo)
        self.hi = int(hi)

    @classmethod
    def root(cls, seed):
        lo, hi = root_digest(np.uint64(seed & MASK64))
        return cls(0, lo, hi)

    @classmethod
    def from_path(cls, seed, path):
        lo, hi = path_digest(np.uint64(seed & MASK64), np.asarray(path, dtype=np.int64))
        return cls(len(path), lo, hi)

    def child(self, index):
        lo, hi = child_digest(np.uint64(self.lo), np.uint64(self.hi), index)
        return VertexKey(self.depth + 1, lo, hi)

    @property
    def digest(self):
        return (self.hi << 64) | self.lo

    def __eq__(self, other):
        return isinstance(other, VertexKey) and (self.depth, self.lo, self.hi) == (
            other.depth, other.lo, other.hi)

    def __hash__(self):
        return hash((self.depth, self.lo, self.hi))

    def __repr__(self):
        return f"VertexKey(depth={self.depth}, digest={self.digest:032x})"


class KeyedStream:
    """Random stream owned by one vertex; ``next_*`` walks the slot counter."""

    def __init__(self, seed, key, start=0):
        self.seed = np.uint64(seed & MASK64)
        self.key = key
        self._lo = np.uint64(key.lo)
        self._hi = np.uint64(key.hi)
        self.slot = start

    def word(self, slot):
        return int(stream_word(self.seed, self._lo, self._hi, slot))

    def uniform(self, slot):
        return float(stream_uniform(self.seed, self._lo, self._hi, slot))

    def next_word(self):
        w = self.word(self.slot)
        self.slot += 1
        return w

    def next_uniform(self):
        u = self.uniform(self.slot)
        self.slot += 1
        return u

    def uniforms(self, n):
        return np.array([self.next_uniform() for _ in range(n)])


def keyed_rng(seed, key):
    """Stream for vertex ``key`` under run ``seed``; a pure function of both."""
    return KeyedStream(seed, key)


def split_seed(base_seed, experiment_id, replica):
    """Seed of replica ``replica``: blake2b of ``(base_seed, experiment_id, replica)``."""
    msg = f"{int(base_seed) & MASK64}:{experiment_id}:{int(replica)}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def replica_seeds(base_seed, experiment_id, n):
    return [split_seed(base_seed, experiment_id, r) for r in range(n)]


def numpy_rng(seed, *labels):
    """numpy Generator for bulk work (pools, sign vectors) derived from a seed and labels."""
    words = [int(seed) & MASK64]
    for lab in labels:
        if isinstance(lab, str):
            lab = int.from_bytes(hashlib.blake2b(lab.encode(), digest_size=8).digest(), "little")
        words.append(int(lab) & MASK64)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
