"""Episode construction for generalized few-shot tasks.

Sampling runs on an explicit splitmix64 generator so an episode is a pure,
platform-independent function of (pool, batch size, seed).
"""

from dataclasses import dataclass

from .errors import InsufficientDataError

_MASK = (1 << 64) - 1


class SplitMix64:
    """Deterministic 64-bit generator (splitmix64 update + finalizer)."""

    def __init__(self, seed):
        self.state = seed & _MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n):
        """Uniform integer in [0, n) via the multiply-shift bound trick."""
        return (self.next_u64() * n) >> 64

    def sample_without_replacement(self, items, k):
        """First k entries of a seeded partial Fisher-Yates shuffle."""
        pool = list(items)
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


@dataclass
class Episode:
    support: list
    query: list
    novel_classes: set
    base_classes: set
    rng_seed: int

    def check(self):
        assert not (set(self.support) & set(self.query)), "support/query overlap"
        assert self.base_classes <= self.novel_classes, "base not within novel"
        return self


def sample_episode(pool, batch_size, seed):
    """Draw one episode from ``pool`` (mapping item id -> set of class names).

    The batch splits in half into support and query; novel classes are the
    classes occurring in the support items and half of them (rounded up)
    become the episode's base classes.
    """
    if batch_size < 2 or batch_size % 2 != 0:
        raise InsufficientDataError("batch size must be an even integer >= 2")
    ids = sorted(pool)
    if len(ids) < batch_size:
        raise InsufficientDataError(
            f"pool has {len(ids)} items, need {batch_size}"
        )
    rng = SplitMix64(seed)
    batch = rng.sample_without_replacement(ids, batch_size)
    half = batch_size // 2
    support, query = batch[:half], batch[half:]
    novel = set()
    for item in support:
        novel |= set(pool[item])
    n_base = (len(novel) + 1) // 2
    base = set(rng.sample_without_replacement(sorted(novel), n_base))
    return Episode(support, query, novel, base, seed).check()


def write_episode(path, episode):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"support: {','.join(str(i) for i in episode.support)}\n")
        fh.write(f"query: {','.join(str(i) for i in episode.query)}\n")
        fh.write(f"novel: {','.join(sorted(str(c) for c in episode.novel_classes))}\n")
        fh.write(f"base: {','.join(sorted(str(c) for c in episode.base_classes))}\n")
        fh.write(f"seed: {episode.rng_seed}\n")


def read_episode(path):
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            key, _, rest = line.partition(":")
            fields[key.strip()] = rest.strip()
    split = lambda s: [tok for tok in s.split(",") if tok]
    return Episode(
        support=split(fields["support"]),
        query=split(fields["query"]),
        novel_classes=set(split(fields["novel"])),
        base_classes=set(split(fields["base"])),
        rng_seed=int(fields["seed"]),
    )
