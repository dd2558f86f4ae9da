"""Seed derivation for independent substreams.

``seed_substream(master, i)`` premixes ``master`` with the SplitMix64
finalizer, adds ``(i + 1) * 0x9E3779B97F4A7C15`` modulo 2**64 and finalizes
again. The golden-ratio increment is odd and the finalizer is a bijection, so
for a fixed master the map ``i -> seed`` is injective on 64-bit ids. All
arithmetic is on Python ints and is bit-exact on every platform.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64_mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def seed_substream(master: int, stream_id: int) -> int:
    base = splitmix64_mix(int(master))
    return splitmix64_mix(base + ((int(stream_id) + 1) * GOLDEN))
