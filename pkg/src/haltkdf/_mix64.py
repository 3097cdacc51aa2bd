"""Fast 64-bit mixing hash ("mix64") used by the simulator profile.

An 8-byte-digest backend for desk-scale testing and Monte Carlo work,
where SHA-256 throughput would dominate runtime.  The input length is
folded into the initial state, then each 8-byte little-endian chunk
(zero padded) is xored together with a position tweak and passed through
the murmur3 finalizer.  The digest is the final state in little-endian
byte order, which makes one application to an 8-byte digest cost exactly
one finalizer call.

Not cryptographic.  Production records should use the "sha256" backend.
"""

MASK64 = (1 << 64) - 1

_FMIX_C1 = 0xFF51AFD7ED558CCD
_FMIX_C2 = 0xC4CEB9FE1A85EC53

ABSORB_SEED = 0x9E3779B97F4A7C15
CHUNK_TWEAK = 0x2545F4914F6CDD1D


def fmix64(x: int) -> int:
    """Murmur3 64-bit finalizer on the low 64 bits of ``x``."""
    x ^= x >> 33
    x = (x * _FMIX_C1) & MASK64
    x ^= x >> 33
    x = (x * _FMIX_C2) & MASK64
    x ^= x >> 33
    return x


def mix64_digest(data: bytes) -> bytes:
    """Hash arbitrary bytes to an 8-byte little-endian digest."""
    state = ABSORB_SEED ^ len(data)
    for i in range(0, len(data), 8):
        chunk = int.from_bytes(data[i:i + 8], "little")
        state = fmix64(state ^ chunk ^ (((i // 8 + 1) * CHUNK_TWEAK) & MASK64))
    return state.to_bytes(8, "little")
