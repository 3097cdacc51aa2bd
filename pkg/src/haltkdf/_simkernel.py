"""Numba kernels for the Monte Carlo validation harness.

These mirror the "mix64" hash backend bit for bit on the fixed-width
synthetic password layout (one length-prefix byte, ``width`` ASCII digits,
a 16-byte salt), so a batched trial hashes exactly the bytes the scalar
engine would.  Per-trial randomness comes from a counter-based generator
keyed by (seed, trial stream, draw counter), which makes parallel and
serial execution agree and results reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

U64 = np.uint64

_C1 = U64(0xFF51AFD7ED558CCD)
_C2 = U64(0xC4CEB9FE1A85EC53)
_S33 = U64(33)

ABSORB_SEED = U64(0x9E3779B97F4A7C15)
_TWEAK1 = U64(0x2545F4914F6CDD1D)
_TWEAK2 = U64((2 * 0x2545F4914F6CDD1D) % (1 << 64))
_TWEAK3 = U64((3 * 0x2545F4914F6CDD1D) % (1 << 64))

# State update for hashing an 8-byte digest: length 8 folded into the seed,
# single chunk, single tweak.  The little-endian digest reloads as itself.
_CHAIN_TWEAK = U64((0x9E3779B97F4A7C15 ^ 8) ^ 0x2545F4914F6CDD1D)

_RNG_A = U64(0x9E3779B97F4A7C15)
_RNG_B = U64(0xD6E8FEB86659FD93)

_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _fmix64(x):
    x ^= x >> _S33
    x *= _C1
    x ^= x >> _S33
    x *= _C2
    x ^= x >> _S33
    return x


@njit(cache=True, inline="always")
def _bswap64(x):
    m1 = U64(0x00FF00FF00FF00FF)
    m2 = U64(0x0000FFFF0000FFFF)
    x = ((x & m1) << U64(8)) | ((x >> U64(8)) & m1)
    x = ((x & m2) << U64(16)) | ((x >> U64(16)) & m2)
    return (x << U64(32)) | (x >> U64(32))


@njit(cache=True, inline="always")
def _chain_step(state):
    return _fmix64(state ^ _CHAIN_TWEAK)


@njit(cache=True, inline="always")
def _hash_rounds(state, k):
    for _ in range(k):
        state = _fmix64(state ^ _CHAIN_TWEAK)
    return state


@njit(cache=True, inline="always")
def _residue(state, modulus):
    # Predicates read the digest as a big-endian integer.  Mod 2 only needs
    # the big-endian low bit (the top byte of the little-endian state), and
    # byte order is irrelevant mod 3 because 256 = 1 (mod 3); the literal
    # moduli on these paths let the compiler strength-reduce the division.
    if modulus == U64(2):
        return (state >> U64(56)) & U64(1)
    if modulus == U64(3):
        return state % U64(3)
    return _bswap64(state) % modulus


@njit(cache=True, inline="always")
def _absorb_framed(pwd_low, c0_salt, c1, c2, total_len):
    state = _fmix64((ABSORB_SEED ^ total_len) ^ (pwd_low | c0_salt) ^ _TWEAK1)
    state = _fmix64(state ^ c1 ^ _TWEAK2)
    return _fmix64(state ^ c2 ^ _TWEAK3)


@njit(cache=True, inline="always")
def _round1(pwd_low, c0_salt, c1, c2, total_len, k):
    state = _absorb_framed(pwd_low, c0_salt, c1, c2, total_len)
    for _ in range(k - 1):
        state = _fmix64(state ^ _CHAIN_TWEAK)
    return state


@njit(cache=True, inline="always")
def _salt_chunks(salt_lo, salt_hi, width):
    """Split the 16 salt bytes across the three framed-input chunks."""
    if width == 7:
        return U64(0), salt_lo, salt_hi
    nbits = U64(8) * U64(7 - width)
    shift = U64(8) * U64(width + 1)
    mask = (U64(1) << nbits) - U64(1)
    c0_salt = (salt_lo & mask) << shift
    c1 = (salt_lo >> nbits) | ((salt_hi & mask) << shift)
    c2 = salt_hi >> nbits
    return c0_salt, c1, c2


@njit(cache=True, inline="always")
def _rand_u64(seed, stream, counter):
    return _fmix64(_fmix64(seed ^ (stream * _RNG_A)) ^ (counter * _RNG_B))


@njit(cache=True, inline="always")
def _rand_unit(seed, stream, counter):
    return np.float64(_rand_u64(seed, stream, counter) >> U64(11)) * _INV53


@njit(cache=True)
def chain_states(pwd_low, salt_lo, salt_hi, width, k, rounds):
    """Digest-chain states for one framed password (test parity helper)."""
    total_len = U64(17 + width)
    c0s, c1, c2 = _salt_chunks(salt_lo, salt_hi, width)
    out = np.empty(rounds, np.uint64)
    out[0] = _round1(pwd_low, c0s, c1, c2, total_len, k)
    for m in range(1, rounds):
        out[m] = _hash_rounds(out[m - 1], k)
    return out


@njit(cache=True, parallel=True)
def run_vertex_batch(
    seed,
    stream_base,
    trials,
    space_size,
    width,
    k,
    moduli,
    stop_cdf,
    sizes,
    pwd_low,
    out_success,
    out_sizes,
    out_hits,
):
    """Simulate ``trials`` independent accounts against one strategy.

    Each trial creates an account (salt, stopping time, per-slot residues,
    derived digest) and then runs the budgeted set process: hash a first
    batch of candidates one round, keep checking fired candidates against
    the derived digest, and push the first ``sizes[m]`` survivors in scan
    order into round ``m + 1`` (the candidate hash values are exchangeable
    under the fresh per-trial salt, so scan order is distribution-
    equivalent to a uniform subset).  Leftover budget from a short
    survivor pool is discarded.
    """
    n = stop_cdf.shape[0]
    total_len = U64(17 + width)
    nblocks = (trials + 255) // 256
    s1_cap = sizes[0]
    if s1_cap > space_size:
        s1_cap = space_size
    for blk in prange(nblocks):
        surv = np.empty(max(s1_cap, 1), np.uint64)
        chain = np.empty(n, np.uint64)
        residues = np.empty(n - 1, np.uint64)
        t_end = min((blk + 1) * 256, trials)
        for t in range(blk * 256, t_end):
            stream = stream_base + U64(t)
            salt_lo = _rand_u64(seed, stream, U64(0))
            salt_hi = _rand_u64(seed, stream, U64(1))
            c0s, c1, c2 = _salt_chunks(salt_lo, salt_hi, width)
            pwd_star = np.int64(_rand_u64(seed, stream, U64(2)) % U64(space_size))

            u = _rand_unit(seed, stream, U64(3))
            j_star = n
            for j in range(n - 1):
                if u < stop_cdf[j]:
                    j_star = j + 1
                    break

            # The user's chain, halting residues, and derived digest.
            chain[0] = _round1(pwd_low[pwd_star], c0s, c1, c2, total_len, k)
            for m in range(1, n):
                chain[m] = _hash_rounds(chain[m - 1], k)
            derived = chain[j_star - 1]
            ctr = U64(4)
            for m in range(1, n):
                ell = U64(moduli[m - 1])
                true_r = _residue(chain[m - 1], ell)
                if m < j_star:
                    offset = U64(1) + _rand_u64(seed, stream, ctr) % (ell - U64(1))
                    residues[m - 1] = (true_r + offset) % ell
                elif m == j_star:
                    residues[m - 1] = true_r
                else:
                    residues[m - 1] = _rand_u64(seed, stream, ctr) % ell
                ctr += U64(1)

            # Round 1 over the first batch of candidates.  Two independent
            # hash chains advance per iteration to hide the fmix latency;
            # firing counts, the digest check (a hit on the derived digest
            # implies the predicate fired for the true password), and the
            # survivor compaction are all branchless.
            s1 = s1_cap
            nsurv = 0
            hits = 0
            success = 0
            ell1 = U64(moduli[0])
            r1 = residues[0]
            c = 0
            while c + 1 < s1:
                sa = _absorb_framed(pwd_low[c], c0s, c1, c2, total_len)
                sb = _absorb_framed(pwd_low[c + 1], c0s, c1, c2, total_len)
                for _ in range(k - 1):
                    sa = _fmix64(sa ^ _CHAIN_TWEAK)
                    sb = _fmix64(sb ^ _CHAIN_TWEAK)
                fa = np.int64(_residue(sa, ell1) == r1)
                fb = np.int64(_residue(sb, ell1) == r1)
                success |= np.int64(sa == derived) | np.int64(sb == derived)
                hits += fa + fb
                surv[nsurv] = sa
                nsurv += 1 - fa
                surv[nsurv] = sb
                nsurv += 1 - fb
                c += 2
            if c < s1:
                st = _round1(pwd_low[c], c0s, c1, c2, total_len, k)
                f = np.int64(_residue(st, ell1) == r1)
                success |= np.int64(st == derived)
                hits += f
                surv[nsurv] = st
                nsurv += 1 - f
            out_sizes[t, 0] = s1
            out_hits[t, 0] = hits

            # Later rounds: survivors advance in scan order up to the budget.
            for m in range(2, n + 1):
                take = sizes[m - 1]
                if take > nsurv:
                    take = nsurv
                out_sizes[t, m - 1] = take
                if m < n:
                    ellm = U64(moduli[m - 1])
                    rm = residues[m - 1]
                    hits = 0
                    kept = 0
                    c = 0
                    while c + 1 < take:
                        sa = surv[c]
                        sb = surv[c + 1]
                        for _ in range(k):
                            sa = _fmix64(sa ^ _CHAIN_TWEAK)
                            sb = _fmix64(sb ^ _CHAIN_TWEAK)
                        fa = np.int64(_residue(sa, ellm) == rm)
                        fb = np.int64(_residue(sb, ellm) == rm)
                        success |= np.int64(sa == derived) | np.int64(sb == derived)
                        hits += fa + fb
                        surv[kept] = sa
                        kept += 1 - fa
                        surv[kept] = sb
                        kept += 1 - fb
                        c += 2
                    if c < take:
                        st = _hash_rounds(surv[c], k)
                        f = np.int64(_residue(st, ellm) == rm)
                        success |= np.int64(st == derived)
                        hits += f
                        surv[kept] = st
                        kept += 1 - f
                    nsurv = kept
                    out_hits[t, m - 1] = hits
                else:
                    c = 0
                    while c + 1 < take:
                        sa = surv[c]
                        sb = surv[c + 1]
                        for _ in range(k):
                            sa = _fmix64(sa ^ _CHAIN_TWEAK)
                            sb = _fmix64(sb ^ _CHAIN_TWEAK)
                        success |= np.int64(sa == derived) | np.int64(sb == derived)
                        c += 2
                    if c < take:
                        success |= np.int64(_hash_rounds(surv[c], k) == derived)
                    out_hits[t, m - 1] = take
            out_success[t] = success


@njit(cache=True)
def halt_counts(seed, samples, width, k, moduli, out_counts):
    """Count residue frequencies of round-m digests over random passwords."""
    nslots = moduli.shape[0]
    total_len = U64(17 + width)
    limit = U64(1)
    for _ in range(width):
        limit *= U64(10)
    for t in range(samples):
        stream = U64(t)
        salt_lo = _rand_u64(seed, stream, U64(0))
        salt_hi = _rand_u64(seed, stream, U64(1))
        c0s, c1, c2 = _salt_chunks(salt_lo, salt_hi, width)
        pwd = _rand_u64(seed, stream, U64(2)) % limit
        pwd_low = U64(width)
        value = pwd
        for d in range(width):
            digit = U64(48) + value % U64(10)
            value //= U64(10)
            pwd_low |= digit << (U64(8) * U64(width - d))
        st = _round1(pwd_low, c0s, c1, c2, total_len, k)
        for m in range(nslots):
            out_counts[m, np.int64(_residue(st, U64(moduli[m])))] += 1
            if m + 1 < nslots:
                st = _hash_rounds(st, k)


def pwd_low_words(space_size: int, width: int) -> np.ndarray:
    """Little-endian words of (length prefix + fixed-width digits) per index."""
    if width > 7:
        raise ValueError("kernel supports password widths up to 7 digits")
    if space_size > 10**width:
        raise ValueError("width too small for the password space")
    idx = np.arange(space_size, dtype=np.uint64)
    out = np.full(space_size, width, dtype=np.uint64)
    for d in range(width):
        digit = (idx // np.uint64(10 ** (width - 1 - d))) % np.uint64(10) + np.uint64(48)
        out |= digit << np.uint64(8 * (1 + d))
    return out
