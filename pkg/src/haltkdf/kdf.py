"""Iterated-hash key derivation with randomized halting.

Account creation draws a random salt, samples a halting-predicate sequence
for the master password, and sends the derived digest to the server.
Re-derivation replays the hash chain and stops at the first firing
predicate, so the expected number of hash rounds for the correct password
is below the worst case while a wrong guess tends to run longer.

The underlying hash is an opaque bytes-to-bytes primitive selected by
``hash_id`` so that a memory-hard backend can be slotted in later without
touching the engine.  Password bytes are framed with a single length
prefix before the salt is appended, which keeps (password, salt) pairs
unambiguous.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

from . import mechanism as _mechanism
from ._mix64 import mix64_digest
from .outcomes import DigestChain, Outcome

HashFn = Callable[[bytes], bytes]

_HASH_BACKENDS: dict[str, HashFn] = {
    "sha256": lambda data: hashlib.sha256(data).digest(),
    # 8-byte non-cryptographic backend for simulation / desk-scale tests.
    "mix64": mix64_digest,
}


def register_hash(hash_id: str, fn: HashFn) -> None:
    """Register a hash backend (e.g. an instrumented or memory-hard one)."""
    _HASH_BACKENDS[hash_id] = fn


def resolve_hash(hash_id: str) -> HashFn:
    try:
        return _HASH_BACKENDS[hash_id]
    except KeyError:
        raise ValueError(f"unknown hash backend {hash_id!r}") from None


@dataclass(frozen=True)
class KdfParams:
    """Derivation parameters: per-round iteration count, rounds, salt size."""

    k: int
    rounds: int
    salt_bits: int = 128
    hash_id: str = "sha256"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.rounds < 2:
            raise ValueError("rounds must be >= 2")
        if self.salt_bits < 64 or self.salt_bits % 8:
            raise ValueError("salt_bits must be a multiple of 8, at least 64")
        resolve_hash(self.hash_id)


@dataclass(frozen=True)
class ClientRecord:
    """Per-account state kept on the client (salt, predicates, parameters)."""

    username: str
    account: str
    salt: bytes
    outcome: Outcome
    params: KdfParams
    epsilon: float | None = None

    def __post_init__(self) -> None:
        if len(self.outcome.predicates) != self.params.rounds - 1:
            raise ValueError("outcome length does not match the round count")
        if len(self.salt) * 8 != self.params.salt_bits:
            raise ValueError("salt length does not match salt_bits")


@dataclass(frozen=True)
class ServerRecord:
    """What the server stores: the username and the derived digest."""

    username: str
    derived_hash: bytes


def _to_bytes(pwd: Union[str, bytes]) -> bytes:
    return pwd.encode("utf-8") if isinstance(pwd, str) else bytes(pwd)


def _frame(pwd: bytes, salt: bytes) -> bytes:
    # One length-prefix byte caps passwords at 255 bytes.
    if len(pwd) > 255:
        raise ValueError("password longer than 255 bytes")
    return bytes([len(pwd)]) + pwd + salt


def hash_round(data: bytes, k: int, hash_fn: HashFn) -> bytes:
    """Apply the underlying hash ``k`` times, feeding each output forward."""
    if k < 1:
        raise ValueError("k must be >= 1")
    digest = hash_fn(data)
    for _ in range(k - 1):
        digest = hash_fn(digest)
    return digest


def digest_chain(pwd: Union[str, bytes], salt: bytes, params: KdfParams) -> DigestChain:
    """Compute the full ``n``-round digest chain for a password and salt."""
    fn = resolve_hash(params.hash_id)
    digests = [hash_round(_frame(_to_bytes(pwd), salt), params.k, fn)]
    for _ in range(params.rounds - 1):
        digests.append(hash_round(digests[-1], params.k, fn))
    return DigestChain(tuple(digests))


def create_account(
    user: str,
    account: str,
    pwd: Union[str, bytes],
    dist: "_mechanism.StoppingDistribution",
    params: KdfParams,
    rng: random.Random,
) -> tuple[ClientRecord, ServerRecord]:
    """Create an account: draw salt and predicates, derive the server hash."""
    if dist.space.rounds != params.rounds:
        raise ValueError("distribution round count does not match parameters")
    salt = rng.randbytes(params.salt_bits // 8)
    chain = digest_chain(pwd, salt, params)
    outcome = _mechanism.sample_outcome(dist, chain, rng)
    client = ClientRecord(
        username=user,
        account=account,
        salt=salt,
        outcome=outcome,
        params=params,
        epsilon=dist.epsilon,
    )
    server = ServerRecord(username=user, derived_hash=reproduce(client, pwd))
    return client, server


def reproduce(record: ClientRecord, pwd_guess: Union[str, bytes]) -> bytes:
    """Deterministically re-derive the digest for a password guess.

    Hashing is lazy: the chain stops at the first firing predicate, so the
    underlying hash runs exactly ``k * stopping_time`` times.
    """
    params = record.params
    fn = resolve_hash(params.hash_id)
    digest = hash_round(_frame(_to_bytes(pwd_guess), record.salt), params.k, fn)
    for pred in record.outcome.predicates:
        if pred.evaluate(digest):
            break
        digest = hash_round(digest, params.k, fn)
    return digest


def verify(server: ServerRecord, derived: bytes) -> bool:
    """Constant-time comparison of a derived digest against the stored one."""
    return hmac.compare_digest(server.derived_hash, derived)


# ---------------------------------------------------------------------------
# Record persistence (hex-string JSON, newline terminated)

def client_record_to_json(record: ClientRecord) -> dict:
    return {
        "user": record.username,
        "account": record.account,
        "salt_hex": record.salt.hex(),
        "n": record.params.rounds,
        "epsilon": record.epsilon,
        "k": record.params.k,
        "hash_id": record.params.hash_id,
        "predicates": record.outcome.to_json(),
    }


def client_record_from_json(data: dict) -> ClientRecord:
    salt = bytes.fromhex(data["salt_hex"])
    outcome = Outcome.from_json(data["predicates"])
    n = int(data["n"])
    if outcome.rounds != n:
        raise ValueError("record predicate count inconsistent with n")
    params = KdfParams(
        k=int(data["k"]),
        rounds=n,
        salt_bits=len(salt) * 8,
        hash_id=str(data["hash_id"]),
    )
    eps = data.get("epsilon")
    return ClientRecord(
        username=str(data["user"]),
        account=str(data["account"]),
        salt=salt,
        outcome=outcome,
        params=params,
        epsilon=None if eps is None else float(eps),
    )


def save_client_record(record: ClientRecord, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(client_record_to_json(record)) + "\n")


def load_client_record(path: Union[str, Path]) -> ClientRecord:
    return client_record_from_json(json.loads(Path(path).read_text()))


def server_record_to_json(record: ServerRecord) -> dict:
    return {"user": record.username, "hash_hex": record.derived_hash.hex()}


def server_record_from_json(data: dict) -> ServerRecord:
    return ServerRecord(
        username=str(data["user"]),
        derived_hash=bytes.fromhex(data["hash_hex"]),
    )


def save_server_record(record: ServerRecord, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(server_record_to_json(record)) + "\n")


def load_server_record(path: Union[str, Path]) -> ServerRecord:
    return server_record_from_json(json.loads(Path(path).read_text()))
