"""Quenched coupling-sign realizations and the Nishimori line.

Each triangle carries a sign tau = +/-1, independently negative with
probability p.  Realizations are deterministic in (lattice, p, seed) and
drawn from a dedicated disorder stream, so thermal sampling never
perturbs them.  Temperatures are in units of the coupling J, which is
fixed to 1 throughout.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice
from .rng import uniform_block


class DisorderError(ValueError):
    """Raised for parameters outside the valid disorder domain."""


@dataclass(frozen=True)
class DisorderRealization:
    """One quenched sample of triangle coupling signs."""

    tau: np.ndarray  # (N_tri,) int8, entries +/-1
    p: float
    seed: int

    @property
    def n_triangles(self) -> int:
        return self.tau.shape[0]

    @property
    def n_negative(self) -> int:
        return int(np.count_nonzero(self.tau == -1))

    @property
    def hash(self) -> str:
        """SHA-256 over (p, seed, packed signs); checkpoint integrity key."""
        payload = f"{self.p!r}/{self.seed}/".encode("utf-8") + pack_tau(self.tau)
        return hashlib.sha256(payload).hexdigest()


def sample_disorder(lat: Lattice, p: float, seed: int) -> DisorderRealization:
    """Draw tau for every triangle, negative with probability p.

    Uses draws 1..N_tri of the stream ``seed``; the same (lattice, p,
    seed) always reproduces the same signs bit-exactly.
    """
    if not 0.0 <= p < 1.0:
        raise DisorderError(f"disorder probability must satisfy 0 <= p < 1; got p={p}")
    u = uniform_block(seed, 0, lat.n_triangles)
    tau = np.where(u < p, np.int8(-1), np.int8(1))
    return DisorderRealization(tau=tau, p=float(p), seed=int(seed))


def nishimori_temperature(p: float) -> float:
    """Temperature on the Nishimori line, exp(-2/T) = p/(1-p), at J = 1.

    Diverges as p -> 1/2 and vanishes as p -> 0, so only 0 < p < 1/2 is
    accepted.
    """
    if not 0.0 < p < 0.5:
        raise DisorderError(
            f"Nishimori temperature is defined for 0 < p < 1/2; got p={p}"
        )
    return 2.0 / math.log((1.0 - p) / p)


def nishimori_probability(T: float) -> float:
    """Inverse map: the p for which temperature T lies on the Nishimori line."""
    if T <= 0.0:
        raise DisorderError(f"temperature must be positive; got T={T}")
    return 1.0 / (1.0 + math.exp(2.0 / T))


def pack_tau(tau: np.ndarray) -> bytes:
    """Little-endian bitset, one bit per triangle, 1 = negative sign."""
    return np.packbits((tau == -1).astype(np.uint8), bitorder="little").tobytes()


def unpack_tau(packed: bytes, n_triangles: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(packed, dtype=np.uint8), bitorder="little")
    return np.where(bits[:n_triangles] == 1, np.int8(-1), np.int8(1))


def disorder_to_json(dis: DisorderRealization) -> str:
    doc = {
        "p": dis.p,
        "seed": dis.seed,
        "n_triangles": dis.n_triangles,
        "tau_packed": base64.b64encode(pack_tau(dis.tau)).decode("ascii"),
    }
    return json.dumps(doc, separators=(",", ":"), sort_keys=True)


def disorder_from_json(text: str) -> DisorderRealization:
    doc = json.loads(text)
    tau = unpack_tau(base64.b64decode(doc["tau_packed"]), doc["n_triangles"])
    return DisorderRealization(tau=tau, p=float(doc["p"]), seed=int(doc["seed"]))
