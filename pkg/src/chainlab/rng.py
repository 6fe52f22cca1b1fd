"""Counter-based random streams for reproducible parallel Monte Carlo.

Stream identity is the SHA-256 hash of "(base_seed, replica, tag)" fed
into a Philox counter-based generator, so replicas and purposes get
collision-free, independently seeded streams regardless of scheduling.
Both SHA-256 and Philox are frozen algorithms; derivations are stable
across library versions.
"""

import hashlib

import numpy as np


def derive_stream(base_seed: int, replica_index: int = 0, purpose_tag: str = "") -> np.random.Generator:
    """Return the Generator for (base_seed, replica_index, purpose_tag)."""
    msg = f"{int(base_seed)}:{int(replica_index)}:{purpose_tag}".encode()
    digest = hashlib.sha256(msg).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
