"""Deterministic seed derivation for pipeline jobs."""

from __future__ import annotations

import hashlib


def derive_seed(root_seed: int, *labels) -> int:
    """Derive a 63-bit seed from a root seed and a stable label path.

    Every job (fold training, permutation run, side assignment, ...) names
    itself with a sequence of labels such as ``("cell", task, model, fold)``.
    The derived seed depends only on ``(root_seed, labels)``, so adding new
    jobs never perturbs the seeds of existing ones.
    """
    key = "|".join([str(int(root_seed))] + [str(part) for part in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)
