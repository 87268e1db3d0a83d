"""Joint model: the elementwise mean of the global and context score matrices."""
from __future__ import annotations

from .scores import TypeScoreMatrix


def joint_predict(gm, cm):
    """Average two aligned TypeScoreMatrix objects; raises AlignmentError otherwise."""
    gm.check_aligned(cm)
    meta = {f"gm_{k}": v for k, v in gm.meta.items()}
    meta.update({f"cm_{k}": v for k, v in cm.meta.items()})
    return TypeScoreMatrix(gm.entity_ids, gm.type_ids, (gm.values + cm.values) / 2.0, meta)
