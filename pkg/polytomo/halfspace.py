"""
Half-space constraints normal . x <= offset, tagged with the measurement setting they came from
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ConstraintSource:
    """Provenance of a constraint: (input index, POVM index, effect index); input is None for QST"""

    povm_index: int
    effect_index: int
    input_index: Optional[int] = None

    def as_dict(self) -> dict:
        return {"input": self.input_index, "povm": self.povm_index, "effect": self.effect_index}

    def __str__(self) -> str:
        prefix = f"input={self.input_index}, " if self.input_index is not None else ""
        return f"{prefix}povm={self.povm_index}, effect={self.effect_index}"


@dataclass(frozen=True, eq=False)
class HalfSpace:
    normal: np.ndarray
    offset: float
    source: Optional[ConstraintSource] = None

    def __post_init__(self):
        normal = np.array(self.normal, dtype=float).reshape(-1)
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return self.normal.size

    def slack(self, point: np.ndarray) -> float:
        """offset - normal . point; negative when violated"""
        return self.offset - float(self.normal @ point)
