"""
Flat parameter vectors with named blocks.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple, Union

import numpy as np

from errors import ContractViolationError

from .tensor import Tensor, getitem, reshape


@dataclass(frozen=True)
class BlockSlot:
    """Where a named block lives inside the flat vector."""
    start: int
    stop: int
    shape: Tuple[int, ...]


@dataclass(frozen=True)
class ParamVector:
    """
    Flat float64 vector plus a registry mapping block names to slices.

    The slices partition the vector in registration order.
    """
    values: np.ndarray
    slots: Mapping[str, BlockSlot] = field(default_factory=OrderedDict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ContractViolationError("parameter vector must be 1-D")
        if not np.all(np.isfinite(values)):
            raise ContractViolationError("parameter vector contains non-finite values")
        cursor = 0
        for name, slot in self.slots.items():
            if slot.start != cursor or slot.stop - slot.start != int(np.prod(slot.shape)):
                raise ContractViolationError(f"block '{name}' does not partition the vector")
            cursor = slot.stop
        if cursor != values.size:
            raise ContractViolationError("blocks do not cover the parameter vector")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_blocks(cls, blocks: Mapping[str, np.ndarray]) -> "ParamVector":
        """Concatenate named arrays into one vector, keeping their order."""
        slots = OrderedDict()
        chunks = []
        cursor = 0
        for name, array in blocks.items():
            array = np.asarray(array, dtype=np.float64)
            slots[name] = BlockSlot(cursor, cursor + array.size, array.shape)
            cursor += array.size
            chunks.append(array.ravel())
        values = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(values, slots)

    @property
    def size(self) -> int:
        return self.values.size

    def names(self) -> Iterable[str]:
        return self.slots.keys()

    def slice_of(self, name: str) -> slice:
        slot = self._slot(name)
        return slice(slot.start, slot.stop)

    def block(self, name: str) -> np.ndarray:
        """Copy of a block in its registered shape."""
        slot = self._slot(name)
        return self.values[slot.start:slot.stop].reshape(slot.shape).copy()

    def view(self, flat: Union[Tensor, np.ndarray]) -> Dict[str, Union[Tensor, np.ndarray]]:
        """Split a (possibly traced) flat vector into its shaped blocks."""
        out = {}
        for name, slot in self.slots.items():
            out[name] = reshape(getitem(flat, slice(slot.start, slot.stop)), slot.shape)
        return out

    def with_values(self, values: np.ndarray) -> "ParamVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ContractViolationError(
                "shape mismatch", expected=list(self.values.shape), got=list(values.shape)
            )
        return ParamVector(values, self.slots)

    def replace_block(self, name: str, array: np.ndarray) -> "ParamVector":
        slot = self._slot(name)
        values = self.values.copy()
        values[slot.start:slot.stop] = np.asarray(array, dtype=np.float64).ravel()
        return ParamVector(values, self.slots)

    def _slot(self, name: str) -> BlockSlot:
        try:
            return self.slots[name]
        except KeyError:
            raise ContractViolationError(f"unknown parameter block '{name}'")
