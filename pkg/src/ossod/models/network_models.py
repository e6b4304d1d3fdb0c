"""
Network parameter models.

A one-hidden-layer ReLU softmax network and the paired EMA teacher/student
parameter sets. Parameter values are immutable: training produces new values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from ..exceptions import NumericalError

PARAM_NAMES = ("W1", "b1", "W2", "b2")


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ClassifierParams:
    """Weights of ``logits = W2 @ relu(W1 @ x + b1) + b2``.

    ``W1`` is H x d, ``b1`` has H entries, ``W2`` is C x H and ``b2`` has C entries.
    The same container carries gradients, which share the parameter shapes.
    """
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        for name in PARAM_NAMES:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.W1.ndim != 2 or self.W2.ndim != 2 or self.b1.ndim != 1 or self.b2.ndim != 1:
            raise ValueError("W1, W2 must be matrices and b1, b2 vectors")
        hidden = self.W1.shape[0]
        if self.b1.shape != (hidden,) or self.W2.shape[1] != hidden:
            raise ValueError(
                f"hidden width mismatch: W1 {self.W1.shape}, b1 {self.b1.shape}, W2 {self.W2.shape}"
            )
        if self.b2.shape != (self.W2.shape[0],):
            raise ValueError(f"output width mismatch: W2 {self.W2.shape}, b2 {self.b2.shape}")
        if not all(np.all(np.isfinite(array)) for array in self.arrays()):
            raise NumericalError("parameters must be finite")

    @property
    def n_inputs(self) -> int:
        return int(self.W1.shape[1])

    @property
    def n_hidden(self) -> int:
        return int(self.W1.shape[0])

    @property
    def n_outputs(self) -> int:
        return int(self.W2.shape[0])

    @property
    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(array.shape for array in self.arrays())

    def arrays(self) -> Iterator[np.ndarray]:
        yield from (self.W1, self.b1, self.W2, self.b2)

    def map(
        self, fn: Callable[..., np.ndarray], *others: "ClassifierParams"
    ) -> "ClassifierParams":
        """Apply ``fn`` entry-wise across this and ``others`` (which must share shapes)."""
        for other in others:
            if other.shapes != self.shapes:
                raise ValueError(f"shape mismatch: {self.shapes} vs {other.shapes}")
        return ClassifierParams(
            *(fn(*group) for group in zip(self.arrays(), *(o.arrays() for o in others)))
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([array.ravel() for array in self.arrays()])

    def equals(self, other: "ClassifierParams") -> bool:
        """Bit-exact equality."""
        return self.shapes == other.shapes and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )

    @classmethod
    def zeros_like(cls, other: "ClassifierParams") -> "ClassifierParams":
        return cls(*(np.zeros_like(array) for array in other.arrays()))


@dataclass(frozen=True)
class TeacherStudent:
    """EMA teacher and SGD student sharing one architecture."""
    teacher: ClassifierParams
    student: ClassifierParams
    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.teacher.shapes != self.student.shapes:
            raise ValueError("teacher and student shapes differ")


@dataclass(frozen=True)
class ForwardResult:
    """Logits and the hidden activation that produced them."""
    logits: np.ndarray
    hidden: np.ndarray
