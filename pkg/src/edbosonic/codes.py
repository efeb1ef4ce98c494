"""Binomial code words and the logical frames built from them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import LogicalFrame
from .fockspace import E, F, G, HilbertDims, product_ket

_R2 = 1 / math.sqrt(2)


@dataclass(frozen=True)
class BinomialCode:
    """Code words (|0>+|4>)/sqrt2 and |2>; error words |3> and |1>."""

    mean_photons: float = 2.0

    @staticmethod
    def code_words() -> tuple[np.ndarray, np.ndarray]:
        return np.array([_R2, 0, 0, 0, _R2]), np.array([0, 0, 1.0])

    @staticmethod
    def error_words() -> tuple[np.ndarray, np.ndarray]:
        return np.array([0, 0, 0, 1.0]), np.array([0, 1.0])

    def cavity_words(self, dim: int, which: str = "code") -> np.ndarray:
        words = self.code_words() if which == "code" else self.error_words()
        out = np.zeros((dim, 2), complex)
        for k, w in enumerate(words):
            out[: len(w), k] = w
        return out

    def frame(self, dims: HilbertDims, which: str = "code", ancilla: int = G) -> LogicalFrame:
        words = self.code_words() if which == "code" else self.error_words()
        return LogicalFrame.from_kets([product_ket(dims, w, ancilla) for w in words])

    def no_jump_words(self, dim: int, kappa_tau: float) -> np.ndarray:
        """exp(-kappa tau a^dag a / 2) applied to the code words, normalised."""
        n = np.arange(dim)
        damp = np.exp(-kappa_tau * n / 2)
        words = self.cavity_words(dim) * damp[:, None]
        return words / np.linalg.norm(words, axis=0)


def fock_frame(dims: HilbertDims, levels=(0, 1), ancilla: int = G) -> LogicalFrame:
    return LogicalFrame.from_kets([product_ket(dims, np.eye(max(levels) + 1)[n], ancilla)
                                   for n in levels])


def two_mode_code_frame(dims: HilbertDims, code: BinomialCode | None = None) -> LogicalFrame:
    code = code or BinomialCode()
    w = code.code_words()
    return LogicalFrame.from_kets([product_ket(dims, w[i], G, cavity2=w[j])
                                   for i in range(2) for j in range(2)])
