"""Saltelli design, first/total-order Sobol' estimators and robustness scores."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateOutput, DomainError

DEFAULT_N_BASE = 25


@dataclass(frozen=True)
class SaltelliDesign:
    """A/B/AB_i sample matrices for ``m_factors`` inputs on [0, 1].

    ``rows`` lists ``(kind, point)`` grouped by base sample ``j``:
    ``A_j, AB_1j, ..., AB_Mj, B_j``, so there are ``n_base * (m_factors + 2)``.
    """

    n_base: int
    m_factors: int
    seed: int
    A: np.ndarray
    B: np.ndarray

    @property
    def AB(self):
        """Array (M, N, M); ``AB[i]`` is A with column i taken from B."""
        ab = np.repeat(self.A[None, :, :], self.m_factors, axis=0)
        for i in range(self.m_factors):
            ab[i, :, i] = self.B[:, i]
        return ab

    @property
    def rows(self):
        ab = self.AB
        out = []
        for j in range(self.n_base):
            out.append(("A", self.A[j]))
            for i in range(self.m_factors):
                out.append((f"AB_{i + 1}", ab[i, j]))
            out.append(("B", self.B[j]))
        return out

    def __len__(self):
        return self.n_base * (self.m_factors + 2)

    def row_index(self, kind, j):
        """Position of ``(kind, j)`` in :attr:`rows`."""
        block = self.m_factors + 2
        if kind == "A":
            k = 0
        elif kind == "B":
            k = block - 1
        else:
            k = int(kind.split("_")[1])
        return j * block + k

    def split_outputs(self, y):
        """Regroup outputs listed in row order into (y_A, y_B, y_AB)."""
        y = np.asarray(y, dtype=np.float64).reshape(self.n_base, self.m_factors + 2)
        return y[:, 0].copy(), y[:, -1].copy(), y[:, 1:-1].T.copy()


def build_saltelli_design(n_base=DEFAULT_N_BASE, m_factors=4, seed=0):
    """Draw A and B from one scrambled Sobol' sequence in [0, 1]^(2M)."""
    if n_base < 2:
        raise DomainError(f"n_base must be >= 2, got {n_base}")
    if m_factors < 1:
        raise DomainError(f"m_factors must be >= 1, got {m_factors}")
    sampler = qmc.Sobol(d=2 * m_factors, scramble=True, seed=np.random.default_rng(seed))
    with warnings.catch_warnings():
        # non power-of-two N loses the balance property; accepted for N=25
        warnings.simplefilter("ignore", UserWarning)
        base = sampler.random(n_base)
    return SaltelliDesign(
        n_base=int(n_base), m_factors=int(m_factors), seed=int(seed),
        A=base[:, :m_factors].copy(), B=base[:, m_factors:].copy(),
    )


@dataclass(frozen=True)
class SobolIndices:
    s1: np.ndarray
    st: np.ndarray
    output_name: str = "Y"
    n_base: int = 0
    degenerate: bool = False

    def as_dict(self, factor_names=None):
        names = factor_names or [f"x{i + 1}" for i in range(len(self.s1))]
        return {
            name: {"s1": float(a), "st": float(b)}
            for name, a, b in zip(names, self.s1, self.st)
        }


@dataclass(frozen=True)
class RobustnessScores:
    p_var: float
    p_inter: float


def estimate_sobol(y_A, y_B, y_AB, output_name="Y", strict=False):
    """Saltelli (2010) first-order and Jansen total-order estimates.

    Parameters
    ----------
    y_A, y_B : array (N,)
        Model outputs on the A and B matrices.
    y_AB : array (M, N)
        ``y_AB[i]`` holds outputs on A with column i replaced from B.
    strict : bool
        Raise :class:`DegenerateOutput` on zero variance instead of returning
        all-zero indices with ``degenerate=True``.

    Estimates are returned raw: they can be slightly negative or exceed 1.
    """
    y_A = np.asarray(y_A, dtype=np.float64)
    y_B = np.asarray(y_B, dtype=np.float64)
    y_AB = np.atleast_2d(np.asarray(y_AB, dtype=np.float64))
    n = y_A.shape[0]
    if y_B.shape != (n,) or y_AB.shape[1] != n:
        raise DomainError(f"inconsistent output shapes {y_A.shape}, {y_B.shape}, {y_AB.shape}")
    m = y_AB.shape[0]
    var = float(np.var(np.concatenate([y_A, y_B]), ddof=1))
    if not np.isfinite(var):
        raise DomainError("non-finite model outputs")
    if var <= 0.0:
        if strict:
            raise DegenerateOutput(f"output {output_name!r} has zero variance")
        zeros = np.zeros(m)
        return SobolIndices(zeros, zeros.copy(), output_name, n, degenerate=True)
    s1 = np.mean(y_B[None, :] * (y_AB - y_A[None, :]), axis=1) / var
    st = 0.5 * np.mean((y_A[None, :] - y_AB) ** 2, axis=1) / var
    return SobolIndices(s1, st, output_name, n)


def robustness_scores(indices):
    """``p_var = 1 - sum|S1_i - 1/M|`` and ``p_inter = sum(ST_i - S1_i)``."""
    s1 = np.asarray(indices.s1, dtype=np.float64)
    st = np.asarray(indices.st, dtype=np.float64)
    m = s1.shape[0]
    p_var = 1.0 - float(np.sum(np.abs(s1 - 1.0 / m)))
    p_inter = float(np.sum(st - s1))
    return RobustnessScores(p_var, p_inter)


def sobol_analysis(model, design, output_name="Y"):
    """Evaluate ``model`` (vectorized over rows of an (n, M) array) on a design
    and estimate its indices."""
    y_A = np.asarray(model(design.A), dtype=np.float64)
    y_B = np.asarray(model(design.B), dtype=np.float64)
    y_AB = np.stack([np.asarray(model(block), dtype=np.float64) for block in design.AB])
    return estimate_sobol(y_A, y_B, y_AB, output_name=output_name)
