"""One local block-diagonalization step.

Builds the already-diagonal local operator G and its vacuum energy E, the
anti-Hermitian generator series S = sum_j t^j S_j, and the transformed
block-diagonal potential sum_j t^{j-1} (V)_j^diag, with a truncation
certificate from the recursive majorant sequence B_j.

The order-j coefficients are the nested-commutator composition sums

  (V)_j = sum_{p>=2} (1/p!) sum_{r_1+..+r_p=j}   ad S_{r_1}(... ad S_{r_p}(G))
        + sum_{p>=1} (1/p!) sum_{r_1+..+r_p=j-1} ad S_{r_1}(... ad S_{r_p}(V)),

evaluated through a two-table dynamic program over (chain length, order).
The outermost commutator index is r_1; all parts are at most j-1, so each
order only consumes generators already built.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .geometry import Rect
from .tensor import LocalOp, diag_part, offdiag_norm, op_norm

GAP_FLOOR = 0.5
GAP_WARN = 0.25
INNER_OD_TOL = 1e-9
GP_MINUS_TOL = 1e-10
EMPIRICAL_TAIL_SAFETY = 2.0


class ConvergenceError(RuntimeError):
    """Raised when the step series shows no usable convergence."""


class GapError(RuntimeError):
    """Raised when an already-diagonal local operator loses its gap."""


@lru_cache(maxsize=1)
def majorant_constant() -> float:
    """Root of (e^{8a} - 8a - 1)/a + e^{8a} - 1 = 1, bracketed to 1e-15."""

    def f(a: float) -> float:
        return (np.exp(8 * a) - 8 * a - 1) / a + np.exp(8 * a) - 2.0

    return float(brentq(f, 1e-8, 1.0, xtol=1e-15, rtol=8.9e-16))


@dataclass
class MajorantSeries:
    """Recursive majorants B_j for the step series and their convergence data."""

    a: float
    b: list[float]
    v1_norm: float
    radius_lower_bound: float

    def tail(self, t: float, j_max: int) -> float:
        """Upper bound for sum_{j>j_max} t^{j-1} B_j (requires t below the radius).

        Terms are advanced through the coefficient ratio
        B_{j+1}/B_j = (2(2j-1)/(j+1)) B_1/a, which stays below 4 B_1/a, so
        neither the coefficients nor the powers are formed explicitly.
        """
        t = abs(t)
        rho = 4.0 * self.v1_norm * t / self.a
        if rho >= 1.0:
            raise ConvergenceError(
                f"coupling t={t} is outside the certified region "
                f"t < {self.radius_lower_bound:.6g}"
            )
        j = j_max + 1
        while len(self.b) < j:
            n = len(self.b) + 1
            self.b.append(
                sum(self.b[n - l - 1] * self.b[l - 1] for l in range(1, n)) / self.a
            )
        term = t ** (j - 1) * self.b[j - 1]
        total = 0.0
        while True:
            total += term
            rest = term * rho / (1.0 - rho)
            if rest <= 1e-300 + 1e-16 * total:
                return total + rest
            term *= 2.0 * (2 * j - 1) / (j + 1) * self.v1_norm / self.a * t
            j += 1


def majorants(v1_norm: float, j_max: int) -> MajorantSeries:
    """B_1 = ||v1||, B_j = (1/a) sum_{l<j} B_{j-l} B_l, plus the radius a/(4 B_1)."""
    if v1_norm <= 0:
        raise ValueError("v1_norm must be positive")
    a = majorant_constant()
    b = [v1_norm]
    for _ in range(2, j_max + 2):
        j = len(b) + 1
        b.append(sum(b[j - l - 1] * b[l - 1] for l in range(1, j)) / a)
    return MajorantSeries(a=a, b=b, v1_norm=v1_norm, radius_lower_bound=a / (4 * v1_norm))


@dataclass
class StepOperators:
    """Everything produced by one local block-diagonalization step."""

    rect: Rect
    g: LocalOp
    e0: float
    s_terms: list[np.ndarray]
    v_terms: list[np.ndarray]
    s_total: LocalOp
    v_diag_total: LocalOp
    tail_bound: float
    tail_certified: bool
    gap: float
    v1_norm: float
    term_norms: list[float] = field(default_factory=list)
    majorant: MajorantSeries | None = None
    unitary: np.ndarray | None = None
    od_residual: float = 0.0
    spectrum_drift: float = 0.0


def _commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def adjoint_power(A: LocalOp | np.ndarray, B: LocalOp | np.ndarray, n: int) -> np.ndarray:
    """Iterated commutator: n = 1 gives [A, B]."""
    if n < 1:
        raise ValueError("adjoint power needs n >= 1")
    a = A.matrix if isinstance(A, LocalOp) else np.asarray(A)
    b = B.matrix if isinstance(B, LocalOp) else np.asarray(B)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    out = b
    for _ in range(n):
        out = _commutator(a, out)
    return out


def assemble_g(
    J: Rect, interactions: dict[Rect, LocalOp], t: float
) -> tuple[LocalOp, float]:
    """Already-diagonal local operator on J: on-site terms plus every strictly
    smaller stored potential, with its vacuum energy."""
    from .tensor import embed  # local import to keep module init light

    inner = [(key, op) for key, op in interactions.items() if J.contains(key) and key != J]
    if not inner:
        raise ValueError(f"no on-site terms found inside {J}; interaction map is incomplete")
    M = inner[0][1].M
    dim = M**J.n_sites
    total = np.zeros((dim, dim), dtype=complex)
    for key, op in inner:
        if key.circumference >= 1:
            od = offdiag_norm(op.matrix)
            if od > INNER_OD_TOL:
                raise GapError(
                    f"inner potential on {key} not yet diagonalized "
                    f"(off-block norm {od:.3g})"
                )
            total += t * embed(op, J).matrix
        else:
            total += embed(op, J).matrix
    e0 = float(total[0, 0].real)
    col = total[:, 0].copy()
    col[0] -= e0
    if np.linalg.norm(col) > GP_MINUS_TOL or abs(total[0, 0].imag) > GP_MINUS_TOL:
        raise GapError(
            f"local operator on {J} does not fix the vacuum vector "
            f"(residual {np.linalg.norm(col):.3g})"
        )
    return LocalOp(J, total, M), e0


def check_g_gap(g: LocalOp, e0: float, J: Rect) -> float:
    """Spectral gap of the excited block above the vacuum energy.

    This is a report, not an assertion: negative values are returned.
    """
    sub = g.matrix[1:, 1:]
    w = np.linalg.eigvalsh(sub)
    return float(w[0] - e0)


def _series_tail(
    term_norms: list[float], t: float, maj: MajorantSeries, j_max: int
) -> tuple[float, bool]:
    """Truncation tail: the exact majorant sum when t is inside the certified
    region, otherwise a geometric extrapolation of the computed terms."""
    t = abs(t)
    rho = 4.0 * maj.v1_norm * t / maj.a
    if rho < 1.0:
        return maj.tail(t, j_max), True
    if j_max < 2:
        raise ConvergenceError(
            "coupling outside certified convergence region and j_max < 2 "
            "leaves nothing to extrapolate a tail from"
        )
    tau = [t ** (j - 1) * nrm for j, nrm in enumerate(term_norms, start=1)]
    nonzero = [(j, v) for j, v in enumerate(tau, start=1) if v > 1e-300]
    if len(nonzero) <= 1:
        # every computed higher order vanished identically
        return 0.0, True
    window = nonzero[-5:]
    ratios = []
    for (ja, va), (jb, vb) in zip(window, window[1:]):
        ratios.append((vb / va) ** (1.0 / (jb - ja)))
    r = max(ratios)
    if r >= 1.0:
        raise ConvergenceError(
            "coupling outside certified convergence region: step series terms "
            f"are not decaying (observed ratio {r:.3g} at t={t})"
        )
    j_last, tau_last = window[-1]
    gap_to_tail = j_max + 1 - j_last
    tail = tau_last * r**gap_to_tail / (1.0 - r) * EMPIRICAL_TAIL_SAFETY
    return tail, False


def lie_schwinger_series(
    J: Rect,
    g: LocalOp,
    e0: float,
    v1: LocalOp,
    t: float,
    j_max: int = 12,
) -> StepOperators:
    """Generator series and transformed block-diagonal potential for one step."""
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    if g.matrix.shape != v1.matrix.shape:
        raise ValueError("g and v1 must live on the same support")
    gap = check_g_gap(g, e0, J)
    if gap < GAP_WARN:
        warnings.warn(
            f"gap degradation on {J}: excited block starts {gap:.3g} above the "
            "vacuum energy"
        )
    G = g.matrix
    dim = G.shape[0]
    sub = G[1:, 1:]
    w, U = np.linalg.eigh(sub)
    inv = U @ np.diag(1.0 / (w - e0)) @ U.conj().T
    resolvent = np.zeros((dim, dim), dtype=complex)
    resolvent[1:, 1:] = inv

    v1_norm = op_norm(v1)
    maj = majorants(v1_norm, j_max) if v1_norm > 0 else None

    s_terms: list[np.ndarray] = []
    v_terms: list[np.ndarray] = []
    term_norms: list[float] = []
    # chain tables: g_tab[p, m] (v_tab[p, m]) holds the sum over compositions
    # r_1+..+r_p = m of ad S_{r_1}(.. ad S_{r_p}(G)) (of v1), r_1 outermost
    g_tab: dict[tuple[int, int], np.ndarray] = {}
    v_tab: dict[tuple[int, int], np.ndarray] = {(0, 0): v1.matrix}

    def g_chain(p: int, m: int) -> np.ndarray:
        if p == 1:
            return _commutator(s_terms[m - 1], G)
        if (p, m) not in g_tab:
            acc = np.zeros((dim, dim), dtype=complex)
            for r in range(1, m - p + 2):
                acc += _commutator(s_terms[r - 1], g_chain(p - 1, m - r))
            g_tab[(p, m)] = acc
        return g_tab[(p, m)]

    def v_chain(p: int, m: int) -> np.ndarray:
        if p == 0:
            return v_tab[(0, 0)] if m == 0 else np.zeros((dim, dim), dtype=complex)
        if (p, m) not in v_tab:
            acc = np.zeros((dim, dim), dtype=complex)
            for r in range(1, m - p + 2):
                acc += _commutator(s_terms[r - 1], v_chain(p - 1, m - r))
            v_tab[(p, m)] = acc
        return v_tab[(p, m)]

    v_diag = np.zeros((dim, dim), dtype=complex)
    s_total = np.zeros((dim, dim), dtype=complex)
    fact = [factorial(p) for p in range(j_max + 1)]
    for j in range(1, j_max + 1):
        if j == 1:
            vj = v1.matrix.copy()
        else:
            vj = np.zeros((dim, dim), dtype=complex)
            for p in range(2, j + 1):
                vj += g_chain(p, j) / fact[p]
            for p in range(1, j):
                vj += v_chain(p, j - 1) / fact[p]
        v_terms.append(vj)
        term_norms.append(float(np.linalg.norm(vj, 2)))
        x = np.zeros((dim, dim), dtype=complex)
        x[:, 0] = resolvent @ vj[:, 0]
        sj = x - x.conj().T
        s_terms.append(sj)
        v_diag += t ** (j - 1) * diag_part(vj)
        s_total += t**j * sj
    g_tab.clear()
    v_tab.clear()

    if maj is not None:
        tail_bound, certified = _series_tail(term_norms, t, maj, j_max)
    else:
        tail_bound, certified = 0.0, True

    unitary = expm(s_total)
    local = G + t * v1.matrix
    conj = unitary @ local @ unitary.conj().T
    od_res = offdiag_norm(conj)
    drift = float(
        np.max(np.abs(np.linalg.eigvalsh(conj) - np.linalg.eigvalsh(local)))
    )
    return StepOperators(
        rect=J,
        g=g,
        e0=e0,
        s_terms=s_terms,
        v_terms=v_terms,
        s_total=LocalOp(J, s_total, v1.M),
        v_diag_total=LocalOp(J, v_diag, v1.M),
        tail_bound=tail_bound,
        tail_certified=certified,
        gap=gap,
        v1_norm=v1_norm,
        term_norms=term_norms,
        majorant=maj,
        unitary=unitary,
        od_residual=od_res,
        spectrum_drift=drift,
    )
