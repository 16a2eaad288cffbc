"""Two-sided bound tying lambda_N(D(s)) to the Ising energy H(s).

    max(0, 2H/N) <= lambda_N(D(s)) <= (2 + 2 r) / N * H(s) + c r,
    r = sqrt((kappa N - 1)(N - 1)),

where c exceeds -2H(s)/N for every state and kappa is the largest
tr(Dhat^2) / tr(Dhat)^2 with Dhat = D + c I.  The lower half needs no
constants: the rows of D sum to zero and tr D = 2H.  The upper half is the
Wolkowicz-Styan trace bound applied to Dhat.

Per-state traces come cheaply from tr(D) = -s'Js and tr(D^2) = ||J||_F^2 + ||Js||^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from oimstab.landscape import (
    EXHAUSTIVE_LIMIT,
    OverLimitError,
    enumerate_canonical,
    lambda_max_of_states,
)
from oimstab.model import as_coupling, as_spins, hamiltonian

CHECK_TOL = 1e-9


@dataclass(frozen=True)
class BoundConstants:
    c: float
    kappa: float
    d: float
    mode: str  # "exhaustive" or "analytic-bound"
    n: int

    @property
    def ratio(self) -> float:
        return float(np.sqrt(max(self.kappa * self.n - 1.0, 0.0) * (self.n - 1.0)))

    @property
    def heuristic(self) -> bool:
        return self.mode != "exhaustive"


def _delta(j: np.ndarray) -> float:
    return 1e-6 * max(1.0, float(np.abs(np.triu(j, 1)).sum()))


def _trace_stats(j: np.ndarray, states: np.ndarray):
    """(tr D, tr D^2) per state, vectorized."""
    sf = states.astype(np.float64)
    js = sf @ j
    tr_d = -np.einsum("ri,ri->r", sf, js)
    tr_d2 = float(np.sum(j * j)) + np.einsum("ri,ri->r", js, js)
    return tr_d, tr_d2


def _kappa(n: int, c: float, tr_d: np.ndarray, tr_d2: np.ndarray) -> float:
    tr_hat = tr_d + n * c
    tr_hat2 = tr_d2 + 2.0 * c * tr_d + n * c * c
    return float(np.max(tr_hat2 / (tr_hat * tr_hat)))


def _canonical_chunks(n: int, chunk: int = 1 << 16):
    total = 1 << (n - 1)
    weights = np.int64(1) << np.arange(n - 1, dtype=np.int64)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        states = np.ones((codes.size, n), dtype=np.int8)
        states[:, 1:] = 1 - 2 * ((codes[:, None] & weights) != 0)
        yield states


def bound_constants(j, mode: str = "exhaustive", states=None,
                    limit: int = EXHAUSTIVE_LIMIT) -> BoundConstants:
    """Constants c, kappa, d.

    ``exhaustive`` scans all 2^(N-1) canonical states.  ``analytic-bound``
    uses the ceiling c = 4 sum_{i<j}|J_ij| / N + delta (valid because
    |H| <= sum_{i<j}|J_ij|) and estimates kappa over ``states`` only, so the
    resulting upper bound is heuristic.
    """
    j = as_coupling(j)
    n = j.shape[0]
    delta = _delta(j)
    if mode == "exhaustive":
        if n > limit:
            raise OverLimitError(f"exhaustive constants limited to N <= {limit}, got N={n}")
        tr_min = np.inf
        for chunk in _canonical_chunks(n):
            tr_d, _ = _trace_stats(j, chunk)
            tr_min = min(tr_min, float(tr_d.min()))
        # tr D = 2H, so max(-2H/N) = -min(tr D)/N
        c = -tr_min / n + delta
        kappa = 0.0
        for chunk in _canonical_chunks(n):
            tr_d, tr_d2 = _trace_stats(j, chunk)
            kappa = max(kappa, _kappa(n, c, tr_d, tr_d2))
    elif mode == "analytic-bound":
        if states is None:
            raise ValueError("analytic-bound mode needs sample states to estimate kappa")
        states = np.atleast_2d(np.asarray(states, dtype=np.int8))
        c = (2.0 / n) * float(np.abs(np.triu(j, 1)).sum()) * 2.0 + delta
        tr_d, tr_d2 = _trace_stats(j, states)
        kappa = _kappa(n, c, tr_d, tr_d2)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    ratio = np.sqrt(max(kappa * n - 1.0, 0.0) * (n - 1.0))
    return BoundConstants(c=float(c), kappa=float(kappa), d=float(c * ratio), mode=mode, n=n)


def _bounds_from(h, n: int, k: BoundConstants):
    lower = np.maximum(0.0, 2.0 * h / n)
    # (2 + 2r)/N H + c r rearranged; 2H/N + c is tiny near the argmin state
    upper = 2.0 * h / n + k.ratio * (2.0 * h / n + k.c)
    return lower, upper


def check_state_bound(j, s, k: BoundConstants, lam: float | None = None):
    """(lower, lambda_N, upper, holds) for a single state."""
    j = as_coupling(j)
    s = as_spins(s, j.shape[0])
    n = j.shape[0]
    if k.n != n:
        raise ValueError(f"constants computed for N={k.n}, state has N={n}")
    h = hamiltonian(j, s)
    if not k.c > -2.0 * h / n:
        raise ValueError(f"invalid constants: c={k.c} does not exceed -2H/N={-2.0 * h / n}")
    if k.kappa * n < 1.0 - 1e-12:
        raise ValueError(f"invalid constants: kappa={k.kappa} below 1/N")
    if lam is None:
        lam = float(lambda_max_of_states(j, s[None, :])[0])
    lower, upper = _bounds_from(np.float64(h), n, k)
    holds = lower <= lam + CHECK_TOL and lam <= upper + CHECK_TOL
    return float(lower), float(lam), float(upper), bool(holds)


@dataclass(frozen=True)
class BoundReport:
    constants: BoundConstants
    states_checked: int
    lower_violations: int
    upper_violations: int
    worst_lower_slack: float
    worst_upper_slack: float

    @property
    def violations(self) -> int:
        return self.lower_violations + self.upper_violations

    def to_dict(self) -> dict:
        k = self.constants
        return {
            "n": k.n,
            "mode": k.mode,
            "c": k.c,
            "kappa": k.kappa,
            "d": k.d,
            "heuristic": k.heuristic,
            "states_checked": self.states_checked,
            "violations": self.violations,
            "lower_violations": self.lower_violations,
            "upper_violations": self.upper_violations,
            "worst_lower_slack": self.worst_lower_slack,
            "worst_upper_slack": self.worst_upper_slack,
        }


def verify_bounds(j, mode: str = "exhaustive", states=None,
                  limit: int = EXHAUSTIVE_LIMIT) -> BoundReport:
    """Check both inequalities for every canonical state (exhaustive mode) or
    for the given ``states`` (analytic-bound mode)."""
    j = as_coupling(j)
    n = j.shape[0]
    k = bound_constants(j, mode=mode, states=states, limit=limit)
    if mode == "exhaustive":
        h, lam = enumerate_canonical(j, limit=limit)
    else:
        states = np.atleast_2d(np.asarray(states, dtype=np.int8))
        h = -0.5 * np.einsum("ri,ij,rj->r", states.astype(float), j, states.astype(float))
        lam = lambda_max_of_states(j, states)
    lower, upper = _bounds_from(h, n, k)
    lo_slack = lam - lower
    up_slack = upper - lam
    return BoundReport(
        constants=k,
        states_checked=int(h.size),
        lower_violations=int(np.sum(lo_slack < -CHECK_TOL)),
        upper_violations=int(np.sum(up_slack < -CHECK_TOL)),
        worst_lower_slack=float(lo_slack.min()),
        worst_upper_slack=float(up_slack.min()),
    )


@dataclass(frozen=True, eq=False)
class CorrelationReport:
    h: np.ndarray
    lam: np.ndarray
    pearson: float | None


def correlation_report(j, states=None) -> CorrelationReport:
    """(H, lambda_N) pairs for ``states`` (all canonical states if None) and
    their Pearson coefficient; ``pearson`` is None when either side is
    constant or fewer than two points exist."""
    j = as_coupling(j)
    if states is None:
        h, lam = enumerate_canonical(j)
    else:
        states = np.atleast_2d(np.asarray(states, dtype=np.int8))
        h = -0.5 * np.einsum("ri,ij,rj->r", states.astype(float), j, states.astype(float))
        lam = lambda_max_of_states(j, states)
    pearson = None
    if h.size >= 2 and np.ptp(h) > 0 and np.ptp(lam) > 0:
        pearson = float(np.corrcoef(h, lam)[0, 1])
    return CorrelationReport(h=h, lam=lam, pearson=pearson)

