"""Problem data: coefficient records, hypothesis checks, exponential shift.

A coefficient set bundles the driver f, the backward-noise coefficient g, the
boundary reaction h, the terminal map l and the forward-diffusion pair
(b, sigma), together with their declared structural constants:

* K      - linear growth constant,
* c      - squared Lipschitz constant of f (and of g in y),
* alpha  - the z-contraction weight of g, 0 < alpha < 1,
* beta1  - Lipschitz constant of h in y.

All callables are vectorized over a leading scenario axis:
f(t, x, y, z) -> (S, n), g(t, x, y, z) -> (S, n, d), h(t, x, y) -> (S, n),
l(x) -> (S,), b(x) -> (S, m), sigma(x) -> (S, m, d), with x of shape (S, m)
or None for problems without a spatial component.

The hypotheses are assumptions, not theorems about user input, so they are
checked empirically: sampled argument pairs in a box, worst observed ratio
against the declared constant, and a concrete witness on failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grids import TimeGrid

Coefficient = Callable[..., np.ndarray]


def constant_envelope(value: float = 1.0) -> Callable[[float], float]:
    def env(t: float) -> float:
        return value

    return env


@dataclass(frozen=True)
class CoefficientSet:
    """Full problem data with declared constants."""

    n: int
    d: int
    f: Coefficient
    g: Coefficient
    h: Coefficient
    K: float
    c: float
    alpha: float
    beta1: float
    l: Coefficient | None = None
    b: Coefficient | None = None
    sigma: Coefficient | None = None
    x_dim: int | None = None
    f_env: Callable[[float], float] = field(default_factory=constant_envelope)
    g_env: Callable[[float], float] = field(default_factory=constant_envelope)
    h_env: Callable[[float], float] = field(default_factory=constant_envelope)
    beta2: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        for name, val in (("K", self.K), ("c", self.c), ("beta1", self.beta1)):
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"constant {name} must be positive and finite, got {val}")
        if self.n < 1 or self.d < 1:
            raise ValueError("dimensions n, d must be >= 1")


@dataclass(frozen=True)
class SamplingPlan:
    """Box and budget for empirical hypothesis checks."""

    box_halfwidth: float = 5.0
    count: int = 10_000
    seed: int = 7
    t_max: float = 1.0
    mu_values: tuple[float, ...] = (1.0, 5.0, 10.0)


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst_ratio: float
    bound: float
    witness: dict | None = None


@dataclass
class HypothesisReport:
    checks: list[HypothesisCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _ratio_check(
    name: str,
    numer: np.ndarray,
    denom: np.ndarray,
    bound: float,
    witness_args: dict,
    tol: float = 1e-12,
) -> HypothesisCheck:
    """Worst numer/denom over samples where denom > 0, compared to bound."""
    if not np.all(np.isfinite(numer)):
        bad = int(np.argmax(~np.isfinite(numer)))
        return HypothesisCheck(
            name, False, math.inf, bound,
            witness={k: np.asarray(v)[bad].tolist() for k, v in witness_args.items()},
        )
    mask = denom > 0
    if not np.any(mask):
        return HypothesisCheck(name, True, 0.0, bound)
    ratios = np.where(mask, numer / np.where(mask, denom, 1.0), 0.0)
    worst = int(np.argmax(ratios))
    ratio = float(ratios[worst])
    ok = ratio <= bound * (1 + tol) + tol
    witness = None
    if not ok:
        witness = {k: np.asarray(v)[worst].tolist() for k, v in witness_args.items()}
        witness["ratio"] = ratio
    return HypothesisCheck(name, ok, ratio, bound, witness)


def validate_hypotheses(
    coeffs: CoefficientSet,
    plan: SamplingPlan | None = None,
    k_path: np.ndarray | None = None,
    grid: TimeGrid | None = None,
) -> HypothesisReport:
    """Empirical falsification harness for the structural hypotheses.

    Samples (t, x, y, z) tuples and pairs inside the plan's box and reports,
    per inequality, the maximal observed ratio against the declared constant.
    The exponential integrability condition is evaluated for each mu in the
    plan against the supplied k path (default: k_t = t on [0, t_max]).
    """
    plan = plan or SamplingPlan()
    rng = np.random.Generator(np.random.Philox(key=np.array([plan.seed, 11], dtype=np.uint64)))
    S = plan.count
    hw = plan.box_halfwidth
    n, dd = coeffs.n, coeffs.d
    m = coeffs.x_dim or 0

    t = rng.uniform(0.0, plan.t_max)
    x = rng.uniform(-hw, hw, size=(S, m)) if m else None
    y1 = rng.uniform(-hw, hw, size=(S, n))
    y2 = rng.uniform(-hw, hw, size=(S, n))
    z1 = rng.uniform(-hw, hw, size=(S, n, dd))
    z2 = rng.uniform(-hw, hw, size=(S, n, dd))

    def norm_y(y: np.ndarray) -> np.ndarray:
        return np.linalg.norm(y, axis=-1)

    def norm_z(z: np.ndarray) -> np.ndarray:
        return np.linalg.norm(z, axis=(-2, -1))

    checks: list[HypothesisCheck] = []
    f_t, g_t, h_t = coeffs.f_env(t), coeffs.g_env(t), coeffs.h_env(t)

    f1 = coeffs.f(t, x, y1, z1)
    g1 = coeffs.g(t, x, y1, z1)
    h1 = coeffs.h(t, x, y1)
    wit = {"t": np.full(S, t), "y": y1, "z": z1}

    # (H1) linear growth against the envelopes
    checks.append(_ratio_check(
        "H1_growth_f", norm_y(f1), f_t + coeffs.K * (norm_y(y1) + norm_z(z1)), 1.0, wit))
    checks.append(_ratio_check(
        "H1_growth_g", norm_z(g1), g_t + coeffs.K * (norm_y(y1) + norm_z(z1)), 1.0, wit))
    checks.append(_ratio_check(
        "H1_growth_h", norm_y(h1), h_t + coeffs.K * norm_y(y1), 1.0, wit))

    # (H1) exponential integrability of the envelopes for finitely many mu
    if grid is None:
        grid = TimeGrid(0.0, plan.t_max, 100)
    if k_path is None:
        k_path = grid.points - grid.t_start
    k_flat = np.atleast_2d(np.asarray(k_path, dtype=float))
    env_sq = np.array([coeffs.f_env(s) ** 2 for s in grid.points])
    for mu in plan.mu_values:
        integral = float(np.mean(
            np.sum(np.exp(mu * k_flat[:, :-1]) * env_sq[:-1] * grid.dt, axis=-1)))
        checks.append(HypothesisCheck(
            f"H1_integrability_mu_{mu:g}", np.isfinite(integral), integral, math.inf))

    # (H2)(i): squared Lipschitz bound for f in (y, z)
    f2 = coeffs.f(t, x, y2, z2)
    pair_wit = {"t": np.full(S, t), "y1": y1, "z1": z1, "y2": y2, "z2": z2}
    checks.append(_ratio_check(
        "H2_f_lipschitz",
        norm_y(f1 - f2) ** 2,
        norm_y(y1 - y2) ** 2 + norm_z(z1 - z2) ** 2,
        coeffs.c, pair_wit))

    # (H2)(ii): isolate the y- and z-ratios, then the joint inequality
    g_y2 = coeffs.g(t, x, y2, z1)
    checks.append(_ratio_check(
        "H2_g_y_ratio", norm_z(g1 - g_y2) ** 2, norm_y(y1 - y2) ** 2, coeffs.c, pair_wit))
    g_z2 = coeffs.g(t, x, y1, z2)
    checks.append(_ratio_check(
        "H2_g_z_ratio", norm_z(g1 - g_z2) ** 2, norm_z(z1 - z2) ** 2, coeffs.alpha, pair_wit))
    g_22 = coeffs.g(t, x, y2, z2)
    checks.append(_ratio_check(
        "H2_g_joint",
        norm_z(g1 - g_22) ** 2,
        coeffs.c * norm_y(y1 - y2) ** 2 + coeffs.alpha * norm_z(z1 - z2) ** 2,
        1.0, pair_wit))

    # (H2)(iii): one-sided Lipschitz bound for h
    h2 = coeffs.h(t, x, y2)
    checks.append(_ratio_check(
        "H2_h_lipschitz", norm_y(h1 - h2), norm_y(y1 - y2), coeffs.beta1, pair_wit))

    # (H'1) growth with the spatial argument, (H3), (H4): spatial problems only
    if m:
        x_norm = np.linalg.norm(x, axis=-1)
        checks.append(_ratio_check(
            "Hp1_growth_f", norm_y(f1),
            coeffs.K * (1.0 + norm_y(y1) + x_norm + norm_z(z1)), 1.0, wit))
        checks.append(_ratio_check(
            "Hp1_growth_h", norm_y(h1),
            coeffs.K * (1.0 + norm_y(y1) + x_norm), 1.0, wit))
        x2 = rng.uniform(-hw, hw, size=(S, m))
        dx = np.linalg.norm(x - x2, axis=-1)
        if coeffs.b is not None:
            checks.append(_ratio_check(
                "H3_b_lipschitz",
                np.linalg.norm(coeffs.b(x) - coeffs.b(x2), axis=-1),
                dx, coeffs.K, {"x1": x, "x2": x2}))
        if coeffs.sigma is not None:
            checks.append(_ratio_check(
                "H3_sigma_lipschitz",
                np.linalg.norm(coeffs.sigma(x) - coeffs.sigma(x2), axis=(-2, -1)),
                dx, coeffs.K, {"x1": x, "x2": x2}))
        if coeffs.l is not None:
            checks.append(_ratio_check(
                "H4_l_growth", np.abs(coeffs.l(x)), coeffs.K * (1.0 + x_norm),
                1.0, {"x": x}))

    return HypothesisReport(checks)


# ---------------------------------------------------------------------------
# Exponential shift (one-sided monotonisation of h)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValueTransform:
    """Bijection between original and shifted solution paths.

    forward maps (Y, Z) to (exp(rate k) Y, exp(rate k) Z); inverse undoes it.
    Paths are arrays (S, T+1, n) / (S, T+1, n, d); k is (T+1,) or (S, T+1).
    """

    rate: float

    def _factor(self, k: np.ndarray) -> np.ndarray:
        return np.exp(self.rate * np.atleast_2d(np.asarray(k, dtype=float)))

    def forward(self, y: np.ndarray, z: np.ndarray, k: np.ndarray):
        e = self._factor(k)
        return y * e[..., None], z * e[..., None, None]

    def inverse(self, y_bar: np.ndarray, z_bar: np.ndarray, k: np.ndarray):
        e = self._factor(k)
        return y_bar / e[..., None], z_bar / e[..., None, None]


def choose_shift_rate(beta1: float) -> float:
    """Shift rate beta1 + 1, which moves the one-sided constant to exactly -1."""
    if not np.isfinite(beta1):
        raise ValueError("beta1 must be finite")
    return beta1 + 1.0


def exponential_shift(
    coeffs: CoefficientSet,
    eta_rate: float,
    k_path: np.ndarray,
    grid: TimeGrid,
) -> tuple[CoefficientSet, ValueTransform]:
    """Shifted coefficient set and the solution bijection.

    The shifted data is f_bar(t,y,z) = e f(t, y/e, z/e), same for g, and
    h_bar(t,y) = e h(t, y/e) - eta_rate * y with e = exp(eta_rate * k_t); the
    pair (Y, Z) solves the original equation iff (eY, eZ) solves the shifted
    one.  The shifted one-sided constant is beta1 - eta_rate.
    """
    if eta_rate <= 0:
        raise ValueError("eta_rate must be > 0")
    k_arr = np.atleast_2d(np.asarray(k_path, dtype=float))
    if k_arr.shape[-1] != len(grid):
        raise ValueError("k path length does not match grid")
    if np.any(np.diff(k_arr, axis=-1) < -1e-12):
        raise ValueError("k path must be nondecreasing")
    if np.any(np.abs(k_arr[:, 0]) > 1e-12):
        raise ValueError("k path must start at 0")

    def factor_at(t: float, rows: int) -> np.ndarray:
        i = grid.index_of(t)
        col = np.exp(eta_rate * k_arr[:, i])
        if col.shape[0] == rows:
            return col
        if col.shape[0] == 1:
            return np.broadcast_to(col, (rows,))
        raise ValueError(
            f"k path has {col.shape[0]} scenarios but coefficients were called with {rows}")

    def f_bar(t, x, y, z):
        e = factor_at(t, y.shape[0])
        return e[:, None] * coeffs.f(t, x, y / e[:, None], z / e[:, None, None])

    def g_bar(t, x, y, z):
        e = factor_at(t, y.shape[0])
        return e[:, None, None] * coeffs.g(t, x, y / e[:, None], z / e[:, None, None])

    def h_bar(t, x, y):
        e = factor_at(t, y.shape[0])
        return e[:, None] * coeffs.h(t, x, y / e[:, None]) - eta_rate * y

    shifted = replace(
        coeffs, f=f_bar, g=g_bar, h=h_bar,
        beta1=coeffs.beta1 + eta_rate,  # two-sided Lipschitz constant of h_bar
        beta2=coeffs.beta1 - eta_rate,
    )
    return shifted, ValueTransform(rate=eta_rate)
