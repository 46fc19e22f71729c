"""Randomized checks of the inequalities and identities relating the measures.

Each property maps a random trial to a signed violation; the property
passes when the largest violation over all trials is at most its tolerance.
Trial ``t`` of property ``p`` draws from ``default_rng([seed, p, t])`` and
cycles through the (size, alpha, mu) grid, so runs are reproducible and any
trial can be replayed on its own.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses
from .errors import NotPSD
from .measures import (
    _entropy,
    effective_rank,
    eigen_js,
    joint_entropy,
    matrix_js,
    matrix_kl,
    mutual_information,
    tcr,
)
from .spectral import (
    KernelMatrix,
    covariance_kernel,
    gram_kernel,
    hadamard,
    numerical_rank,
    psd_sanitize,
)

DEFAULT_SIZES = (2, 4, 8, 16)
DEFAULT_ALPHAS = (0.5, 1.0, 2.0)
DEFAULT_MUS = (0.5, 1.0, 3.0)


def random_kernel(rng: np.random.Generator, n: int, rank: int | None = None) -> KernelMatrix:
    """Unit-diagonal PSD kernel ``Z^T Z`` from ``rank`` x n Gaussian columns, normalized."""
    rank = int(rng.integers(1, n + 1)) if rank is None else rank
    z = rng.standard_normal((rank, n))
    z /= np.linalg.norm(z, axis=0)
    k = z.T @ z
    return psd_sanitize((k + k.T) / 2)


@dataclass
class Trial:
    rng: np.random.Generator
    n: int
    alpha: float
    mu: float


@dataclass
class Property:
    name: str
    description: str
    tolerance: float
    check: Callable[[Trial], float]


@dataclass
class PropertyResult:
    name: str
    description: str
    trials: int
    tolerance: float
    max_violation: float
    worst_case: dict
    breakdown: dict = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "description": self.description,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "max_violation": self.max_violation,
            "passed": self.passed,
            "worst_case": self.worst_case,
        }
        if self.breakdown:
            out["max_violation_by_alpha"] = self.breakdown
        if self.note:
            out["note"] = self.note
        return out


# ------------------------------------------------------------- properties


def _mi_bound(t):
    k1, k2 = random_kernel(t.rng, t.n), random_kernel(t.rng, t.n)
    return mutual_information(k1, k2, t.alpha).value - math.log(t.n)


def _rank_chain(t):
    k1, k2 = random_kernel(t.rng, t.n), random_kernel(t.rng, t.n)
    joint = hadamard(k1, k2)
    r12, r1, r2 = numerical_rank(joint), numerical_rank(k1), numerical_rank(k2)
    first = _entropy(joint, 1.0) - math.log(r12)
    second = math.log(r12) - math.log(r1) - math.log(r2)
    return max(first, second)


def _entropy_chain_lower(t):
    k1, k2 = random_kernel(t.rng, t.n), random_kernel(t.rng, t.n)
    h12 = joint_entropy(k1, k2, t.alpha).value
    return max(_entropy(k1, t.alpha), _entropy(k2, t.alpha)) - h12


def _entropy_chain_upper(t):
    k1, k2 = random_kernel(t.rng, t.n), random_kernel(t.rng, t.n)
    h12 = joint_entropy(k1, k2, t.alpha).value
    return h12 - _entropy(k1, t.alpha) - _entropy(k2, t.alpha)


def _entropy_kl_identity(t):
    k = random_kernel(t.rng, t.n)
    rhs = math.log(t.n) - matrix_kl(k, np.eye(t.n)).value / t.n
    return abs(_entropy(k, 1.0) - rhs)


def _tcr_kl_identity(t):
    k = random_kernel(t.rng, t.n)
    shifted = (t.mu * np.eye(t.n) + k.data) / (1.0 + t.mu)
    rhs = t.n * math.log1p(t.mu) - matrix_kl(np.eye(t.n), shifted).value
    return abs(tcr(k, t.mu).value - rhs)


def _hadamard_tcr(t):
    k1, k2 = random_kernel(t.rng, t.n), random_kernel(t.rng, t.n)
    joint = tcr(hadamard(k1, k2), t.mu**2 + 2 * t.mu).value
    return tcr(k1, t.mu).value + tcr(k2, t.mu).value - joint


def _hadamard_shift_identity(t):
    k1, k2 = random_kernel(t.rng, t.n), random_kernel(t.rng, t.n)
    eye = np.eye(t.n)
    lhs = (k1.data + t.mu * eye) * (k2.data + t.mu * eye)
    rhs = k1.data * k2.data + (t.mu**2 + 2 * t.mu) * eye
    return float(np.max(np.abs(lhs - rhs)))


STRICT_MARGIN = 1e-9
NEAR_IDENTITY = 1e-4


def _identity_optimal(t):
    # a rank-deficient draw is never the identity; full-rank draws may be close
    k = random_kernel(t.rng, t.n)
    eye = psd_sanitize(np.eye(t.n))
    gap_h = _entropy(k, t.alpha) - _entropy(eye, t.alpha)
    gap_t = tcr(k, t.mu).value - tcr(eye, t.mu).value
    worst = max(gap_h, gap_t)
    if np.max(np.abs(k.data - np.eye(t.n))) > NEAR_IDENTITY:
        return worst + STRICT_MARGIN
    return worst


def _logdet_duality(t):
    d = t.n
    batch = int(t.rng.integers(1, 2 * d + 1))
    z = t.rng.standard_normal((d, batch))
    _, left = np.linalg.slogdet(np.eye(d) + z @ z.T / t.mu)
    _, right = np.linalg.slogdet(np.eye(batch) + z.T @ z / t.mu)
    return abs(left - right)


def _erank_entropy(t):
    k = random_kernel(t.rng, t.n)
    return abs(effective_rank(k.data).value - math.exp(_entropy(k, 1.0)))


def _js_bounds(t):
    k1, k2 = random_kernel(t.rng, t.n), random_kernel(t.rng, t.n)
    mjs = matrix_js(k1, k2).value
    ejs = eigen_js(k1, k2).value
    return max(-mjs, mjs - math.log(2), ejs - mjs)


def _optimum_constructions(t):
    d = t.n
    # Barlow Twins optimum: rows standardized and mutually orthogonal -> K1 = K2 = I_d
    batch = 4 * d
    basis = np.hstack([np.ones((batch, 1)), t.rng.standard_normal((batch, d))])
    q, _ = np.linalg.qr(basis)
    z = q[:, 1:].T * math.sqrt(batch)  # zero-mean, orthogonal, unit-variance rows
    k = covariance_kernel(z)
    errors = [
        abs(losses.barlow_twins(z, z).total),
        abs(mutual_information(k, k, t.alpha).value - math.log(d)),
        abs(joint_entropy(k, k, t.alpha).value - math.log(d)),
    ]
    # spectral contrastive optimum: Z1 = Z2 with orthonormal columns -> gram = I_B
    width = max(1, d // 2)
    w, _ = np.linalg.qr(t.rng.standard_normal((d, width)))
    g = gram_kernel(w)
    errors += [
        abs(losses.spectral_contrastive(w, w).total),
        abs(mutual_information(g, g, t.alpha).value - math.log(width)),
        abs(joint_entropy(g, g, t.alpha).value - math.log(width)),
    ]
    return max(errors)


PROPERTIES = [
    Property("prop_4_1_mi_upper_bound",
             "I_alpha(K1;K2) <= ln n for unit-diagonal PSD kernels", 1e-7, _mi_bound),
    Property("prop_4_3_rank_chain",
             "H_1(K1,K2) <= ln rank(K1*K2) <= ln rank K1 + ln rank K2", 1e-7, _rank_chain),
    Property("prop_4_3_joint_entropy_lower",
             "max(H_a(K1), H_a(K2)) <= H_a(K1,K2)", 1e-7, _entropy_chain_lower),
    Property("prop_4_3_joint_entropy_upper",
             "H_a(K1,K2) <= H_a(K1) + H_a(K2)", 1e-7, _entropy_chain_upper),
    Property("prop_4_4_entropy_kl_identity",
             "H_1(K) = ln d - KL(K, I)/d", 1e-8, _entropy_kl_identity),
    Property("prop_4_4_tcr_kl_identity",
             "TCR_mu(K) = d ln(1+mu) - KL(I, (mu I + K)/(1+mu))", 1e-8, _tcr_kl_identity),
    Property("prop_4_5_hadamard_tcr",
             "TCR_{mu^2+2mu}(K1*K2) >= TCR_mu(K1) + TCR_mu(K2)", 1e-7, _hadamard_tcr),
    Property("prop_4_5_shift_identity",
             "(K1+mu I)*(K2+mu I) = K1*K2 + (mu^2+2mu) I", 1e-12, _hadamard_shift_identity),
    Property("prop_4_6_identity_optimal",
             "H_a(K) < H_a(I) and TCR_mu(K) < TCR_mu(I) for K != I", 0.0, _identity_optimal),
    Property("thm_4_2_4_7_optimum_constructions",
             "MI and joint entropy equal ln d at the Barlow Twins / spectral optima", 1e-9,
             _optimum_constructions),
    Property("logdet_duality",
             "ln det(I_d + Z Z^T/mu) = ln det(I_B + Z^T Z/mu)", 1e-8, _logdet_duality),
    Property("erank_entropy_identity",
             "erank(K) = exp(H_1(K))", 1e-8, _erank_entropy),
    Property("js_bounds",
             "0 <= eigen JS <= matrix JS <= ln 2", 1e-8, _js_bounds),
]

# properties whose violation depends on alpha get a per-alpha breakdown
_ALPHA_DEPENDENT = {"prop_4_1_mi_upper_bound", "prop_4_3_joint_entropy_lower",
                    "prop_4_3_joint_entropy_upper", "prop_4_6_identity_optimal",
                    "thm_4_2_4_7_optimum_constructions"}


def _grid(sizes, alphas, mus):
    return list(itertools.product(alphas, mus, sizes))


def run_property(prop, index, trials, sizes, alphas, mus, seed) -> PropertyResult:
    grid = _grid(sizes, alphas, mus)
    worst, worst_case = -math.inf, {}
    by_alpha: dict[str, float] = {}
    for trial in range(trials):
        alpha, mu, n = grid[trial % len(grid)]
        rng = np.random.default_rng([seed, index, trial])
        violation = float(prop.check(Trial(rng, n, alpha, mu)))
        key = f"{alpha:g}"
        by_alpha[key] = max(by_alpha.get(key, -math.inf), violation)
        if violation > worst:
            worst = violation
            worst_case = {"trial": trial, "n": n, "alpha": alpha, "mu": mu}
    breakdown = by_alpha if prop.name in _ALPHA_DEPENDENT else {}
    return PropertyResult(prop.name, prop.description, trials, prop.tolerance, worst, worst_case, breakdown)


def _non_psd_rejection() -> PropertyResult:
    bad = np.array([[1.0, 1.001], [1.001, 1.0]])
    try:
        psd_sanitize(bad)
    except NotPSD as exc:
        return PropertyResult("injected_non_psd_rejection", "indefinite input is rejected with NotPSD",
                              1, 0.0, 0.0, {}, note=f"NotPSD: {exc}")
    return PropertyResult("injected_non_psd_rejection", "indefinite input is rejected with NotPSD",
                          1, 0.0, 1.0, {}, note="indefinite matrix was accepted")


def run_suite(trials=1000, sizes=DEFAULT_SIZES, alphas=DEFAULT_ALPHAS, mus=DEFAULT_MUS,
              seed=0, inject_non_psd=False, only=None) -> list[PropertyResult]:
    results = []
    for index, prop in enumerate(PROPERTIES):
        if only is not None and prop.name not in only:
            continue
        results.append(run_property(prop, index, trials, tuple(sizes), tuple(alphas), tuple(mus), seed))
    if inject_non_psd:
        results.append(_non_psd_rejection())
    return results


def suite_report(results, elapsed=None) -> dict:
    report = {
        "passed": all(r.passed for r in results),
        "properties": [r.to_dict() for r in results],
    }
    if elapsed is not None:
        report["elapsed_seconds"] = elapsed
    return report


def timed_suite(**kwargs):
    start = time.perf_counter()
    results = run_suite(**kwargs)
    return results, time.perf_counter() - start
