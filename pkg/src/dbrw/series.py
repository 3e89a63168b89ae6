"""Series quantities attached to a (law, m, H) triple and the boundedness classifier.

    P        = sum_{k>=1} m^k P(|Y| > m^(kH))
    E(u)     = sum_{k>=1} m^k P(|Y| > u m^(kH))      (expected exceedance count)
    C_{m,P}  = m (P + 1/(m-1)),  with E(u) <= C_{m,P} u^(-1/H) for u in (0,1]
    u_n      = 2^(-H 2^n + H n)

Summation works on log-terms so that m^(kH) never overflows.  Terms are
summed directly first; if that does not settle the verdict the series is
condensed (k -> 2^j), which decides slowly varying cases such as
sum k^(-1/2) without summing 10^20 terms.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np
from scipy import integrate

from .errors import BoundViolated, ConstructionError, InternalInconsistency
from .laws import Deterministic, moment_1overH

MIN_TERMS = 32
RATIO_WINDOW = 16
RATIO_LEVEL = 1.0 - 1e-9
OVERFLOW_CAP = 1e12
DIRECT_LIMIT = 1 << 16
_BLOCK = 512
# past k ~ 2^48 laws without an analytic log_tail_offset lose the log-term to cancellation
_K_RELIABLE = 2.0 ** 48


class Evidence(str, Enum):
    RATIO_TEST = "RatioTest"
    PARTIAL_SUM_OVERFLOW = "PartialSumOverflow"


class Boundedness(str, Enum):
    BOUNDED = "Bounded"
    UNBOUNDED = "Unbounded"
    NOT_COVERED = "NotCovered"


@dataclass(frozen=True)
class SeriesResult:
    finite: bool
    value: float = math.inf
    truncation_k: int = 0
    tail_bound: float = math.inf
    evidence: Evidence = None
    method: str = "direct"

    @property
    def status(self):
        return "Finite" if self.finite else "Divergent"

    def to_dict(self):
        d = {"status": self.status, "truncation_k": self.truncation_k, "method": self.method}
        if self.finite:
            d.update(value=self.value, tail_bound=self.tail_bound)
        else:
            d["evidence"] = self.evidence.value
        return d


def _regime_start(law):
    """x beyond which the tail is in its asymptotic regime (ratio test is meaningful)."""
    kind = law.kind
    if kind in ("pareto", "sym_pareto", "log_pareto"):
        return law.xmin
    if kind == "gaussian":
        return 10.0 * law.sigma
    return law.scale()


def _bounded_support(law):
    return law.kind in ("constant", "uniform", "two_point")


class _Series:
    """sum_{k>=1} exp(log_term(k)) with log_term(k) = k log m + log P(|Y| > u m^(kH))."""

    def __init__(self, law, m, H, log_u=0.0):
        self.law, self.m, self.H, self.log_u = law, float(m), float(H), float(log_u)
        self.lm = math.log(self.m)
        self.k_regime = max(1, math.ceil((math.log(max(_regime_start(law), 1e-300)) - log_u)
                                         / (H * self.lm)))

    def log_term(self, k):
        # k log m = (log x - log u)/H with log x = log u + kH log m
        lx = self.log_u + np.asarray(k, dtype=float) * self.H * self.lm
        return self.law.log_tail_offset(lx, 1.0 / self.H) - self.log_u / self.H

    def term(self, k):
        with np.errstate(over="ignore"):
            return np.exp(self.log_term(k))

    def integral_from(self, k0):
        """(int_{k0}^inf term(x) dx, error bound), by quad on dyadic pieces.

        Past _K_RELIABLE the remainder is bounded by the condensed sum
        sum_j 2^j term(2^j) extrapolated geometrically, which majorizes the
        integral of a decreasing term.
        """
        total, err = 0.0, 0.0
        a = float(k0)
        while a < _K_RELIABLE:
            b = 2.0 * a
            v, e = integrate.quad(lambda x: float(self.term(x)), a, b, limit=100,
                                  epsabs=0.0, epsrel=1e-12)
            total += v
            err += e
            a = b
            if v <= 1e-17 * total:
                return total, err
        d0 = a * float(self.term(a))
        d1 = 2.0 * a * float(self.term(2.0 * a))
        r = d1 / d0 if d0 > 0 else 0.0
        rest = d0 / (1.0 - r) if r < 1.0 else math.inf
        return total, err + rest


def _sum_series(ser, tol):
    law = ser.law
    if _bounded_support(law):
        # terms vanish once u m^(kH) >= sup|Y|; the sum is finite and exact
        k_end = max(MIN_TERMS, ser.k_regime + 2)
        ks = np.arange(1, k_end + 1)
        t = ser.term(ks)
        return SeriesResult(True, float(np.sum(t)), k_end, 0.0, method="exact")

    total = 0.0
    run = 0
    prev = None
    base = None
    k = 1
    while k <= DIRECT_LIMIT:
        ks = np.arange(k, k + _BLOCK)
        terms = ser.term(ks)
        for i in range(terms.size):
            kk = int(ks[i])
            t = float(terms[i])
            total += t
            in_regime = kk >= ser.k_regime
            if in_regime and base is None:
                # the cap measures growth inside the tail regime, not the bulk mass before it
                base = max(1.0, total)
            if in_regime and total > OVERFLOW_CAP * base:
                return SeriesResult(False, math.inf, kk, evidence=Evidence.PARTIAL_SUM_OVERFLOW)
            if in_regime and prev is not None and prev > 0 and t / prev >= RATIO_LEVEL:
                run += 1
                if run >= RATIO_WINDOW:
                    return SeriesResult(False, math.inf, kk, evidence=Evidence.RATIO_TEST)
            else:
                run = 0
            prev = t
            if kk >= MIN_TERMS and in_regime:
                if t == 0.0 and total == 0.0:
                    # tail is nonincreasing: a zero term at x means all later terms vanish
                    return SeriesResult(True, 0.0, kk, 0.0)
                if t < tol * total:
                    # terms are eventually decreasing here, so the remainder is below the integral
                    tail, qerr = ser.integral_from(kk)
                    if tail + qerr <= tol * total:
                        return SeriesResult(True, total, kk, tail + qerr)
        k += _BLOCK
    return _condensed(ser, tol, total, DIRECT_LIMIT, base or 1.0)


def _condensed(ser, tol, partial, k_done, base=1.0):
    """Cauchy condensation on the remainder: sum_k t(k) ~ sum_j 2^j t(2^j)."""
    j0 = int(math.log2(k_done))
    run = 0
    prev = None
    ratio = math.inf
    csum = 0.0
    for j in range(j0, int(math.log2(_K_RELIABLE)) + 1):
        log_d = j * math.log(2.0) + float(ser.log_term(2.0 ** j))
        d = math.exp(log_d) if log_d < 700 else math.inf
        csum += d
        if partial + csum > OVERFLOW_CAP * base:
            return SeriesResult(False, math.inf, k_done, evidence=Evidence.PARTIAL_SUM_OVERFLOW,
                                method="condensed")
        if prev is not None and prev > 0:
            ratio = d / prev
        if ratio >= RATIO_LEVEL:
            run += 1
            if run >= RATIO_WINDOW:
                return SeriesResult(False, math.inf, k_done, evidence=Evidence.RATIO_TEST,
                                    method="condensed")
        else:
            run = 0
        prev = d
        if d < 1e-3 * tol * partial:
            break
    else:
        if not ratio < 0.999:
            raise InternalInconsistency("condensed series undecided before losing precision")
    # convergent: trapezoid correction, |remainder| <= |t'(K)|/12 for monotone t'
    K = float(k_done)
    integral, qerr = ser.integral_from(K)
    tK = float(ser.term(K))
    value = partial + integral - 0.5 * tK
    dt = abs(float(ser.term(K + 1.0)) - tK)
    return SeriesResult(True, value, k_done, dt / 12.0 + qerr, method="euler_maclaurin")


def _check_m_H(m, H):
    if not m > 1:
        raise ConstructionError(f"m must exceed 1, got {m}")
    if not H > 0:
        raise ConstructionError(f"H must be positive, got {H}")


def compute_P(law, m, H, tol=1e-12, cross_check=True):
    """P = sum_k m^k P(|Y| > m^(kH)), cross-checked against the moment classifier."""
    _check_m_H(m, H)
    res = _sum_series(_Series(law, m, H), tol)
    if cross_check:
        mom = moment_1overH(law, H)
        if mom.finite != res.finite:
            raise InternalInconsistency(
                f"series says {res.status} but E|Y|^(1/H) is "
                f"{'finite' if mom.finite else 'infinite'} for {law!r}, m={m}, H={H}")
    return res


def c_constant(m, P):
    """C_{m,P} = m (P + 1/(m-1)); only defined for P > 0."""
    if not P > 0:
        raise ValueError(f"C_(m,P) needs P > 0, got {P}")
    if not m > 1:
        raise ValueError(f"m must exceed 1, got {m}")
    return m * (P + 1.0 / (m - 1.0))


def log2_u_threshold(H, n):
    return H * (n - 2.0 ** n)


def u_threshold(H, n):
    """u_n = 2^(-H 2^n + H n), evaluated from its base-2 exponent (0.0 once it underflows)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    e = log2_u_threshold(H, n)
    return 2.0 ** e if e > -1074 else 0.0


def n4(H, n_max=64):
    """Smallest n0 >= 1 with u_n decreasing for all n0 <= n <= n_max (checked on exponents)."""
    e = [log2_u_threshold(H, n) for n in range(1, n_max + 2)]
    n0 = 1
    for i in range(len(e) - 1):
        if not e[i + 1] < e[i]:
            n0 = i + 2
    return n0


def expected_exceedance(law, m, H, u, tol=1e-12, P=None):
    """sum_k m^k P(|Y| > u m^(kH)) = E #{v : |m^(-H l(v)) eta_v| > u}.

    For u in (0,1] with P finite the value is checked against C_{m,P} u^(-1/H);
    a violation raises BoundViolated.
    """
    _check_m_H(m, H)
    if not u > 0:
        raise ValueError(f"u must be positive, got {u}")
    res = _sum_series(_Series(law, m, H, math.log(u)), tol)
    if u <= 1 and res.finite:
        if P is None:
            P = compute_P(law, m, H, tol)
        if P.finite:
            bound = m * u ** (-1.0 / H) * (P.value + 1.0 / (m - 1.0))
            if res.value > bound * (1 + 1e-9):
                raise BoundViolated(f"E(u)={res.value} exceeds C u^(-1/H)={bound} at u={u}")
    return res


def offspring_moments_ok(offspring, H):
    """Whether E[Z^q] < inf for some q > max(1/H, 1); true for every catalog law."""
    return True


def classify_boundedness(law, offspring, H):
    m = offspring.mean
    _check_m_H(m, H)
    P = compute_P(law, m, H)
    if P.finite and P.value == 0.0:
        return Boundedness.BOUNDED
    mom = moment_1overH(law, H)
    if mom.finite:
        return Boundedness.BOUNDED if offspring_moments_ok(offspring, H) else Boundedness.NOT_COVERED
    if offspring.p_zero == 0.0:
        return Boundedness.UNBOUNDED
    return Boundedness.NOT_COVERED


def lemma_rows(law, m, H, n_points=20, u_min=1e-6):
    """Rows (u, series_value, bound, pass) over a log grid of u in (0, 1]."""
    P = compute_P(law, m, H)
    if not P.finite:
        raise ValueError("the polynomial bound needs P finite")
    rows = []
    for u in np.geomspace(u_min, 1.0, n_points):
        v = expected_exceedance(law, m, H, float(u), P=P).value
        bound = m * u ** (-1.0 / H) * (P.value + 1.0 / (m - 1.0))
        rows.append({"u": float(u), "series_value": v, "bound": bound, "pass": bool(v <= bound)})
    return rows


def is_deterministic(offspring):
    return isinstance(offspring, Deterministic)
