"""Increment laws for Y and offspring laws for Z.

Each increment law knows its exact tail ``P(|Y| > x)``, a log-space version
of that tail for series with astronomically large arguments, and whether
``E|Y|^(1/H)`` is finite.  Sampling goes through the compiled inverse
transforms in :mod:`dbrw._kernels`, keyed by tree position.
"""

from dataclasses import dataclass, field, fields
import math

import numpy as np
from scipy import integrate, special

from . import _kernels as K
from .errors import ConstructionError
from .rng import MASK64, VertexKey, root_digest

__all__ = [
    "IncrementLaw", "Constant", "Uniform", "Gaussian", "ParetoPositive",
    "SymmetricPareto", "LogPareto", "TwoPoint", "OffspringLaw", "Deterministic",
    "PoissonShifted", "GeometricShifted", "CustomPmf", "MomentResult",
    "sample_increment", "tail", "moment_1overH", "pgf", "increment_from_dict",
    "offspring_from_dict",
]

# relative tolerance requested from quadrature when no closed form exists
QUAD_RTOL = 1e-10


@dataclass(frozen=True)
class MomentResult:
    """Verdict on E|Y|^(1/H): ``value`` is None when infinite."""

    finite: bool
    value: float = None
    method: str = "closed_form"

    def __bool__(self):
        return self.finite


INFINITE = MomentResult(False, None, "closed_form")


class IncrementLaw:
    kind = None
    code = None
    symmetric = False
    nonnegative = False

    # -- numba plumbing -------------------------------------------------
    @property
    def params(self):
        raise NotImplementedError

    def scale(self):
        """Typical magnitude of |Y|, used by the underflow guard."""
        raise NotImplementedError

    # -- distribution ---------------------------------------------------
    def tail(self, x):
        """P(|Y| > x), vectorized over x >= 0."""
        raise NotImplementedError

    def log_tail(self, log_x):
        """log P(|Y| > exp(log_x)); must not overflow for huge log_x."""
        log_x = np.asarray(log_x, dtype=float)
        with np.errstate(over="ignore", divide="ignore"):
            x = np.exp(np.minimum(log_x, 700.0))
            out = np.log(self.tail(x))
        return np.where(log_x > 700.0, -np.inf, out)

    def log_tail_offset(self, log_x, a):
        """a*log_x + log P(|Y| > exp(log_x)).

        Power-type laws override this so the two large terms cancel
        analytically rather than in floating point.
        """
        return a * np.asarray(log_x, dtype=float) + self.log_tail(log_x)

    def moment(self, p):
        """E|Y|^p as a MomentResult."""
        raise NotImplementedError

    def sample(self, seed, key=None):
        return sample_increment(self, seed, key)

    def sample_array(self, n, seed):
        """n i.i.d. draws, keyed by the depth-1 children of the root of ``seed``."""
        return K.sample_increments_bulk(self.code, self.params, np.uint64(seed & MASK64), int(n))

    def to_dict(self):
        d = {"kind": self.kind}
        for f in fields(self):
            d[f.name] = getattr(self, f.name)
        return d


def _check_positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ConstructionError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class Constant(IncrementLaw):
    a: float = 1.0
    kind = "constant"
    code = K.INC_CONSTANT

    def __post_init__(self):
        if not math.isfinite(self.a):
            raise ConstructionError("constant must be finite")
        object.__setattr__(self, "nonnegative", self.a >= 0)

    @property
    def params(self):
        return np.array([self.a, 0.0, 0.0, 0.0])

    def scale(self):
        return abs(self.a)

    def tail(self, x):
        return np.where(abs(self.a) > np.asarray(x, dtype=float), 1.0, 0.0)

    def moment(self, p):
        return MomentResult(True, abs(self.a) ** p)


@dataclass(frozen=True)
class Uniform(IncrementLaw):
    lo: float = -1.0
    hi: float = 1.0
    kind = "uniform"
    code = K.INC_UNIFORM

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConstructionError(f"uniform law needs lo < hi, got [{self.lo}, {self.hi}]")
        object.__setattr__(self, "nonnegative", self.lo >= 0)
        object.__setattr__(self, "symmetric", self.lo == -self.hi)

    @property
    def params(self):
        return np.array([self.lo, self.hi, 0.0, 0.0])

    def scale(self):
        return max(abs(self.lo), abs(self.hi))

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        upper = np.maximum(0.0, self.hi - np.maximum(self.lo, x))
        lower = np.maximum(0.0, np.minimum(self.hi, -x) - self.lo)
        return (upper + lower) / (self.hi - self.lo)

    def moment(self, p):
        def prim(y):
            return math.copysign(abs(y) ** (p + 1), y) / (p + 1)
        return MomentResult(True, (prim(self.hi) - prim(self.lo)) / (self.hi - self.lo))


@dataclass(frozen=True)
class Gaussian(IncrementLaw):
    sigma: float = 1.0
    kind = "gaussian"
    code = K.INC_GAUSSIAN
    symmetric = True

    def __post_init__(self):
        _check_positive("sigma", self.sigma)

    @property
    def params(self):
        return np.array([self.sigma, 0.0, 0.0, 0.0])

    def scale(self):
        return self.sigma

    def tail(self, x):
        return special.erfc(np.abs(np.asarray(x, dtype=float)) / (self.sigma * math.sqrt(2.0)))

    def log_tail(self, log_x):
        log_x = np.asarray(log_x, dtype=float)
        with np.errstate(over="ignore"):
            x = np.exp(np.minimum(log_x, 700.0))
        out = math.log(2.0) + special.log_ndtr(-x / self.sigma)
        return np.where(log_x > 700.0, -np.inf, out)

    def moment(self, p):
        v = self.sigma ** p * 2 ** (p / 2) * special.gamma((p + 1) / 2) / math.sqrt(math.pi)
        return MomentResult(True, float(v))


class _ParetoBase(IncrementLaw):
    """|Y| = xmin * U^(-theta), so P(|Y| > x) = (x/xmin)^(-1/theta) above xmin."""

    def __post_init__(self):
        _check_positive("theta", self.theta)
        _check_positive("xmin", self.xmin)

    @property
    def params(self):
        return np.array([self.theta, self.xmin, 0.0, 0.0])

    def scale(self):
        return self.xmin

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            t = (np.maximum(x, self.xmin) / self.xmin) ** (-1.0 / self.theta)
        return np.where(x < self.xmin, 1.0, t)

    def log_tail(self, log_x):
        log_x = np.asarray(log_x, dtype=float)
        lx = math.log(self.xmin)
        return np.where(log_x < lx, 0.0, -(log_x - lx) / self.theta)

    def log_tail_offset(self, log_x, a):
        log_x = np.asarray(log_x, dtype=float)
        lx = math.log(self.xmin)
        return np.where(log_x < lx, a * log_x, (a - 1.0 / self.theta) * log_x + lx / self.theta)

    def moment(self, p):
        alpha = 1.0 / self.theta
        if p >= alpha:
            return INFINITE
        return MomentResult(True, self.xmin ** p * alpha / (alpha - p))


@dataclass(frozen=True)
class ParetoPositive(_ParetoBase):
    theta: float = 1.0
    xmin: float = 1.0
    kind = "pareto"
    code = K.INC_PARETO
    nonnegative = True

    def __post_init__(self):
        _ParetoBase.__post_init__(self)


@dataclass(frozen=True)
class SymmetricPareto(_ParetoBase):
    theta: float = 1.0
    xmin: float = 1.0
    kind = "sym_pareto"
    code = K.INC_SYM_PARETO
    symmetric = True

    def __post_init__(self):
        _ParetoBase.__post_init__(self)


@dataclass(frozen=True)
class LogPareto(IncrementLaw):
    """Positive law with P(Y > x) = (x/xmin)^(-1/h0) * (log x / log xmin)^(-beta), x >= xmin.

    At H = h0 the moment E[Y^(1/H)] is finite exactly when beta > 1, which a
    pure power tail cannot resolve.
    """

    h0: float = 1.0
    beta: float = 2.0
    xmin: float = math.e ** 2
    kind = "log_pareto"
    code = K.INC_LOG_PARETO
    nonnegative = True

    def __post_init__(self):
        _check_positive("h0", self.h0)
        if not math.isfinite(self.beta):
            raise ConstructionError("beta must be finite")
        if not self.xmin > math.e:
            raise ConstructionError(f"log_pareto needs xmin > e, got {self.xmin}")
        L = math.log(self.xmin)
        # d/dy log-tail = -1/h0 - beta/y must stay negative for y >= L
        if self.beta < 0 and not L > -self.beta * self.h0:
            raise ConstructionError(
                f"log_pareto tail is not monotone: need log(xmin) > -beta*h0 "
                f"({L:.4g} <= {-self.beta * self.h0:.4g})")

    @property
    def params(self):
        return np.array([self.h0, self.beta, self.xmin, math.log(self.xmin)])

    def scale(self):
        return self.xmin

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        L = math.log(self.xmin)
        xs = np.maximum(x, self.xmin)
        t = (xs / self.xmin) ** (-1.0 / self.h0) * (np.log(xs) / L) ** (-self.beta)
        return np.where(x < self.xmin, 1.0, t)

    def log_tail(self, log_x):
        log_x = np.asarray(log_x, dtype=float)
        L = math.log(self.xmin)
        ly = np.maximum(log_x, L)
        out = -(ly - L) / self.h0 - self.beta * (np.log(ly) - math.log(L))
        return np.where(log_x < L, 0.0, out)

    def log_tail_offset(self, log_x, a):
        log_x = np.asarray(log_x, dtype=float)
        L = math.log(self.xmin)
        ly = np.maximum(log_x, L)
        out = (a - 1.0 / self.h0) * ly + L / self.h0 - self.beta * (np.log(ly) - math.log(L))
        return np.where(log_x < L, a * log_x, out)

    def moment(self, p):
        alpha = 1.0 / self.h0
        if p > alpha:
            return INFINITE
        L = math.log(self.xmin)
        if p == alpha:
            if self.beta <= 1:
                return INFINITE
            # p * xmin^p * int_{xmin}^inf x^-1 (log x / L)^-beta dx = p xmin^p L/(beta-1)
            return MomentResult(True, self.xmin ** p * (1.0 + p * L / (self.beta - 1.0)))
        # E Y^p = xmin^p + int_L^inf p e^{p y} T(e^y) dy in y = log x
        def integrand(y):
            return p * math.exp(p * y + float(self.log_tail(y)))
        val, _ = integrate.quad(integrand, L, np.inf, epsabs=0.0, epsrel=QUAD_RTOL, limit=500)
        return MomentResult(True, self.xmin ** p + val, "quadrature")


@dataclass(frozen=True)
class TwoPoint(IncrementLaw):
    a: float = 1.0
    kind = "two_point"
    code = K.INC_TWO_POINT
    symmetric = True

    def __post_init__(self):
        _check_positive("a", self.a)

    @property
    def params(self):
        return np.array([self.a, 0.0, 0.0, 0.0])

    def scale(self):
        return self.a

    def tail(self, x):
        return np.where(np.asarray(x, dtype=float) < self.a, 1.0, 0.0)

    def moment(self, p):
        return MomentResult(True, self.a ** p)


_INCREMENT_KINDS = {cls.kind: cls for cls in
                    (Constant, Uniform, Gaussian, ParetoPositive, SymmetricPareto, LogPareto, TwoPoint)}


# ---------------------------------------------------------------------------
# offspring laws

class OffspringLaw:
    kind = None
    code = None

    @property
    def param(self):
        return 0.0

    @property
    def cdf(self):
        return np.zeros(1)

    @property
    def mean(self):
        raise NotImplementedError

    @property
    def p_zero(self):
        return 0.0

    def pgf(self, s):
        raise NotImplementedError

    def sample_array(self, n, seed):
        return K.sample_offspring_bulk(self.code, float(self.param), self.cdf,
                                       np.uint64(seed & MASK64), int(n))

    def _check_mean(self):
        if not self.mean > 1:
            raise ConstructionError(f"offspring mean m = E[Z] must exceed 1, got {self.mean}")

    def to_dict(self):
        d = {"kind": self.kind}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d


@dataclass(frozen=True)
class Deterministic(OffspringLaw):
    m: int = 2
    kind = "deterministic"
    code = K.OFF_DETERMINISTIC

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ConstructionError(f"deterministic offspring needs integer m >= 2, got {self.m}")
        self._check_mean()

    @property
    def param(self):
        return float(self.m)

    @property
    def mean(self):
        return float(self.m)

    def pgf(self, s):
        return np.asarray(s, dtype=float) ** self.m


@dataclass(frozen=True)
class PoissonShifted(OffspringLaw):
    """Z = 1 + Poisson(lam)."""

    lam: float = 1.0
    kind = "poisson_shifted"
    code = K.OFF_POISSON_SHIFTED

    def __post_init__(self):
        _check_positive("lam", self.lam)
        if self.lam > 500:
            raise ConstructionError("lam > 500 underflows the inverse-transform sampler")
        self._check_mean()

    @property
    def param(self):
        return float(self.lam)

    @property
    def mean(self):
        return 1.0 + self.lam

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        return s * np.exp(self.lam * (s - 1.0))


@dataclass(frozen=True)
class GeometricShifted(OffspringLaw):
    """Z = 1 + G with P(G = k) = (1-p)^k p."""

    p: float = 0.5
    kind = "geometric_shifted"
    code = K.OFF_GEOMETRIC_SHIFTED

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ConstructionError(f"geometric_shifted needs p in (0,1), got {self.p}")
        self._check_mean()

    @property
    def param(self):
        return float(self.p)

    @property
    def mean(self):
        return 1.0 / self.p

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        return s * self.p / (1.0 - (1.0 - self.p) * s)


@dataclass(frozen=True)
class CustomPmf(OffspringLaw):
    probs: tuple = field(default=(0.0, 0.0, 1.0))
    kind = "custom"
    code = K.OFF_CUSTOM

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if not probs or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ConstructionError("custom pmf must be nonnegative and sum to 1")
        self._check_mean()

    @property
    def cdf(self):
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    @property
    def mean(self):
        return float(sum(k * p for k, p in enumerate(self.probs)))

    @property
    def p_zero(self):
        return self.probs[0]

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        return sum(p * s ** k for k, p in enumerate(self.probs))


class _ExtinctPmf(CustomPmf):
    """CustomPmf without the mean check; only for exercising empty-tree conventions."""

    def _check_mean(self):
        pass


def extinct_law():
    """Offspring law with P(Z=0)=1 (subcritical; bypasses the m > 1 check on purpose)."""
    return _ExtinctPmf((1.0,))


_OFFSPRING_KINDS = {cls.kind: cls for cls in (Deterministic, PoissonShifted, GeometricShifted, CustomPmf)}


def _from_dict(d, registry, what):
    if not isinstance(d, dict) or "kind" not in d:
        raise ConstructionError(f"{what} spec must be a mapping with a 'kind' key, got {d!r}")
    kind = d["kind"]
    if kind not in registry:
        raise ConstructionError(f"unknown {what} kind {kind!r}; expected one of {sorted(registry)}")
    cls = registry[kind]
    allowed = {f.name for f in fields(cls)}
    extra = set(d) - allowed - {"kind"}
    if extra:
        raise ConstructionError(f"unknown keys for {what} {kind!r}: {sorted(extra)}")
    kwargs = {k: v for k, v in d.items() if k != "kind"}
    if "probs" in kwargs:
        kwargs["probs"] = tuple(kwargs["probs"])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConstructionError(str(exc)) from exc


def increment_from_dict(d):
    return _from_dict(d, _INCREMENT_KINDS, "increment")


def offspring_from_dict(d):
    return _from_dict(d, _OFFSPRING_KINDS, "offspring")


# ---------------------------------------------------------------------------
# module-level operations

def sample_increment(law, seed, key=None):
    """One draw of Y for vertex ``key`` of the tree grown from ``seed`` (root if None)."""
    seed = np.uint64(int(seed) & MASK64)
    lo, hi = root_digest(seed) if key is None else (key.lo, key.hi)
    return float(K.vertex_increment(law.code, law.params, seed, np.uint64(lo), np.uint64(hi)))


def tail(law, x):
    if np.any(np.asarray(x) < 0):
        raise ValueError("tail is defined for x >= 0")
    out = law.tail(x)
    return float(out) if np.ndim(out) == 0 else out


def moment_1overH(law, H):
    """Finite/infinite verdict on E|Y|^(1/H), with its value when finite."""
    if not H > 0:
        raise ValueError(f"H must be positive, got {H}")
    return law.moment(1.0 / H)


def pgf(off, s):
    s_arr = np.asarray(s, dtype=float)
    if np.any((s_arr < 0) | (s_arr > 1)):
        raise ValueError("pgf argument must lie in [0, 1]")
    out = off.pgf(s_arr)
    return float(out) if np.ndim(out) == 0 else out


__all__ += ["VertexKey", "extinct_law"]
