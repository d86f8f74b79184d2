"""Output-symbol degree distributions Omega(x) = sum_d Omega_d x^d.

Probabilities are stored densely for degrees 1..D.  Degree 0 is never
produced by an encoder and is not representable.  Construction validates
instead of renormalizing: a weight vector whose sum drifts from 1 by more
than 1e-12 is rejected, because silently rescaling user input hides bugs
in whoever produced the vector.
"""

import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    probs: np.ndarray
    name: str = ""

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError("probs must be a nonempty 1-d vector")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
            raise ValueError("probabilities must be finite and nonnegative")
        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(
                f"probabilities sum to {total!r}; drift beyond {SUM_TOL} is an error"
            )
        if probs[-1] <= 0.0:
            raise ValueError("trailing probability must be positive; trim unused degrees")
        probs = probs.copy()
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cdf", np.cumsum(probs))
        object.__setattr__(self, "_key", probs.tobytes())

    def __eq__(self, other):
        if not isinstance(other, DegreeDistribution):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)

    @property
    def max_degree(self):
        return int(self.probs.size)

    @property
    def omega1(self):
        return float(self.probs[0])

    @property
    def cdf(self):
        return self._cdf

    @property
    def mean_degree(self):
        # Omega'(1)
        return float(np.dot(np.arange(1, self.probs.size + 1), self.probs))


def omega_derivative(dist, z, order):
    """Omega^(order)(z) for any order >= 0, by Horner.  z may be scalar or array."""
    if order < 0:
        raise ValueError("order must be >= 0")
    c = np.zeros(dist.max_degree + 1)
    c[1:] = dist.probs
    for _ in range(order):
        c = c[1:] * np.arange(1, c.size)
    acc = np.zeros_like(np.asarray(z, dtype=float))
    for a in c[::-1]:
        acc = acc * z + a
    return float(acc) if acc.ndim == 0 else acc


def omega_eval(dist, z, order=0):
    """Evaluate Omega, Omega', or Omega'' on [0, 1]."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1, or 2")
    zz = np.asarray(z, dtype=float)
    if np.any(zz < 0.0) or np.any(zz > 1.0):
        raise ValueError("z must lie in [0, 1]")
    return omega_derivative(dist, z, order)


def sample_degree(dist, u01):
    """Map one uniform draw in [0, 1) to a degree by inverse CDF.

    Clamped to the top degree: the float CDF can top out an ulp below 1.
    The compiled kernel does the same scan; keep them consistent.
    """
    if not 0.0 <= u01 < 1.0:
        raise ValueError("u01 must lie in [0, 1)")
    idx = int(np.searchsorted(dist.cdf, u01, side="right"))
    if idx >= dist.max_degree:
        idx = dist.max_degree - 1
    return idx + 1


def make_capped_soliton():
    """Soliton weights 1/(i(i-1)) capped at degree 50, with Omega_1 = 1/50.

    The tail sum telescopes to 1 - 1/50, so the raw weights already sum to
    exactly 1 and no normalizer is needed.
    """
    w = [Fraction(1, 50)] + [Fraction(1, i * (i - 1)) for i in range(2, 51)]
    assert sum(w) == 1
    return DegreeDistribution(np.array([float(v) for v in w]), name="capped-soliton")


def make_ideal_soliton(k):
    """Soliton distribution on degrees 1..k: rho(1) = 1/k, rho(i) = 1/(i(i-1))."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return DegreeDistribution(np.array([1.0]), name="ideal-soliton:1")
    w = [Fraction(1, k)] + [Fraction(1, i * (i - 1)) for i in range(2, k + 1)]
    assert sum(w) == 1
    return DegreeDistribution(np.array([float(v) for v in w]), name=f"ideal-soliton:{k}")


def make_single_degree(d):
    """Point mass on one degree."""
    if d < 1:
        raise ValueError("degree must be >= 1")
    probs = np.zeros(d)
    probs[-1] = 1.0
    return DegreeDistribution(probs, name=f"degree{d}")


def to_json_obj(dist):
    idx = np.nonzero(dist.probs)[0]
    return {
        "degrees": [int(i) + 1 for i in idx],
        "probs": [float(dist.probs[i]) for i in idx],
    }


def from_json_obj(obj, name=""):
    if not isinstance(obj, dict) or set(obj) - {"degrees", "probs", "name"}:
        raise ValueError("distribution JSON must have keys 'degrees' and 'probs'")
    degrees = obj.get("degrees")
    probs = obj.get("probs")
    if not isinstance(degrees, list) or not isinstance(probs, list) or len(degrees) != len(probs):
        raise ValueError("'degrees' and 'probs' must be lists of equal length")
    if not degrees:
        raise ValueError("empty distribution")
    for d in degrees:
        if not isinstance(d, int) or d < 1:
            raise ValueError(f"degrees must be integers >= 1, got {d!r}")
    if len(set(degrees)) != len(degrees):
        raise ValueError("duplicate degrees")
    dense = np.zeros(max(degrees))
    for d, p in zip(degrees, probs):
        dense[d - 1] = float(p)
    return DegreeDistribution(dense, name=name or obj.get("name", ""))


def parse_distribution(text):
    """Resolve a distribution spec: a builtin name, inline JSON, or a JSON file path.

    Accepted builtins: "capped-soliton", "ideal-soliton:<k>", "degree<d>".
    """
    s = text.strip()
    if s == "capped-soliton":
        return make_capped_soliton()
    if s.startswith("ideal-soliton:"):
        try:
            k = int(s.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad ideal-soliton spec: {text!r}") from None
        return make_ideal_soliton(k)
    m = re.fullmatch(r"degree(\d+)", s)
    if m:
        return make_single_degree(int(m.group(1)))
    if s.startswith("{"):
        return from_json_obj(json.loads(s))
    path = Path(s)
    if path.exists():
        with open(path) as fh:
            return from_json_obj(json.load(fh), name=path.stem)
    raise ValueError(f"unrecognized distribution spec: {text!r}")
