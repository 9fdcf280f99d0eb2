"""Problem instances: system matrices, noise law, initial data, config I/O.

The system is

    x_{k+1} = (A0 + A1 w_k) x_k + (B0 + B1 w_k + B2 w_{k-1}) u_{k-d},   d in {0, 1}

with scalar white noise ``w_k`` of zero mean and variance ``sigma2``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import (
    BadHorizon,
    BadMoments,
    BadProbabilities,
    ConfigError,
    DimensionMismatch,
    FiniteSupportRequired,
    NotPSD,
    ParseError,
    UnknownKey,
)
from .linalg import min_eig

SYM_TOL = 1e-12
PSD_TOL = 1e-10
PROB_TOL = 1e-12
MEAN_TOL = 1e-12
VAR_TOL = 1e-10

MATRIX_KEYS = ("A0", "A1", "B0", "B1", "B2", "Q", "R", "P_terminal")
TOP_KEYS = frozenset(
    ("n", "m", "N", "delay", "sigma2", "sigma_unsquared", "noise", "init") + MATRIX_KEYS
)
REQUIRED_KEYS = ("N", "A0", "B0", "Q", "R")
NOISE_KEYS = frozenset(("kind", "support", "sigma", "sigma2"))
INIT_KEYS = frozenset(("x0", "u_prev", "w_prev"))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SystemModel:
    A0: np.ndarray
    A1: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P_terminal: np.ndarray
    N: int
    delay: int = 0
    sigma2: float = 1.0
    # Read the variance factor in the delayed recursion as sigma instead of sigma^2.
    sigma_unsquared: bool = False

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    @property
    def m(self) -> int:
        return self.B0.shape[1]

    @property
    def colored(self) -> bool:
        return bool(np.any(self.B2 != 0.0))

    def A(self, v: float) -> np.ndarray:
        return self.A0 + self.A1 * v

    def B(self, v: float, w: float) -> np.ndarray:
        """Control coefficient for current noise ``v`` and previous noise ``w``."""
        return self.B0 + self.B1 * v + self.B2 * w

    def to_config(self) -> dict:
        cfg = {
            "n": self.n,
            "m": self.m,
            "N": self.N,
            "delay": self.delay,
            "sigma2": self.sigma2,
        }
        if self.sigma_unsquared:
            cfg["sigma_unsquared"] = True
        for key in MATRIX_KEYS:
            cfg[key] = getattr(self, key).tolist()
        return cfg

    def replace(self, **changes) -> "SystemModel":
        """Re-validated copy with some fields swapped out (R is not re-checked
        for definiteness)."""
        cfg = self.to_config()
        cfg.pop("n")
        cfg.pop("m")
        for key, value in changes.items():
            cfg[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return validate(cfg, allow_indefinite_R=True)


@dataclass(frozen=True)
class NoiseSpec:
    """Law of the scalar noise: ``"gaussian"`` (sampling only) or ``"finite"``."""

    kind: str
    sigma2: float
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    @property
    def finite(self) -> bool:
        return self.kind == "finite"

    def support(self) -> list[tuple[float, float]]:
        return list(zip(self.values, self.probs))

    def require_finite(self, what: str = "exact expectation") -> "NoiseSpec":
        if not self.finite:
            raise FiniteSupportRequired(what)
        return self

    def to_config(self) -> dict:
        if self.finite:
            return {"kind": "finite", "support": [[v, p] for v, p in self.support()]}
        return {"kind": "gaussian", "sigma2": self.sigma2}


@dataclass(frozen=True, eq=False)
class InitialCondition:
    x0: np.ndarray
    u_prev: np.ndarray
    # deterministic value taken by the noise at time -1
    w_prev: float = 0.0

    def to_config(self) -> dict:
        return {"x0": self.x0.tolist(), "u_prev": self.u_prev.tolist(), "w_prev": self.w_prev}


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything a config document describes."""

    model: SystemModel
    noise: NoiseSpec
    init: InitialCondition
    raw: dict = field(default_factory=dict, repr=False)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def _as_matrix(raw, name: str, shape: tuple[int | None, int | None]) -> np.ndarray:
    try:
        a = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(name, f"not a numeric matrix ({exc})") from None
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(name, shape, a.shape)
    for want, got in zip(shape, a.shape):
        if want is not None and want != got:
            raise DimensionMismatch(name, shape, a.shape)
    if not np.all(np.isfinite(a)):
        raise ParseError(name, "non-finite entry")
    return a


def _check_weight(a: np.ndarray, name: str, psd: bool = True) -> np.ndarray:
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > SYM_TOL:
        raise NotPSD(name, f"not symmetric (max asymmetry {asym:.3g})")
    a = 0.5 * (a + a.T)
    lam = min_eig(a)
    if psd and lam < -PSD_TOL:
        raise NotPSD(name, f"not positive semi-definite (min eigenvalue {lam:.6g})", lam)
    return a


def validate(config: dict, allow_indefinite_R: bool = False) -> SystemModel:
    """Check a raw description and return an immutable :class:`SystemModel`.

    ``allow_indefinite_R`` drops the PSD requirement on ``R`` (symmetry is
    still enforced); solvability is then decided by the recursions alone.
    """
    for key in config:
        if key not in TOP_KEYS:
            raise UnknownKey(key)
    for key in REQUIRED_KEYS:
        if key not in config:
            raise ParseError(key, "missing required key")

    N = config["N"]
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)):
        raise BadHorizon(f"N must be an integer, got {N!r}")
    if N < 0:
        raise BadHorizon(f"N must be >= 0, got {N}")
    delay = config.get("delay", 0)
    if delay not in (0, 1):
        raise ConfigError(f"delay must be 0 or 1, got {delay!r}")

    A0 = _as_matrix(config["A0"], "A0", (None, None))
    n = A0.shape[0]
    if A0.shape[1] != n:
        raise DimensionMismatch("A0", (n, n), A0.shape)
    B0 = _as_matrix(config["B0"], "B0", (n, None))
    m = B0.shape[1]
    if "n" in config and config["n"] != n:
        raise DimensionMismatch("n", n, config["n"])
    if "m" in config and config["m"] != m:
        raise DimensionMismatch("m", m, config["m"])

    def opt(key, shape):
        if key in config:
            return _as_matrix(config[key], key, shape)
        return np.zeros(shape)

    A1 = opt("A1", (n, n))
    B1 = opt("B1", (n, m))
    B2 = opt("B2", (n, m))
    Q = _check_weight(_as_matrix(config["Q"], "Q", (n, n)), "Q")
    R = _check_weight(_as_matrix(config["R"], "R", (m, m)), "R", psd=not allow_indefinite_R)
    P = _check_weight(opt("P_terminal", (n, n)), "P_terminal")

    if "sigma2" in config:
        sigma2 = float(config["sigma2"])
    elif "noise" in config:
        sigma2 = make_noise(config["noise"]).sigma2
    else:
        raise ParseError("sigma2", "missing (give sigma2 or a noise law)")
    if not sigma2 >= 0.0 or not math.isfinite(sigma2):
        raise BadMoments(f"sigma2 must be a finite value >= 0, got {sigma2}")

    return SystemModel(
        A0=_frozen(A0), A1=_frozen(A1), B0=_frozen(B0), B1=_frozen(B1), B2=_frozen(B2),
        Q=_frozen(Q), R=_frozen(R), P_terminal=_frozen(P),
        N=int(N), delay=int(delay), sigma2=sigma2,
        sigma_unsquared=bool(config.get("sigma_unsquared", False)),
    )


_SHORTHAND = re.compile(r"^\s*(rademacher|gaussian)\s*\(\s*([^)]+)\)\s*$")


def rademacher(sigma: float) -> NoiseSpec:
    s = float(sigma)
    if s == 0.0:
        return NoiseSpec("finite", 0.0, (0.0,), (1.0,))
    return NoiseSpec("finite", s * s, (-s, s), (0.5, 0.5))


def make_noise(spec, sigma2: float | None = None) -> NoiseSpec:
    """Normalize a noise description.

    Accepts a :class:`NoiseSpec`, the shorthands ``"rademacher(s)"`` and
    ``"gaussian(s)"``, a list of ``(value, probability)`` pairs, or a mapping
    with ``kind`` in ``rademacher|gaussian|finite``.  When ``sigma2`` is given
    the second moment must match it.
    """
    if isinstance(spec, NoiseSpec):
        noise = spec
    elif isinstance(spec, str):
        match = _SHORTHAND.match(spec)
        if not match:
            raise ParseError("noise", f"unrecognized shorthand {spec!r}")
        kind, arg = match.groups()
        noise = make_noise({"kind": kind, "sigma": float(arg)})
    elif isinstance(spec, (list, tuple)):
        noise = _finite(spec)
    elif isinstance(spec, dict):
        for key in spec:
            if key not in NOISE_KEYS:
                raise UnknownKey(f"noise.{key}")
        kind = spec.get("kind")
        if kind == "rademacher":
            noise = rademacher(_sigma_of(spec))
        elif kind == "gaussian":
            noise = NoiseSpec("gaussian", _sigma_of(spec) ** 2)
        elif kind == "finite":
            if "support" not in spec:
                raise ParseError("noise.support", "missing for finite noise")
            noise = _finite(spec["support"])
        else:
            raise ParseError("noise.kind", f"expected rademacher|gaussian|finite, got {kind!r}")
    else:
        raise ParseError("noise", f"cannot interpret {spec!r}")

    if sigma2 is not None and abs(noise.sigma2 - sigma2) > VAR_TOL:
        raise BadMoments(f"noise variance {noise.sigma2!r} does not match sigma2={sigma2!r}")
    return noise


def _sigma_of(spec: dict) -> float:
    if "sigma" in spec:
        s = float(spec["sigma"])
    elif "sigma2" in spec:
        s = math.sqrt(float(spec["sigma2"]))
    else:
        raise ParseError("noise.sigma", "missing")
    if not s >= 0.0:
        raise BadMoments(f"sigma must be >= 0, got {s}")
    return s


def _finite(pairs) -> NoiseSpec:
    try:
        values = tuple(float(v) for v, _ in pairs)
        probs = tuple(float(p) for _, p in pairs)
    except (TypeError, ValueError):
        raise ParseError("noise.support", "expected a list of [value, probability] pairs") from None
    if not values:
        raise BadProbabilities("empty support")
    if len(set(values)) != len(values):
        raise BadProbabilities(f"repeated support values in {values}")
    if any(not p > 0.0 for p in probs):
        raise BadProbabilities(f"probabilities must be positive, got {probs}")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_TOL:
        raise BadProbabilities(f"probabilities sum to {total!r}, not 1")
    mean = math.fsum(v * p for v, p in zip(values, probs))
    if abs(mean) > MEAN_TOL:
        raise BadMoments(f"mean {mean!r} is not 0")
    second = math.fsum(v * v * p for v, p in zip(values, probs))
    return NoiseSpec("finite", second, values, probs)


def make_init(raw: dict | None, model: SystemModel) -> InitialCondition:
    raw = raw or {}
    for key in raw:
        if key not in INIT_KEYS:
            raise UnknownKey(f"init.{key}")

    def vec(key, size):
        if key not in raw:
            return np.zeros(size)
        a = np.atleast_1d(np.array(raw[key], dtype=float)).ravel()
        if a.shape != (size,):
            raise DimensionMismatch(f"init.{key}", (size,), a.shape)
        return a

    return InitialCondition(
        x0=_frozen(vec("x0", model.n)),
        u_prev=_frozen(vec("u_prev", model.m)),
        w_prev=float(raw.get("w_prev", 0.0)),
    )


# --------------------------------------------------------------------------
# config documents
# --------------------------------------------------------------------------

def _key_lines(text: str) -> dict[str, int]:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def load_config(text: str) -> dict:
    """Parse a YAML config document into a raw description (no validation of values)."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError("<document>", str(exc).splitlines()[0],
                         mark.line + 1 if mark else None) from None
    if not isinstance(raw, dict):
        raise ParseError("<document>", "expected a key: value mapping at top level")
    lines = _key_lines(text)
    for key in raw:
        if key not in TOP_KEYS:
            err = UnknownKey(str(key))
            err.line = lines.get(str(key))
            raise err
    for key in REQUIRED_KEYS:
        if key not in raw:
            raise ParseError(key, "missing required key")
    for sub, allowed in (("noise", NOISE_KEYS), ("init", INIT_KEYS)):
        if isinstance(raw.get(sub), dict):
            for key in raw[sub]:
                if key not in allowed:
                    raise UnknownKey(f"{sub}.{key}")
    return raw


def build_problem(raw: dict, allow_indefinite_R: bool = False) -> Problem:
    model = validate(raw, allow_indefinite_R)
    noise_raw = raw.get("noise")
    if noise_raw is None:
        noise = rademacher(math.sqrt(model.sigma2))
    else:
        noise = make_noise(noise_raw, model.sigma2)
    init = make_init(raw.get("init"), model)
    return Problem(model, noise, init, raw)


def load_problem(text: str) -> Problem:
    return build_problem(load_config(text))


def dump_config(model: SystemModel, noise: NoiseSpec | None = None,
                init: InitialCondition | None = None) -> str:
    """YAML document that round-trips through :func:`load_problem` bit-for-bit."""
    cfg = model.to_config()
    if noise is not None:
        cfg["noise"] = noise.to_config()
    if init is not None:
        cfg["init"] = init.to_config()
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None)
