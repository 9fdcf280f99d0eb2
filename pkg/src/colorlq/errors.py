"""Exception hierarchy shared by every module in the package."""

from __future__ import annotations


class ColorLQError(Exception):
    """Base class for all package errors."""


class ConfigError(ColorLQError):
    """Problems with a problem description (maps to CLI exit code 2)."""


class DimensionMismatch(ConfigError):
    def __init__(self, field: str, expected, got):
        self.field = field
        self.expected = expected
        self.got = got
        super().__init__(f"{field}: expected shape {expected}, got {got}")


class NotPSD(ConfigError):
    def __init__(self, name: str, detail: str, min_eig: float | None = None):
        self.name = name
        self.min_eig = min_eig
        super().__init__(f"{name}: {detail}")


class BadHorizon(ConfigError):
    pass


class BadMoments(ConfigError):
    pass


class BadProbabilities(ConfigError):
    pass


class ParseError(ConfigError):
    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}: {message}{where}")


class UnknownKey(ConfigError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"unknown key {key!r}")


class RequiresB2Zero(ConfigError):
    def __init__(self, what: str = "operation"):
        super().__init__(f"{what} requires B2 = 0 (white-noise control coefficient)")


class NotSolvable(ColorLQError):
    """A control Hessian failed the positive-definiteness test.

    ``condition`` names the violated requirement, e.g. ``"Upsilon_k > 0"``.
    """

    def __init__(self, k: int, condition: str, min_eig: float, w: float | None = None):
        self.k = k
        self.w = w
        self.condition = condition
        self.min_eig = min_eig
        at_w = f", w={w!r}" if w is not None else ""
        super().__init__(
            f"not solvable at step k={k}{at_w}: {condition} violated "
            f"(min eigenvalue {min_eig:.6g})"
        )


class UnknownSupportValue(ColorLQError, KeyError):
    def __init__(self, w: float, k: int):
        self.w = w
        self.k = k
        ColorLQError.__init__(self, f"no table entry for w={w!r} at step {k}")

    def __str__(self) -> str:
        return self.args[0]


class IndexOutOfRange(ColorLQError, IndexError):
    pass


class TooManyPaths(ColorLQError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"{count} exceeds the enumeration cap {cap}")


class SingularHessian(ColorLQError):
    def __init__(self, ratio: float):
        self.ratio = ratio
        super().__init__(
            f"oracle Hessian is not positive definite (min/max pivot ratio {ratio:.3g})"
        )


class InconsistentTrajectory(ColorLQError):
    pass


class FiniteSupportRequired(ConfigError):
    def __init__(self, what: str):
        super().__init__(f"{what} needs a finite-support noise law (got Gaussian)")
