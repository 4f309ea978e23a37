"""Exception hierarchy shared across the library."""


class IsacError(Exception):
    """Base class for all library errors."""


class InvalidInputError(IsacError):
    """An argument is non-finite or dimensionally inconsistent."""


class ConfigError(IsacError):
    """A configuration value is unknown, missing, or violates an invariant."""


class ContractError(IsacError):
    """Two objects that must share a grid/domain do not."""


class ActionabilityError(IsacError):
    """No horizon knot passes the actionability gate ||h^T rho|| > tol,
    so no application time can be selected; callers fall back to the
    default control."""


class DivergenceError(IsacError):
    """A simulated state became non-finite.

    Attributes
    ----------
    knot_index : index of the first non-finite knot
    t : time of that knot
    """

    def __init__(self, knot_index, t):
        self.knot_index = int(knot_index)
        self.t = float(t)
        super().__init__(f"state diverged at knot {knot_index} (t={t:.6g} s)")


class IntegrityError(IsacError):
    """A run log is truncated or internally inconsistent."""
