"""Exception hierarchy shared by all h1modlab modules."""


class H1Error(Exception):
    """Base class for every error raised by h1modlab."""


# group algebra and maps
class ZeroDilation(H1Error, ValueError):
    pass


class InversionAtOrigin(H1Error, ArithmeticError):
    """The Korányi inversion was evaluated at the identity."""


class NonConvergent(H1Error):
    pass


# curves
class Divergent(H1Error):
    """Chordal sums keep growing under refinement: the curve is not rectifiable
    at the sampled resolution."""

    def __init__(self, message, sums=None):
        super().__init__(message)
        self.sums = sums


class NotHorizontal(H1Error, ValueError):
    pass


class SingularDirection(H1Error, ValueError):
    pass


class BudgetExhausted(H1Error):
    pass


# polar coordinates
class SingularParam(H1Error, ValueError):
    pass


# modulus
class NotConverged(H1Error):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class GridTooCoarse(H1Error, ValueError):
    pass


class FamilyEmpty(H1Error):
    pass


class DegenerateSet(H1Error, ValueError):
    pass


# domains and chains
class ResolutionTooCoarse(H1Error, ValueError):
    pass


class InsufficientDepth(H1Error):
    pass


class MapUndefined(H1Error):
    pass


class NotAccessible(H1Error):
    pass


# boundary experiments
class HypothesisFailed(H1Error):
    def __init__(self, message, diameters=None):
        super().__init__(message)
        self.diameters = diameters


# configuration
class SchemaError(H1Error, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{path}: {reason}" for path, reason in self.violations)
        super().__init__(lines or "invalid configuration")
