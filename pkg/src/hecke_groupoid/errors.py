"""Exception hierarchy shared by all modules."""


class HeckeError(Exception):
    """Base class for every error raised by this package."""


class ZeroMatrix(HeckeError, ValueError):
    pass


class DeterminantNotPPower(HeckeError, ValueError):
    """The matrix does not lie in the group of primitive det-p^n matrices."""


class PrimeMismatch(HeckeError, ValueError):
    pass


class IndexOverflow(HeckeError, RuntimeError):
    """Breadth-first coset enumeration exceeded its configured bound."""


class NoCell(HeckeError, RuntimeError):
    """A point fell in no cell of a partition. Always an internal bug."""


class LabelingObstruction(HeckeError, RuntimeError):
    pass


class NumericalStall(HeckeError, ArithmeticError):
    pass


class EstimatorBudgetExceeded(HeckeError, RuntimeError):
    pass


class SubgroupTooCoarse(HeckeError, ValueError):
    """The congruence level is too shallow for the conjugation condition."""


class InvalidConfig(HeckeError, ValueError):
    pass


class ParseError(HeckeError, ValueError):
    pass


class IoFailure(HeckeError, OSError):
    pass
