"""Shared exception types."""


class GibbsLabError(Exception):
    """Base class for all library errors."""


class CapExceededError(GibbsLabError):
    """An instance is larger than the method's enforced size cap."""


class AllInfiniteError(GibbsLabError):
    """Every configuration of the instance has infinite weight (Z = 0)."""


class NumericalLossError(GibbsLabError):
    """A computation lost too much precision to be trusted."""


class ModelMismatchError(GibbsLabError):
    """Two objects belong to different models."""
