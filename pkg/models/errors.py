"""Exception hierarchy raised by the toolkit."""
from __future__ import annotations


class UbiquityError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(UbiquityError, ValueError):
    """A precondition on an input value is violated."""


class CellBudgetExceeded(UbiquityError):
    """A grid computation would touch more cells than the configured budget."""

    def __init__(self, requested: int, budget: int, what: str = "cells") -> None:
        super().__init__(f"{what}: {requested} requested, budget is {budget}")
        self.requested = requested
        self.budget = budget


class MassFloorError(UbiquityError):
    """A host cube retained less mass than the configured floor."""

    def __init__(self, achieved: float, floor: float, where: str = "") -> None:
        location = f" in {where}" if where else ""
        super().__init__(
            f"retained mass fraction {achieved:.6g}{location} is below the floor {floor:.6g}"
        )
        self.achieved = achieved
        self.floor = floor


class NoSignChangeError(UbiquityError, ValueError):
    """The bisection bracket does not straddle the target."""


class DegenerateFitError(UbiquityError, ValueError):
    """Box counts are constant, so no slope can be fitted."""
