"""Exception hierarchy shared across the package.

Every runtime failure raised by the library derives from ``HousekeepError`` so
the CLI can map it to a non-zero exit status and print its class name.
"""

from __future__ import annotations


class HousekeepError(Exception):
    """Base class for all library errors."""


# world model
class ParseError(HousekeepError):
    pass


class ValidationError(HousekeepError):
    pass


class InvalidCell(HousekeepError):
    pass


# preferences
class DuplicateClassification(HousekeepError):
    pass


class UnknownCategory(HousekeepError):
    pass


class MissingKey(HousekeepError, KeyError):
    pass


class NotCorrect(HousekeepError):
    pass


class UnequalRaterCounts(HousekeepError):
    pass


class UndefinedKappa(HousekeepError):
    """Expected agreement is 1, so kappa is 0/0."""


# episodes
class GenerationExhausted(HousekeepError):
    pass


class InvalidCounts(HousekeepError):
    pass


# embodiment
class BudgetExhausted(HousekeepError):
    pass


class NoPath(HousekeepError):
    pass


class TargetLost(HousekeepError):
    pass


# exploration
class Exhausted(HousekeepError):
    """No frontier remains; exploration is complete."""


# ranker
class OutOfVocabulary(HousekeepError):
    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__(f"tokens not in embedding table: {', '.join(self.missing)}")


class NoPositivePairs(HousekeepError):
    pass


class DivergenceDetected(HousekeepError):
    pass


# metrics
class EmptySet(HousekeepError):
    pass
