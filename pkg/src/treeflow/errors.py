"""Exception hierarchy shared by all treeflow modules."""


class TreeflowError(Exception):
    """Base class for every error raised by treeflow."""


class InputError(TreeflowError, ValueError):
    """Malformed or inconsistent user input (maps to CLI exit code 2)."""


class TreeSpecError(InputError):
    pass


class CycleDetected(TreeSpecError):
    pass


class MultipleParents(TreeSpecError):
    pass


class UnrootedWithoutAncestors(TreeSpecError):
    pass


class TruncationExceeded(TreeflowError):
    """A query needs edges beyond the materialized part of the tree.

    This is *not* an empty answer: the infinite tree may well have edges
    there, they were simply never built.
    """


class NoAncestor(TreeflowError):
    """The requested ancestor would lie above the root of a rooted tree."""


class NotAChain(InputError):
    pass


class NotRooted(InputError):
    pass


class NotUnrooted(InputError):
    pass


class LeafPresent(InputError):
    pass


class NonPositiveWeight(InputError):
    pass


class InvalidExponent(InputError):
    pass


class NotGridAligned(InputError):
    pass


class ZeroFunction(InputError):
    pass


class NoViolation(TreeflowError):
    pass


class CriterionNotMet(TreeflowError):
    pass


class CriterionMet(TreeflowError):
    pass


class SupportNormalizationFailed(TreeflowError):
    pass
