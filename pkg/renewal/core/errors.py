"""Error hierarchy shared by the services and the command line."""

from typing import List, Sequence, Union


class RenewalError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class InputError(RenewalError):
    """Invalid user input: files, parameters or trees."""

    exit_code = 2


class NumericError(RenewalError):
    """Numerical failure or a computation refused for its size."""

    exit_code = 3


class _ArgsPreserved:
    # Errors cross process boundaries during subset fan-out; pickling
    # must rebuild them from their constructor arguments.
    _init_args: tuple = ()

    def __reduce__(self):
        return (type(self), self._init_args)


class DatasetParseError(_ArgsPreserved, InputError):
    def __init__(self, path: str, line: int, position: int, token: str, reason: str):
        self._init_args = (path, line, position, token, reason)
        self.path = path
        self.line = line
        self.position = position
        self.token = token
        super().__init__(f"{path}:{line}: token {position} ({token!r}): {reason}")


class DocumentError(_ArgsPreserved, InputError):
    """A JSON input file (tree, allowed matrix, PCT, manifest) could not be read."""

    def __init__(self, path: str, reason: str):
        self._init_args = (path, reason)
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class DatasetValidationError(InputError):
    pass


class ProhibitedTransitionError(InputError):
    pass


class TreeValidationError(_ArgsPreserved, InputError):
    def __init__(self, violations: Sequence[str]):
        self._init_args = (list(violations),)
        self.violations: List[str] = list(violations)
        super().__init__("invalid context tree: " + "; ".join(self.violations))


class ContractViolation(InputError):
    """An operation was called outside its precondition."""


class SupportError(InputError):
    """A tree lies outside the support of the prior."""


class EmptySupportError(_ArgsPreserved, InputError):
    def __init__(self, hypothesis: str, detail: str = ""):
        self._init_args = (hypothesis, detail)
        self.hypothesis = hypothesis
        message = f"prior support is empty for {hypothesis}"
        super().__init__(f"{message}: {detail}" if detail else message)


class EnumerationBoundError(_ArgsPreserved, NumericError):
    def __init__(self, what: str, estimate: Union[int, str], limit: int):
        self._init_args = (what, estimate, limit)
        self.estimate = estimate
        self.limit = limit
        super().__init__(f"refusing to enumerate {what}: about {estimate if isinstance(estimate, str) else _scientific(estimate)} items exceeds the limit of {limit}")


class DegenerateSpaceError(NumericError):
    """Neither grow nor prune moves exist: the support is a single tree."""


class NonFiniteValueError(NumericError):
    pass


class SubsetFailure(_ArgsPreserved, RenewalError):
    def __init__(self, subset: Sequence[int], cause: BaseException):
        self._init_args = (tuple(subset), cause)
        self.subset = tuple(subset)
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"partial Bayes factor failed for training subset {list(self.subset)}: {cause}")


def _scientific(n: int) -> str:
    digits = str(n)
    if len(digits) <= 6:
        return digits
    return f"{digits[0]}.{digits[1:3]}e{len(digits) - 1}"
