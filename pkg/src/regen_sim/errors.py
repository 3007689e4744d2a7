"""Exception types raised across the package."""


class RegenError(Exception):
    """Base class for all errors raised by regen_sim."""


class NonPrimeModulus(RegenError, ValueError):
    pass


class DivideByZero(RegenError, ZeroDivisionError):
    pass


class SingularSystem(RegenError):
    pass


class InvalidParams(RegenError, ValueError):
    pass


class FieldTooSmall(InvalidParams):
    def __init__(self, q, required, what="field size"):
        self.q = q
        self.required = required
        super().__init__(f"{what}: q={q} is below the required bound {required}")


class NotEnoughHistory(RegenError):
    pass


class ExhaustedIndices(RegenError):
    pass


class InvalidHistory(RegenError, ValueError):
    pass


class InfeasibleLinking(RegenError):
    pass


class CoefficientSearchExhausted(RegenError):
    def __init__(self, stage, failed_node, retries, reason=""):
        self.stage = stage
        self.failed_node = failed_node
        self.retries = retries
        self.reason = reason
        msg = (f"no acceptable local coefficients for node {failed_node} at stage "
               f"{stage} after {retries} attempts")
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class MissingHelper(RegenError, KeyError):
    pass


class TooLarge(RegenError):
    pass
