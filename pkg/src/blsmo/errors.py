"""Exception hierarchy.

Each family carries the process exit code the command line front end uses
when an error of that family escapes a subcommand.
"""


class BLSMOError(Exception):
    exit_code = 10


# -- model construction ------------------------------------------------------

class ModelError(BLSMOError, ValueError):
    exit_code = 1


class DimensionMismatch(ModelError):
    pass


class RankDeficient(ModelError):
    pass


class TooFewOutputs(ModelError):
    pass


class SingularNormalEquations(ModelError):
    pass


class ConfigInvalid(ModelError):
    pass


# -- multipliers -------------------------------------------------------------

class MultiplierError(ModelError):
    pass


class NonPositiveConstant(MultiplierError):
    pass


class AsymmetricR(MultiplierError):
    pass


class AsymmetricM(MultiplierError):
    pass


class EmptyVertexList(MultiplierError):
    pass


class MultiplierDimensionMismatch(MultiplierError, DimensionMismatch):
    pass


class UnknownNonlinearity(ConfigInvalid):
    pass


# -- synthesis ---------------------------------------------------------------

class Infeasible(BLSMOError):
    exit_code = 2

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class SynthesisError(BLSMOError):
    exit_code = 3


class NumericalFailure(SynthesisError):
    pass


class PNotInvertible(SynthesisError):
    pass


class RankDeficientT1G(SynthesisError):
    pass


class NonPositiveArgument(SynthesisError, ValueError):
    pass


class NonFiniteModulus(SynthesisError):
    pass


# -- simulation --------------------------------------------------------------

class SimulationError(BLSMOError):
    exit_code = 4


class NonFiniteState(SimulationError):
    pass


class StepTooLarge(SimulationError):
    pass


class EmptyTrace(SimulationError):
    pass


# -- reconstruction ----------------------------------------------------------

class ReconstructionError(BLSMOError):
    exit_code = 5


class UnknownKernel(ReconstructionError, ConfigInvalid):
    exit_code = 5


class BetaTooSmall(ReconstructionError):
    pass


class SignalTooShort(ReconstructionError):
    pass


class TraceLacksInjection(ReconstructionError):
    pass


class TBeyondSpan(ReconstructionError):
    pass


class GapTooSmall(ReconstructionError):
    pass


# -- command line ------------------------------------------------------------

class UnknownParameter(BLSMOError):
    exit_code = 6
