"""Exception types raised across the styledate pipeline."""


class StyledateError(Exception):
    """Base class for all styledate errors."""


# -- corpus / manifest ------------------------------------------------------

class MissingFile(StyledateError):
    pass


class BadLabel(StyledateError):
    pass


class BadSplit(StyledateError):
    pass


class DecodeError(StyledateError):
    pass


class UnsupportedFormat(StyledateError):
    pass


class CropTooLarge(StyledateError):
    pass


# -- color descriptors ------------------------------------------------------

class TooFewBins(StyledateError):
    pass


class InsufficientPixels(StyledateError):
    pass


# -- encoding ---------------------------------------------------------------

class TooFewPoints(StyledateError):
    pass


class DegenerateData(StyledateError):
    pass


class DimMismatch(StyledateError):
    pass


class EmptySet(StyledateError):
    pass


# -- network ----------------------------------------------------------------

class ShapeMismatch(StyledateError):
    pass


class NonFiniteLoss(StyledateError):
    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"loss became non-finite at iteration {iteration}")


# -- classification ---------------------------------------------------------

class NegativeFeature(StyledateError):
    pass


class SingleClass(StyledateError):
    pass


# -- dating / harness -------------------------------------------------------

class EmptyPredictions(StyledateError):
    pass


class MissingModel(StyledateError):
    pass


class MissingSplit(StyledateError):
    pass


class DuplicateId(StyledateError):
    pass


class EmptyPair(StyledateError):
    pass
