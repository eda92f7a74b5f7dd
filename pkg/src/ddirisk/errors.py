"""Exception hierarchy shared by every stage of the engine."""


class DdiRiskError(Exception):
    """Base class for all engine errors."""


# ingestion
class IngestError(DdiRiskError):
    pass


class MalformedRow(IngestError):
    def __init__(self, row_index, reason):
        self.row_index = row_index
        self.reason = reason
        super().__init__(f"row {row_index}: {reason}")


class NegativeDuration(MalformedRow):
    pass


class UnknownColumn(IngestError):
    pass


class CatalogError(DdiRiskError):
    pass


class DuplicateConflictingPair(CatalogError):
    pass


class UnknownSeverityLabel(CatalogError):
    pass


class SelfPair(CatalogError):
    pass


class InvalidConfig(DdiRiskError):
    pass


# overlap engine
class MixedKeys(DdiRiskError):
    pass


class SameDrug(DdiRiskError):
    pass


class ZeroDenominator(DdiRiskError):
    pass


# measures
class EmptyStratum(DdiRiskError):
    pass


class EmptyBaseline(DdiRiskError):
    pass


class RankDeficient(DdiRiskError):
    pass


# null model
class InsufficientPool(DdiRiskError):
    pass


class PairBudgetExceeded(DdiRiskError):
    pass


class TooFewSamples(DdiRiskError):
    pass


# classifier
class MissingDemographic(DdiRiskError):
    pass


class ClassTooSmall(DdiRiskError):
    pass


class SingleClassTest(DdiRiskError):
    pass


class ConvergenceWarning(UserWarning):
    """Gradient descent stopped at max_iters before reaching tolerance."""


# cost
class InvalidLevel(DdiRiskError):
    pass


class ZeroPopulation(DdiRiskError):
    pass


class MissingRate(DdiRiskError):
    pass


# pipeline
class MissingUpstreamArtifact(DdiRiskError):
    pass


class StageError(DdiRiskError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
