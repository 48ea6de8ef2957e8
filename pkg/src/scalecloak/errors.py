"""Exception taxonomy for the toolkit.

Every error raised by the library derives from ScaleCloakError so callers can
catch the whole family; the CLI maps usage/IO problems to exit code 1 and
domain failures (infeasible craft, annotation contract violations) to exit 2.
"""


class ScaleCloakError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ScaleCloakError):
    """Bad run configuration (unknown keys, missing fields, unparseable file)."""


class UnsupportedAlgorithm(ScaleCloakError):
    """Requested interpolation algorithm is not implemented."""


class UpscaleRequested(ScaleCloakError):
    """A downscaling operator was asked to grow the image."""


class DownscaleRequested(ScaleCloakError):
    """An upscaling routine was asked to shrink the image."""


class DimensionMismatch(ScaleCloakError):
    """Image geometry does not match the operator or counterpart image."""


class Infeasible(ScaleCloakError):
    """No perturbation within the pixel box reaches the target within epsilon."""


class PlacementOutOfBounds(ScaleCloakError):
    """Trigger placement does not fit inside the scene."""


class DegeneratePair(ScaleCloakError):
    """Target and replica do not actually differ (e.g. fully transparent trigger)."""


class RegionTooLarge(ScaleCloakError):
    """Declared difference region covers more than half of the image."""


class InsufficientCandidates(ScaleCloakError):
    """Candidate pool is smaller than the requested poison count."""


class AllScenesEmpty(ScaleCloakError):
    """Candidate pool contains no candidates at all."""


class AnnotationContentMismatch(ScaleCloakError):
    """An annotation contradicts the poison contract for its mode."""


class ImageTooSmall(ScaleCloakError):
    """Image is too small for the requested probe or filter."""


class EmptyCorpus(ScaleCloakError):
    """Corpus evaluation needs at least one image on each side."""


class PolicyRangeInvalid(ScaleCloakError):
    """Prevention policy range is empty, out of bounds, or unsatisfiable."""
