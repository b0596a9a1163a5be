"""Exception hierarchy shared by every tracksim module."""

from __future__ import annotations


class TrackSimError(Exception):
    """Base class for all tracksim errors."""


class GimbalLock(TrackSimError):
    """Pitch too close to +-pi/2 for the ZYX Euler parametrisation."""


class DegenerateSprocket(TrackSimError):
    """Sprocket speed too small to define a track contact time."""


class DegenerateNormal(TrackSimError):
    """Heading cannot be projected onto the terrain tangent plane."""


class OutOfTerrain(TrackSimError):
    """A vertical ray missed the heightfield."""


class NumericalDivergence(TrackSimError):
    """Simulation state left the finite/bounded region."""


class ImplicitNonconvergence(TrackSimError):
    """Fixed-point iteration of an implicit stage did not converge."""


class AlphaOutOfRange(TrackSimError):
    """Lateral slip angle outside (-pi/2, pi/2)."""


class AlphaUndefined(TrackSimError):
    """Longitudinal speed too small to define the lateral slip angle."""


class InsufficientData(TrackSimError):
    """Not enough records to fit a regressor."""


class ModelArityMismatch(TrackSimError):
    """Slip model input arity does not match the query."""


class DegenerateFit(TrackSimError):
    """Data cannot identify the exponential slip model."""


class Infeasible(TrackSimError):
    """Planning request cannot be satisfied under the actuator bounds."""


class FitNonconvergence(TrackSimError):
    """Newton iteration of the G1 clothoid fit did not converge."""


class Nonconvergence(TrackSimError):
    """Optimal control solver stopped without meeting its tolerance."""


class ConfigError(TrackSimError):
    """Invalid experiment configuration."""
