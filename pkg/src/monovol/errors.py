"""Exception hierarchy.

Every error carries the exit code the CLI maps it to, so batch runs can
triage failures by stage without parsing messages.
"""

from __future__ import annotations

from typing import Any

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_GEOMETRY = 3
EXIT_RENDER = 4
EXIT_EVALUATION = 5


class MonovolError(Exception):
    exit_code = EXIT_INPUT


class InputError(MonovolError, ValueError):
    """Bad argument, unreadable file or failed validation."""

    exit_code = EXIT_INPUT


class InsufficientDataError(InputError):
    pass


class MissingDensityError(InputError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class GeometryError(MonovolError):
    exit_code = EXIT_GEOMETRY


class DegenerateConfigurationError(GeometryError):
    pass


class BehindCameraError(GeometryError):
    pass


class RectificationError(GeometryError):
    pass


class NoConvergenceError(GeometryError):
    """Iterative refinement failed; ``best`` holds the best iterate seen."""

    def __init__(self, message: str, best: Any = None, residual: float | None = None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class EmptyMaskError(InputError):
    pass


class DegenerateMaskError(GeometryError):
    pass


class MeshError(InputError):
    pass


class VolumeUndefinedError(MeshError):
    pass


class RenderError(MonovolError):
    exit_code = EXIT_RENDER


class EmptyRenderError(RenderError):
    pass


class EvaluationError(MonovolError):
    exit_code = EXIT_EVALUATION
