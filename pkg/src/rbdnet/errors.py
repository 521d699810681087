"""Exception types shared across the package."""


class RbdnetError(Exception):
    """Base class for all package-specific failures."""


class IntegrationDivergedError(RbdnetError):
    """A numeric integration step produced a non-finite state."""


class DegenerateContactError(RbdnetError):
    """Two body centers (nearly) coincide; no contact normal exists."""


class SeparatingContactError(RbdnetError):
    """Impulse requested for a contact that is not approaching."""


class CrowdedSceneError(RbdnetError):
    """Scenario placement could not find non-overlapping positions."""


class TrainingDivergedError(RbdnetError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class FileFormatError(RbdnetError):
    """Base class for binary file format violations."""


class BadMagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FileFormatError):
    """File version is not one this build can read."""


class TruncatedFileError(FileFormatError):
    """File ended before the declared payload was complete."""
