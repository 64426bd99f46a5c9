"""Exception types shared across the package."""


class DatasetError(Exception):
    """Malformed or inconsistent on-disk dataset (manifest, image files)."""


class ConfigError(Exception):
    """Invalid, unknown, or missing configuration key."""


class CheckpointError(Exception):
    """Unreadable checkpoint or checkpoint/config shape mismatch."""


class TrainingDiverged(RuntimeError):
    """Non-finite loss or gradient encountered during training."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch
