"""Python bindings for the visuo-tactile transformer core."""

from ._pyvtt import (
    Agent,
    Config,
    Env,
    IoError,
    UsageError,
    generate_dataset,
    gradcheck,
    full_scale_parameter_counts,
    read_archive,
    train_repr,
    write_archive,
)

__all__ = [
    "Agent",
    "Config",
    "Env",
    "IoError",
    "UsageError",
    "generate_dataset",
    "gradcheck",
    "full_scale_parameter_counts",
    "read_archive",
    "train_repr",
    "write_archive",
]
