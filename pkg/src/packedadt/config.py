import os
from dataclasses import dataclass

from dotenv import load_dotenv

from packedadt.errors import ConfigError

load_dotenv()

DEFAULT_FIRST_CHUNK = 64
BENCH_FIRST_CHUNK = 1 << 16
MIN_FIRST_CHUNK = 32
DEFAULT_DEPTH_CAP = 1 << 20


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw.strip(), 10)
    except ValueError:
        raise ConfigError(f"{name} must be a decimal integer, got {raw!r}") from None


def _flag_env(name: str, default: bool) -> bool:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name} must be 0 or 1, got {raw!r}")


def first_chunk_size(default: int = DEFAULT_FIRST_CHUNK) -> int:
    """
    First chunk size for new regions, honouring PACKEDADT_FIRST_CHUNK.

    Parameters
    ----------
    default : int
        Used when the variable is unset.

    Returns
    -------
    int
        Size in bytes.

    Examples
    --------
    >>> first_chunk_size(1 << 16)
    65536
    """
    return _int_env("PACKEDADT_FIRST_CHUNK", default)


def depth_cap() -> int:
    return _int_env("PACKEDADT_DEPTH_CAP", DEFAULT_DEPTH_CAP)


def check_writes() -> bool:
    return _flag_env("PACKEDADT_CHECK_WRITES", True)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Features:
    """Switches for the optional pointer records and cursor style"""
    random_access: bool = False
    indirection: bool = True
    mutable_cursors: bool = True

    @property
    def redirection(self) -> bool:
        # chunked regions cannot work without it
        return True

    @classmethod
    def from_env(cls) -> "Features":
        return cls(
            random_access=_flag_env("PACKEDADT_RANDOM_ACCESS", False),
            indirection=_flag_env("PACKEDADT_INDIRECTION", True),
            mutable_cursors=_flag_env("PACKEDADT_MUTABLE_CURSORS", True),
        )
