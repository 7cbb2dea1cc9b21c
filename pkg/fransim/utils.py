from typing import Any, Tuple
import ast

import numpy as np

# Independent random streams; each simulation draw is keyed by (seed, stream, ...).
STREAM_TOPOLOGY = 0
STREAM_CHANNEL = 1
STREAM_ARRIVAL = 2
STREAM_POLICY = 3


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_watts(dbm):
    return db_to_linear(dbm) * 1e-3


def stream_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Returns a generator for the stream identified by `seed` and the non-negative integer `keys`.
    Identical arguments always give bit-identical draws; any change in a key gives an independent
    stream.
    """
    if seed < 0 or any(k < 0 for k in keys):
        raise ValueError(f"Invalid random stream key {(seed, *keys)}: keys must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


def fmt(value) -> str:
    """Formats a number for output files with 9 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "{:.9g}".format(float(value))


def parse_override(text: str) -> Tuple[str, str, Any]:
    """
    Parses a `section.key=value` override.  The value is read as a Python literal when possible
    and kept as a plain string otherwise.  Returns (section, key, value).
    Raises ValueError on a malformed override.
    """
    name, sep, raw = text.partition("=")
    section, dot, key = name.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ValueError(f"Invalid override '{text}': expected section.key=value")
    raw = raw.strip()
    try:
        value = ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        value = raw
    return section, key.strip(), value
