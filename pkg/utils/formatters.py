"""Data formatting utilities."""

from typing import Sequence


def format_score(mean: float, std: float) -> str:
    """
    Format a dice summary the way results tables print it.

    Args:
        mean: Mean dice coefficient
        std: Sample standard deviation

    Returns:
        String such as '0.7563 ± 0.15'
    """
    return f"{mean:.4f} ± {std:.2f}"


def format_p_value(p: float) -> str:
    """
    Format a p-value, collapsing tiny values to '<0.0001'.

    Args:
        p: Two-tailed p-value

    Returns:
        Formatted p-value string
    """
    if p < 1e-4:
        return "<0.0001"
    return f"{p:.4f}"


def format_float(value: float) -> str:
    """Shortest round-trip representation for CSV cells."""
    return repr(float(value))


def parse_float_list(text: str) -> Sequence[float]:
    """
    Parse a comma-separated list of floats.

    Args:
        text: e.g. '1,2,3,4'

    Returns:
        List of floats
    """
    return [float(part) for part in text.split(',') if part.strip()]


def format_duration(seconds: float) -> str:
    """
    Format duration in human-readable format.

    Args:
        seconds: Duration in seconds

    Returns:
        Formatted duration string (e.g., '2h 15m 30s')
    """
    hours = int(seconds // 3600)
    minutes = int((seconds % 3600) // 60)
    secs = int(seconds % 60)

    parts = []
    if hours > 0:
        parts.append(f"{hours}h")
    if minutes > 0:
        parts.append(f"{minutes}m")
    if secs > 0 or not parts:
        parts.append(f"{secs}s")

    return ' '.join(parts)


def stable_hash(data) -> str:
    """
    Hash a JSON-serializable structure independent of key order.

    Args:
        data: Dict/list structure

    Returns:
        'sha256:' followed by the first 16 hex digits
    """
    import hashlib
    import json

    text = json.dumps(data, sort_keys=True)
    hash_obj = hashlib.sha256(text.encode('utf-8'))
    return f"sha256:{hash_obj.hexdigest()[:16]}"
