"""Input validation utilities for command-line arguments."""
import re
from typing import List, Optional, Sequence, Tuple


def validate_label(label: str, max_length: int = 64) -> Tuple[bool, Optional[str]]:
    """Validate a source or output label.

    Returns:
        tuple: (is_valid, error_message)
    """
    if not label or not label.strip():
        return False, "Label cannot be empty"

    if len(label) > max_length:
        return False, f"Label too long (max {max_length} characters)"

    # Allow alphanumeric, dot, underscore, hyphen
    if not re.match(r'^[a-zA-Z0-9._-]+$', label):
        return False, "Invalid label format. Use only letters, numbers, dot, underscore, and hyphen."

    return True, None


def validate_positive_int(value: int, name: str) -> Tuple[bool, Optional[str]]:
    """Validate a strictly positive count.

    Returns:
        tuple: (is_valid, error_message)
    """
    if value is None or value < 1:
        return False, f"{name} must be a positive integer"
    return True, None


def validate_seed(seed: int) -> Tuple[bool, Optional[str]]:
    """Validate a random seed (non-negative, fits in 64 bits).

    Returns:
        tuple: (is_valid, error_message)
    """
    if seed < 0:
        return False, "Seed must be non-negative"
    if seed >= 2**64:
        return False, "Seed must fit in 64 bits"
    return True, None


def validate_chain_settings(samples: int, burn_in: int, thin: int) -> Tuple[bool, Optional[str]]:
    """Validate sampler lengths.

    Returns:
        tuple: (is_valid, error_message)
    """
    if samples < 1:
        return False, "Number of samples must be positive"
    if burn_in < 0:
        return False, "Burn-in cannot be negative"
    if burn_in >= samples:
        return False, "Burn-in must be smaller than the number of samples"
    if thin < 1:
        return False, "Thinning interval must be at least 1"
    return True, None


def validate_downsample_args(
    method: str, m: Optional[int], threshold: Optional[float], min_box: int, max_box: int
) -> Tuple[bool, Optional[str]]:
    """Validate downsampling flags for the chosen method.

    Returns:
        tuple: (is_valid, error_message)
    """
    if method == "uniform":
        if m is None or m < 1:
            return False, "--m must be a positive integer for uniform downsampling"
        return True, None
    if method == "quadtree":
        if threshold is None or threshold <= 0:
            return False, "--threshold must be positive for quadtree downsampling"
        if min_box < 1 or max_box < 1:
            return False, "--min-box and --max-box must be positive"
        if min_box > max_box:
            return False, "--min-box cannot exceed --max-box"
        return True, None
    return False, f"Unknown downsampling method: {method}"


def validate_theta_bounds(
    bounds: Sequence[Sequence[float]], n_params: int
) -> Tuple[bool, Optional[List[Tuple[float, float]]], Optional[str]]:
    """Validate a box for the calibration parameters.

    Returns:
        tuple: (is_valid, bounds, error_message)
    """
    if len(bounds) != n_params:
        return False, None, f"Expected {n_params} parameter bounds, got {len(bounds)}"
    out = []
    for pair in bounds:
        if len(pair) != 2:
            return False, None, "Each bound must be a (lower, upper) pair"
        lo, hi = float(pair[0]), float(pair[1])
        if not lo < hi:
            return False, None, f"Empty interval ({lo}, {hi})"
        out.append((lo, hi))
    return True, out, None
