"""
Input validation utilities for the parsing toolkit
Validates probabilities, counts, file paths, and command options
"""

from pathlib import Path
from typing import Iterable


class ValidationError(Exception):
    """Custom exception for validation errors"""
    pass


POS_COLUMNS = ('auto', 'xpos', 'upos')
ORACLE_KINDS = ('standard', 'hybrid')


def validate_probability(value: float, name: str = "probability") -> float:
    """
    Validate a probability in [0, 1]

    Args:
        value: Probability value
        name: Name of the parameter (for error messages)

    Returns:
        Validated probability

    Raises:
        ValidationError: If value is not a number in [0, 1]
    """
    try:
        value = float(value)
    except (ValueError, TypeError):
        raise ValidationError(f"Invalid {name}: {value}. Must be a number")

    if not (0.0 <= value <= 1.0):
        raise ValidationError(f"Invalid {name}: {value}. Must be between 0 and 1")

    return value


def validate_dropout(value: float, name: str = "dropout") -> float:
    """
    Validate a dropout rate; 1.0 would zero every unit

    Raises:
        ValidationError: If value is outside [0, 1)
    """
    value = validate_probability(value, name)
    if value >= 1.0:
        raise ValidationError(f"Invalid {name}: {value}. Must be below 1")
    return value


def validate_positive_integer(value: int, name: str = "value") -> int:
    """
    Validate positive integer

    Args:
        value: Integer value
        name: Name of the parameter (for error messages)

    Returns:
        Validated integer

    Raises:
        ValidationError: If value is invalid
    """
    if isinstance(value, bool):
        raise ValidationError(f"Invalid {name}: {value}. Must be an integer")
    try:
        value = int(value)
    except (ValueError, TypeError):
        raise ValidationError(f"Invalid {name}: {value}. Must be an integer")

    if value <= 0:
        raise ValidationError(f"Invalid {name}: {value}. Must be greater than 0")

    return value


def validate_choice(value: str, choices: Iterable[str], name: str = "value") -> str:
    """
    Validate that a string is one of the allowed options

    Returns:
        Lowercased value

    Raises:
        ValidationError: If value is not allowed
    """
    choices = tuple(choices)
    if value is None:
        raise ValidationError(f"{name} cannot be empty")

    value = str(value).lower().strip()

    if value not in choices:
        raise ValidationError(f"Invalid {name}: {value}. Must be one of {list(choices)}")

    return value


def validate_oracle_kind(oracle_kind: str) -> str:
    """Validate the training oracle name"""
    return validate_choice(oracle_kind, ORACLE_KINDS, "oracle")


def validate_pos_column(pos_column: str) -> str:
    """Validate which CoNLL-U column supplies POS tags"""
    return validate_choice(pos_column, POS_COLUMNS, "pos column")


def validate_punct_preset(preset: str, presets: Iterable[str]) -> str:
    """Validate a punctuation preset name"""
    return validate_choice(preset, presets, "punctuation preset")


def validate_existing_file(path: str, name: str = "file") -> Path:
    """
    Validate that an input file exists

    Returns:
        Path object

    Raises:
        ValidationError: If path is empty or is not a file
    """
    if not path:
        raise ValidationError(f"{name} path cannot be empty")

    path = Path(path)

    if not path.is_file():
        raise ValidationError(f"{name} not found: {path}")

    return path
