import typing
from enum import Enum

import numpy as np

from .exceptions import UnknownNameError

E = typing.TypeVar("E", bound=Enum)


def to_dasherized(snake_str: str) -> str:
    """
    Converts a snake_case config key to its dasherized flag name.
    """
    return snake_str.replace("_", "-")


def parse_enum(enum_cls: typing.Type[E], value: typing.Union[str, E], kind: str) -> E:
    """Returns the enum member named by `value`.

    Args:
        enum_cls (typing.Type[E]): The enum to look the value up in.
        value (typing.Union[str, E]): A member or its string value.
        kind (str): What the value names, used in the error message.

    Raises:
        UnknownNameError: The value does not name a member. The message lists
                          the valid names.
    """
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(str(value).strip().lower())
    except ValueError:
        raise UnknownNameError(kind, str(value), [m.value for m in enum_cls])


def as_float_array(values: typing.Any, ndim: int = 1) -> np.ndarray:
    """
    Returns a float64 copy of `values` with at least `ndim` dimensions.
    """
    array = np.array(values, dtype=float)
    if ndim == 2 and array.ndim == 1:
        array = array.reshape(-1, 1) if array.size else array.reshape(0, 0)
    return array


def frozen(array: np.ndarray) -> np.ndarray:
    """
    Marks an array read-only and returns it.
    """
    array.setflags(write=False)
    return array


def to_jsonable(value: typing.Any) -> typing.Any:
    """
    Converts arrays, numpy scalars and enums into plain JSON values. NaN and
    infinities become None.
    """
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def from_jsonable(values: typing.Optional[typing.Sequence]) -> np.ndarray:
    """
    Inverse of `to_jsonable` for numeric vectors: None becomes NaN.
    """
    if values is None:
        return np.array([], dtype=float)
    return np.array([np.nan if v is None else v for v in values], dtype=float)
