"""Validated configuration cells and the settings collections built from them.

|Param| holds a single named value with optional mutability and value checks.
|Settings| groups the |Param| objects a solver or study reads. |Empty| marks a
setting that has no default and must be supplied by the caller (the packing
floor ``eps`` is the main example).

The root exception and warning classes of |flatpack| are also defined here,
along with :py:class:`ParameterError`.
"""
from typing import Any, Callable, Dict, Iterable, Optional, Type, Union

import json
import logging
import math

logger = logging.getLogger(__name__)


class FlatpackError(Exception):
    """Base class for all errors raised by |flatpack|."""

    pass


class FlatpackWarning(Warning):
    """Base class for all warnings emitted by |flatpack|."""

    pass


class ParameterError(FlatpackError):
    """Error for Param-specific exceptions."""

    pass


class Empty:
    """An empty class representing a setting without a value.

    At initialization, if an instance does not already exist it is created. No
    instance of Empty exists until it has been instantiated once.
    """

    def __new__(cls):
        if not hasattr(cls, "_singleton_instance"):
            cls._singleton_instance = super(Empty, cls).__new__(cls)

        return cls._singleton_instance

    def __eq__(self, other):
        return other is self

    def __ne__(self, other):
        return not (self == other)

    def __repr__(self):
        return "Empty()"


class Param:
    """Container for a single configuration value.

    |Param| uses `__slots__`, and no attributes other than those listed below
    may be assigned to |Param| objects.

    Attributes
    ----------
    _name : :py:obj:`str`
        Parameter name.

    _value : :py:class:`~typing.Any`
        Value of the parameter. If the parameter does not contain an assigned
        value, this should be |Empty|.

    _type : :py:class:`~typing.type`
        The type of :py:attr:`Param._value`.

    constant : :py:obj:`bool`
        If True, assigning through :py:attr:`Param.value` raises a
        |ParameterError|.

    restrict : `Callable` or `None`
        If a callable, it is invoked on every candidate value. A falsy result
        raises a |ParameterError|.

        .. code-block:: python

            tol = Param("tol", 1e-10, restrict=lambda x: x > 0)

            # Raises ParameterError.
            tol.value = -1.0
    """

    __slots__ = ["_name", "_value", "constant", "_type", "restrict"]

    def __init__(
        self,
        name: str,
        value: Any = Empty(),
        constant: bool = False,
        restrict: Union[Callable, None] = None,
    ):
        """Initializes the Param object.

        Arguments
        ---------
        name : :py:obj:`str`
            Parameter name.

        value : :py:class:`~typing.Any`
            Initial value. Defaults to |Empty|. A non-empty initial value is
            checked against ``restrict``.

        constant : :py:obj:`bool`
            True if the value may not be reassigned.

        restrict : :py:class:`~typing.Callable` or `None`
            Called on every candidate value; a falsy result is rejected.
        """
        self._name = name
        self.constant = constant
        self.restrict = restrict

        if not isinstance(value, Empty):
            self._check(value)

        self._value = value
        self._type = type(self._value)

    def __repr__(self):
        info = {
            "name": self.name,
            "value": self.value,
            "constant": self.constant,
            "type": self.type,
        }

        infostrings = [f"{key}={repr(value)}" for key, value in info.items()]

        return f"Param({', '.join(infostrings)})"

    def __eq__(self, other):
        if not isinstance(other, Param):
            return False

        for attr in self.__slots__:
            if getattr(self, attr) != getattr(other, attr):
                return False

        return True

    def _check(self, new_value: Any):
        if self.restrict is not None and not self.restrict(new_value):
            msg = (
                f"Parameter {self._name} restriction rejected value: "
                f"{new_value!r}"
            )
            logger.error(msg)
            raise ParameterError(msg)

    @property
    def name(self):
        return self._name

    @property
    def value(self):
        return self._value

    @value.setter
    def value(self, new_value: Any):
        if self.constant:
            msg = f"Parameter {self.name} is not mutable."
            logger.error(msg)
            raise ParameterError(msg)

        self._check(new_value)

        self._value = new_value
        self._type = type(self._value)

    @property
    def type(self) -> Type:
        return self._type

    @property
    def is_empty(self) -> bool:
        return isinstance(self._value, Empty)


def _positive(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x) and x > 0


def _positive_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x > 0


def _packing_floor(x) -> bool:
    return isinstance(x, (int, float)) and 0 < x < 1


def _segment_count(x) -> bool:
    return _positive_int(x) and x >= 2


class Settings:
    """A named collection of |Param| objects.

    Attributes
    ----------
    name : ``str``
        Label used in log messages and ``repr``.

    _params : ``dict``, ``str``: |Param|
        All parameters managed by this object, in insertion order.
    """

    _params: Dict[str, Param]

    def __init__(self, name: str, params: Iterable[Param] = ()):
        self.name = name
        self._params = {}

        for p in params:
            self.add_param(p.name, p)

    def __repr__(self):
        values = {name: p.value for name, p in self._params.items()}
        return f"Settings(name={self.name!r}, params={values})"

    def __contains__(self, parameter_name: str) -> bool:
        return parameter_name in self._params

    def __getitem__(self, parameter_name: str) -> Any:
        return self.get_value(parameter_name)

    @property
    def params(self) -> Dict[str, Param]:
        return dict(self._params)

    def add_param(
        self,
        parameter_name: str,
        value: Any,
        constant: bool = False,
        restrict: Union[Callable, None] = None,
    ):
        """Adds a new parameter. ``value`` may itself be a |Param|, in which
        case it is stored as-is.
        """
        if not isinstance(value, Param):
            new_param = Param(parameter_name, value, constant, restrict)

        else:
            new_param = value

        self._params[parameter_name] = new_param

    def get_value(self, parameter_name: str) -> Any:
        """Returns the value of a parameter.

        Raises
        ------
        KeyError
            If the parameter is unknown.

        |ParameterError|
            If the parameter has no value (is |Empty|).
        """
        if parameter_name not in self._params:
            msg = f"{self.name} settings have no parameter {parameter_name}."
            logger.error(msg)
            raise KeyError(msg)

        p = self._params[parameter_name]

        if p.is_empty:
            msg = f"{self.name} setting {parameter_name} must be supplied."
            logger.error(msg)
            raise ParameterError(msg)

        return p.value

    def set_param(self, parameter_name: str, new_value: Any):
        """Assigns a new value to an existing parameter, applying its
        ``constant`` flag and ``restrict`` check.
        """
        if parameter_name not in self._params:
            msg = f"{self.name} settings have no parameter {parameter_name}."
            logger.error(msg)
            raise KeyError(msg)

        self._params[parameter_name].value = new_value
        logger.debug(f"{self.name}: {parameter_name} = {new_value!r}")

    def update(self, values: Dict[str, Any], ignore_none: bool = True):
        """Sets several parameters at once. Entries whose value is ``None``
        are skipped when ``ignore_none`` is True, which lets unset CLI flags
        pass straight through.
        """
        for key, value in values.items():
            if value is None and ignore_none:
                continue

            self.set_param(key, value)

    def as_dict(self, *names: str) -> Dict[str, Any]:
        """Returns ``{name: value}`` for the given names (all by default).
        Empty parameters are left out.
        """
        keys = names if names else tuple(self._params)

        return {
            k: self._params[k].value
            for k in keys
            if not self._params[k].is_empty
        }

    def load(self, path: str, section: Optional[str] = None):
        """Updates this collection from a JSON object stored at ``path``.
        With ``section``, only the object under that key is used (a missing
        section changes nothing). Unknown keys raise :py:class:`KeyError`.
        """
        with open(path, "r") as infile:
            values = json.load(infile)

        if section is not None and isinstance(values, dict):
            values = values.get(section, {})

        if not isinstance(values, dict):
            msg = f"Settings file {path} must hold a JSON object."
            logger.error(msg)
            raise ParameterError(msg)

        logger.info(f"Loading {self.name} settings from {path}.")
        self.update(values, ignore_none=False)


def solver_settings() -> Settings:
    """Defaults for the curvature solvers in :py:mod:`flatpack.uniformize`."""
    return Settings(
        "solver",
        [
            Param("tol", 1e-10, restrict=_positive),
            Param("max_iter", 100, restrict=_positive_int),
            Param("max_halvings", 30, restrict=_positive_int),
            Param("num_steps", 64, restrict=_positive_int),
            Param("linear_tol", 1e-12, restrict=_positive),
            Param("linear_iter_factor", 50, restrict=_positive_int),
        ],
    )


def experiment_settings() -> Settings:
    """Defaults for :py:mod:`flatpack.experiment`. ``eps`` is deliberately
    left |Empty|: the packing floor is always chosen by the caller.
    """
    return Settings(
        "experiment",
        [
            Param("eps", Empty(), restrict=_packing_floor),
            Param("field", "default", restrict=lambda x: x in FIELD_NAMES),
            Param("amplitude", 0.05, restrict=lambda x: math.isfinite(x)),
            Param("quadrature_order", 8, restrict=_positive_int),
            Param("quadrature_panels", 8, restrict=_positive_int),
            Param("geodesic_segments", 32, restrict=_segment_count),
            Param("workers", 1, restrict=_positive_int),
        ],
    )


FIELD_NAMES = ("default", "zero", "constant", "sine")
