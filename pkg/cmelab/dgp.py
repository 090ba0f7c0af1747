"""
Named data-generating processes with samplers and analytic oracles for the
conditional marginal effect (CME) and the conditional average partial effect
(CAPE).
"""
import logging
import typing
from dataclasses import dataclass, field

import numpy as np

from . import constants
from .data import Dataset
from .exceptions import (
    InvalidConfigError,
    OracleUnavailableError,
    UnsupportedDgpError,
    ValidationError,
)
from .numerics import rng_stream
from .parallel import run_tasks
from .types import DgpName, Stream
from .utils import parse_enum

logger = logging.getLogger(__name__)

Params = typing.Mapping[str, float]
Draws = typing.Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class DgpSpec:
    """A data-generating process.

    Props:
        name (DgpName):           Which process.
        parameters (dict):        Named real parameters.
        covariate_names (tuple):  Names of the Z columns.
        binary (bool):            Whether the treatment is 0/1.
        draw (callable):          (n, rng, parameters) -> (D, X, Z).
        response (callable):      Noise-free outcome (d, x, z, parameters).
        cme (callable):           x -> theta(x), or None without an oracle.
        cape (callable):          (d, x) -> rho(d, x), or None.
        formulas (dict):          The oracles as text.
    """

    name: DgpName
    parameters: typing.Dict[str, float]
    covariate_names: typing.Tuple[str, ...]
    binary: bool
    draw: typing.Callable[[int, np.random.Generator, Params], Draws]
    response: typing.Callable[[np.ndarray, np.ndarray, np.ndarray, Params], np.ndarray]
    cme: typing.Optional[typing.Callable[[np.ndarray, Params], np.ndarray]] = None
    cape: typing.Optional[
        typing.Callable[[np.ndarray, np.ndarray, Params], np.ndarray]
    ] = None
    formulas: typing.Dict[str, str] = field(default_factory=dict)

    @property
    def has_oracle(self) -> bool:
        return self.cme is not None


def _correlated_normals(n: int, rng: np.random.Generator, correlation: float):
    first = rng.standard_normal(n)
    second = correlation * first + np.sqrt(1 - correlation**2) * rng.standard_normal(n)
    return first, second


def _draw_key(n, rng, params) -> Draws:
    d, x = _correlated_normals(n, rng, params["correlation"])
    return d, x, np.empty((n, 0))


def _draw_custom(n, rng, params) -> Draws:
    d, x = _correlated_normals(n, rng, params["correlation"])
    return d, params["shift"] + params["scale"] * x, np.empty((n, 0))


def _quadratic_response(d, x, z, params):
    return d**2 - 0.5 * d


def _draw_fig3(n, rng, params) -> Draws:
    x = rng.uniform(-2.0, 2.0, n)
    z = rng.standard_normal((n, 2))
    logit = 0.5 * x + 0.5 * z[:, 0]
    d = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-logit))).astype(float)
    return d, x, z


def fig3_propensity(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """
    The true propensity of the binary-treatment process.
    """
    return 1.0 / (1.0 + np.exp(-(0.5 * x + 0.5 * z[:, 0])))


def _fig3_response(d, x, z, params):
    z1, z2 = z[..., 0], z[..., 1]
    return (
        1
        + x**2
        + d
        - x**2 * d
        + np.exp(z1 + 0.5 * x) * z2
        + z1**2
        - 2 * (z2 > 0) * z2
        + 3 * np.sin(z1 + z2)
    )


def _draw_fig4(n, rng, params) -> Draws:
    x = rng.uniform(-2.0, 2.0, n)
    d = 0.5 * x + rng.standard_normal(n)
    return d, x, np.empty((n, 0))


def _fig4_response(d, x, z, params):
    return 1 + 1.5 * x + d**2 - d * x**2


def _draw_linear_null(n, rng, params) -> Draws:
    x = rng.standard_normal(n)
    d = 0.5 * x + rng.standard_normal(n)
    return d, x, np.empty((n, 0))


def _linear_null_response(d, x, z, params):
    return 1 + d + x


_DEFAULTS: typing.Dict[DgpName, typing.Dict[str, float]] = {
    DgpName.KEY_A1: {"correlation": 0.5},
    DgpName.FIG3_BINARY: {},
    DgpName.FIG4_CONTINUOUS: {},
    DgpName.LINEAR_NULL: {},
    DgpName.CUSTOM: {"shift": 0.0, "scale": 1.0, "correlation": 0.5},
}


def _build(name: DgpName, params: typing.Dict[str, float]) -> DgpSpec:
    if name is DgpName.KEY_A1:
        rho = params["correlation"]
        return DgpSpec(
            name=name,
            parameters=params,
            covariate_names=(),
            binary=False,
            draw=_draw_key,
            response=_quadratic_response,
            cme=lambda x, p: 2 * p["correlation"] * np.asarray(x, dtype=float) - 0.5,
            cape=lambda d, x, p: 2 * np.asarray(d, dtype=float) - 0.5 + 0 * np.asarray(x),
            formulas={
                "outcome": "Y = D^2 - 0.5 D + e",
                "cme": f"theta(x) = {2 * rho:g} x - 0.5",
                "cape": "rho(d, x) = 2 d - 0.5",
            },
        )
    if name is DgpName.FIG3_BINARY:
        return DgpSpec(
            name=name,
            parameters=params,
            covariate_names=("Z1", "Z2"),
            binary=True,
            draw=_draw_fig3,
            response=_fig3_response,
            cme=lambda x, p: 1 - np.asarray(x, dtype=float) ** 2,
            formulas={
                "outcome": "Y = 1 + X^2 + D - X^2 D + exp(Z1 + 0.5 X) Z2 + Z1^2 "
                "- 2 1(Z2 > 0) Z2 + 3 sin(Z1 + Z2) + e",
                "propensity": "P(D = 1 | X, Z) = logistic(0.5 X + 0.5 Z1)",
                "cme": "theta(x) = 1 - x^2",
            },
        )
    if name is DgpName.FIG4_CONTINUOUS:
        return DgpSpec(
            name=name,
            parameters=params,
            covariate_names=(),
            binary=False,
            draw=_draw_fig4,
            response=_fig4_response,
            cme=lambda x, p: np.asarray(x, dtype=float) - np.asarray(x, dtype=float) ** 2,
            cape=lambda d, x, p: 2 * np.asarray(d, dtype=float) - np.asarray(x, dtype=float) ** 2,
            formulas={
                "outcome": "Y = 1 + 1.5 X + D^2 - D X^2 + e",
                "cme": "theta(x) = x - x^2",
                "cape": "rho(d, x) = 2 d - x^2",
            },
        )
    if name is DgpName.LINEAR_NULL:
        return DgpSpec(
            name=name,
            parameters=params,
            covariate_names=(),
            binary=False,
            draw=_draw_linear_null,
            response=_linear_null_response,
            cme=lambda x, p: np.ones_like(np.asarray(x, dtype=float)),
            cape=lambda d, x, p: np.ones_like(np.asarray(d, dtype=float) + np.asarray(x)),
            formulas={
                "outcome": "Y = 1 + D + X + e",
                "cme": "theta(x) = 1",
                "cape": "rho(d, x) = 1",
            },
        )
    return DgpSpec(
        name=name,
        parameters=params,
        covariate_names=(),
        binary=False,
        draw=_draw_custom,
        response=_quadratic_response,
        formulas={"outcome": "Y = D^2 - 0.5 D + e, X = shift + scale X0"},
    )


def get_dgp(name: typing.Union[DgpName, str], **parameters: float) -> DgpSpec:
    """Returns the named process, with any parameters overriding its defaults.

    Raises:
        UnknownNameError: The name is not a known process.
        InvalidConfigError: A parameter is unknown or out of range.
    """
    name = parse_enum(DgpName, name, "dgp")
    params = dict(_DEFAULTS[name])
    for key, value in parameters.items():
        if key not in params:
            raise InvalidConfigError(
                f"dgp_params.{key}",
                f"not a parameter of {name.value}; valid: {sorted(params) or 'none'}",
            )
        params[key] = float(value)
    if "correlation" in params and not -1 < params["correlation"] < 1:
        raise InvalidConfigError("dgp_params.correlation", "must lie strictly between -1 and 1")
    if "scale" in params and not params["scale"] > 0:
        raise InvalidConfigError("dgp_params.scale", "must be positive")
    return _build(name, params)


def sample(
    spec: DgpSpec,
    n: int,
    seed: int = constants.DEFAULT_SEED,
    n_jobs: typing.Optional[int] = None,
) -> Dataset:
    """Draws n observations.

    Rows are drawn in chunks of 65536; chunk c uses its own stream
    rng_stream(seed, c), so the sample is the same for any thread count.

    Raises:
        ValidationError: n is not positive.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    chunk = constants.SAMPLE_CHUNK
    n_chunks = -(-n // chunk)

    def draw_chunk(c: int) -> typing.Tuple[np.ndarray, ...]:
        size = min(chunk, n - c * chunk)
        rng = rng_stream(seed, c, Stream.SAMPLE)
        d, x, z = spec.draw(size, rng, spec.parameters)
        y = spec.response(d, x, z, spec.parameters) + rng.standard_normal(size)
        return y, d, x, z

    parts = run_tasks(draw_chunk, n_chunks, n_jobs)
    y, d, x, z = (np.concatenate([part[i] for part in parts]) for i in range(4))
    return Dataset.from_arrays(
        y,
        d,
        x,
        z,
        column_names=("Y", "D", "X", *spec.covariate_names),
        treatment_binary=spec.binary,
    )


def cme_oracle(spec: DgpSpec, x: typing.Any) -> typing.Union[float, np.ndarray]:
    """The true conditional marginal effect theta(x).

    Raises:
        OracleUnavailableError: The process has no analytic oracle.
    """
    if spec.cme is None:
        raise OracleUnavailableError(spec.name.value, "cme")
    value = spec.cme(x, spec.parameters)
    return float(value) if np.ndim(value) == 0 else value


def cape_oracle(spec: DgpSpec, d: typing.Any, x: typing.Any) -> typing.Union[float, np.ndarray]:
    """The conditional average partial effect rho(d, x) = E[dY/dD | D = d, X = x].

    Raises:
        UnsupportedDgpError: The process has no CAPE oracle.
    """
    if spec.cape is None:
        supported = [n.value for n in DgpName if _build(n, dict(_DEFAULTS[n])).cape is not None]
        raise UnsupportedDgpError("cape_oracle", spec.name.value, supported)
    value = spec.cape(d, x, spec.parameters)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class PlimOracle:
    """Probability limit of the linear interaction fit (const, D, X, D:X).

    Props:
        closed_form (np.ndarray): M^-1 b from the Gaussian moments.
        monte_carlo (np.ndarray): M^-1 b from simulated moments, or None.
        draws (int):              Simulated draws behind `monte_carlo`.
    """

    closed_form: np.ndarray
    monte_carlo: typing.Optional[np.ndarray]
    draws: int

    def cme(self, x: typing.Any) -> np.ndarray:
        """
        The marginal effect line beta_D + beta_DX x implied by the limit.
        """
        return self.closed_form[1] + self.closed_form[3] * np.asarray(x, dtype=float)


def linear_plim_oracle(
    spec: DgpSpec, draws: int = 10**7, seed: int = constants.DEFAULT_SEED
) -> PlimOracle:
    """The population OLS coefficients of Y on (1, D, X, DX) for the key process.

    With D, X standard normal at correlation r, M = E[ZZ'] and b = E[ZY] give
    beta = ((1 - r^2) / (1 + r^2), -0.5, 0, 2r / (1 + r^2)); at r = 0.5 that is
    (0.6, -0.5, 0, 0.8). With `draws > 0` the same system is also built from
    simulated moments, accumulated chunk by chunk.

    Raises:
        UnsupportedDgpError: The process is not key_a1.
    """
    if spec.name is not DgpName.KEY_A1:
        raise UnsupportedDgpError("linear_plim_oracle", spec.name.value, [DgpName.KEY_A1.value])
    r = spec.parameters["correlation"]
    closed_form = np.array([(1 - r**2) / (1 + r**2), -0.5, 0.0, 2 * r / (1 + r**2)])

    monte_carlo = None
    if draws > 0:
        moments = np.zeros((4, 4))
        cross = np.zeros(4)
        chunk = constants.SAMPLE_CHUNK
        for c in range(-(-draws // chunk)):
            size = min(chunk, draws - c * chunk)
            rng = rng_stream(seed, c, Stream.SAMPLE)
            d, x, _ = spec.draw(size, rng, spec.parameters)
            y = spec.response(d, x, None, spec.parameters) + rng.standard_normal(size)
            design = np.column_stack([np.ones(size), d, x, d * x])
            moments += design.T @ design
            cross += design.T @ y
        monte_carlo = np.linalg.solve(moments / draws, cross / draws)
        logger.info("simulated plim from %d draws: %s", draws, np.round(monte_carlo, 4))
    return PlimOracle(closed_form=closed_form, monte_carlo=monte_carlo, draws=draws)


def finite_difference_effect(
    spec: DgpSpec,
    dataset: Dataset,
    x0: float,
    width: float = 0.05,
    step: float = 1e-4,
) -> float:
    """
    Averages the central difference of the noise-free outcome in D over the
    sampled observations with |X - x0| < width / 2. Converges to the CME at x0.
    """
    window = np.abs(dataset.moderator - x0) < width / 2
    if not window.any():
        raise ValidationError(f"no observations within {width / 2} of {x0}")
    d = dataset.treatment[window]
    x = dataset.moderator[window]
    z = dataset.covariates[window]
    upper = spec.response(d + step, x, z, spec.parameters)
    lower = spec.response(d - step, x, z, spec.parameters)
    return float(np.mean((upper - lower) / (2 * step)))
