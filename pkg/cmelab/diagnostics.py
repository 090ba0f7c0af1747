"""
Overlap diagnostics and a rule-of-thumb estimator recommendation.
"""
import json
import logging
import typing
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import constants
from .data import Dataset, make_grid, validate_grid
from .kernel import KernelSpec, default_trim_threshold, kernel_weights
from .types import Estimator
from .utils import to_jsonable

logger = logging.getLogger(__name__)

# Above this sample size the cross-fitted DML estimator is preferred.
LARGE_SAMPLE = 5000


def rule_of_thumb_bandwidth(moderator: np.ndarray) -> float:
    """
    Silverman's 1.06 sd n^(-1/5), used when no bandwidth is given.
    """
    return float(1.06 * np.std(moderator) * moderator.shape[0] ** -0.2)


@dataclass(frozen=True)
class OverlapDiagnostic:
    """Where along the moderator the data can support estimation.

    Props:
        bin_edges (np.ndarray):  Histogram edges over the range of X.
        counts (dict):           Histogram counts per arm ("treated",
                                 "control") for a binary treatment, or
                                 "all" otherwise.
        grid (np.ndarray):       Evaluation points.
        effective_n (np.ndarray): Kernel effective sample size per point; the
                                  smaller arm's for a binary treatment.
        flagged (np.ndarray):    Points below the trim threshold.
        bandwidth (float):       Bandwidth behind `effective_n`.
        trim_threshold (float):  The threshold.
    """

    bin_edges: np.ndarray
    counts: typing.Dict[str, np.ndarray]
    grid: np.ndarray
    effective_n: np.ndarray
    flagged: np.ndarray
    bandwidth: float
    trim_threshold: float

    @property
    def binary(self) -> bool:
        return "treated" in self.counts

    def to_dict(self) -> dict:
        return to_jsonable(
            {
                "bin_edges": self.bin_edges,
                "counts": self.counts,
                "grid": self.grid,
                "effective_n": self.effective_n,
                "flagged": self.flagged,
                "bandwidth": self.bandwidth,
                "trim_threshold": self.trim_threshold,
            }
        )

    def to_json(self, path: typing.Optional[typing.Union[str, Path]] = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    def histogram_frame(self) -> pd.DataFrame:
        """
        One row per histogram bin with its edges and per-arm counts.
        """
        frame = pd.DataFrame(
            {"bin_lower": self.bin_edges[:-1], "bin_upper": self.bin_edges[1:]}
        )
        for arm, counts in self.counts.items():
            frame[arm] = counts
        return frame


def overlap_diagnostic(
    dataset: Dataset,
    grid: typing.Optional[typing.Any] = None,
    spec: KernelSpec = KernelSpec(),
    trim_threshold: typing.Optional[float] = None,
    n_bins: int = constants.HISTOGRAM_BINS,
) -> OverlapDiagnostic:
    """Histograms of X by treatment arm and kernel effective sample sizes.

    A treatment declared binary gets one histogram per arm and its effective
    sample size is the smaller of the two arms', so a grid point is flagged
    whenever either arm is thin there. Without a numeric bandwidth in `spec`
    the rule-of-thumb bandwidth is used. The default threshold is that of the
    kernel estimator.
    """
    x, d = dataset.moderator, dataset.treatment
    grid = make_grid(dataset) if grid is None else validate_grid(dataset, grid)
    edges = np.histogram_bin_edges(x, bins=n_bins)
    binary = dataset.treatment_binary
    arms = {"treated": d == 1, "control": d == 0} if binary else {"all": np.ones(x.shape[0], bool)}
    counts = {arm: np.histogram(x[mask], bins=edges)[0] for arm, mask in arms.items()}

    bandwidth = spec.bandwidth if spec.bandwidth is not None else rule_of_thumb_bandwidth(x)
    threshold = default_trim_threshold(4 + dataset.p) if trim_threshold is None else trim_threshold
    effective = np.array(
        [
            min(kernel_weights((x[mask] - x0) / bandwidth, spec.kernel).sum() for mask in arms.values())
            for x0 in grid
        ]
    )
    flagged = effective < threshold
    if flagged.any():
        logger.info("%d of %d grid points fall below the trim threshold", int(flagged.sum()), grid.size)
    return OverlapDiagnostic(
        bin_edges=edges,
        counts=counts,
        grid=grid,
        effective_n=effective,
        flagged=flagged,
        bandwidth=float(bandwidth),
        trim_threshold=float(threshold),
    )


class Recommendation(typing.NamedTuple):
    estimator: Estimator
    reason: str


def recommend_estimator(dataset: Dataset, experimental: bool = False) -> Recommendation:
    """Suggests an estimator for the data at hand.

    Experiments, and data without covariates, need no adjustment beyond the
    kernel estimator. Observational data with covariates call for a debiased
    estimator: AIPW-LASSO (binary treatment) or PDS-LASSO (continuous) in
    small samples, cross-fitted DML in large ones.
    """
    if experimental:
        return Recommendation(Estimator.KERNEL, "randomized treatment: the kernel estimator suffices")
    if dataset.p == 0:
        return Recommendation(Estimator.KERNEL, "no covariates to adjust for")
    if dataset.n > LARGE_SAMPLE:
        return Recommendation(
            Estimator.DML_PLM, f"n = {dataset.n} > {LARGE_SAMPLE}: flexible cross-fitted nuisances"
        )
    if dataset.treatment_binary:
        return Recommendation(Estimator.AIPW_LASSO, "binary treatment with covariates")
    return Recommendation(Estimator.PDS_LASSO, "continuous treatment with covariates")
