"""Domain records for multi-survey count data and CSV ingestion.

CSV schema: header row with required columns ``survey``, ``coord_x``,
``coord_y``, ``count``, optional ``log_offset``; every remaining column is a
covariate.  Comma-delimited UTF-8 with ``.`` decimal point.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .basis import BasisConfig
from .exceptions import DataError

REQUIRED_COLUMNS = ("survey", "coord_x", "coord_y", "count")
OPTIONAL_COLUMNS = ("log_offset",)

VARIANTS = ("independent", "additive_constant", "additive_field", "single_index")
LINKS = ("fourpl", "ispline")


@dataclass(frozen=True)
class SurveyObservation:
    survey_id: int
    location: tuple[float, float]
    count: int
    log_offset: float = 0.0


@dataclass(frozen=True)
class SurveyDataset:
    """Column-oriented store of observations across m surveys.

    Immutable after construction; rows are kept in input order and the
    covariate matrix is row-aligned with the observation arrays.
    """

    survey_ids: np.ndarray      # (N,) int, values in 1..m
    coords: np.ndarray          # (N, 2) float
    counts: np.ndarray          # (N,) int64
    log_offsets: np.ndarray     # (N,) float
    covariates: np.ndarray      # (N, p) float
    covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        sid = np.asarray(self.survey_ids, dtype=int)
        coords = np.asarray(self.coords, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        off = np.asarray(self.log_offsets, dtype=float)
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(len(cov), 1) if cov.size else cov.reshape(len(sid), 0)
        n = len(sid)
        if coords.shape != (n, 2):
            raise DataError(f"coords must be ({n}, 2), got {coords.shape}")
        if counts.shape != (n,) or off.shape != (n,):
            raise DataError("counts and log_offsets must be length-N vectors")
        if cov.shape[0] != n:
            raise DataError(
                f"covariate matrix has {cov.shape[0]} rows for {n} observations"
            )
        if np.any(counts < 0):
            bad = int(np.argmax(counts < 0))
            raise DataError(f"negative count at row {bad}")
        if not np.all(np.isfinite(coords)):
            raise DataError("non-finite coordinates")
        if not np.all(np.isfinite(cov)):
            raise DataError("non-finite covariate entries")
        if not np.all(np.isfinite(off)):
            raise DataError("non-finite log offsets")
        if n and sid.min() < 1:
            raise DataError("survey ids must be >= 1")
        names = tuple(self.covariate_names) or tuple(
            f"x{j + 1}" for j in range(cov.shape[1])
        )
        if len(names) != cov.shape[1]:
            raise DataError("covariate_names length must match covariate columns")
        object.__setattr__(self, "survey_ids", sid)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "log_offsets", off)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "covariate_names", names)

    # -- basic shape info -------------------------------------------------
    @property
    def n_obs(self) -> int:
        return len(self.survey_ids)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_surveys(self) -> int:
        return int(self.survey_ids.max()) if self.n_obs else 0

    def survey_sizes(self) -> np.ndarray:
        return np.bincount(self.survey_ids, minlength=self.n_surveys + 1)[1:]

    @property
    def observations(self) -> list[SurveyObservation]:
        return [
            SurveyObservation(
                survey_id=int(self.survey_ids[i]),
                location=(float(self.coords[i, 0]), float(self.coords[i, 1])),
                count=int(self.counts[i]),
                log_offset=float(self.log_offsets[i]),
            )
            for i in range(self.n_obs)
        ]

    # -- derived datasets --------------------------------------------------
    def subset(self, index) -> "SurveyDataset":
        index = np.asarray(index)
        return SurveyDataset(
            survey_ids=self.survey_ids[index],
            coords=self.coords[index],
            counts=self.counts[index],
            log_offsets=self.log_offsets[index],
            covariates=self.covariates[index],
            covariate_names=self.covariate_names,
        )

    def survey_subset(self, survey_id: int, renumber: bool = True) -> "SurveyDataset":
        mask = self.survey_ids == survey_id
        sub = self.subset(mask)
        if renumber:
            sub = replace(sub, survey_ids=np.ones(sub.n_obs, dtype=int))
        return sub

    def standardized(self) -> "SurveyDataset":
        """Covariates rescaled to mean 0 / variance 1 (constant columns kept)."""
        cov = self.covariates
        mean = cov.mean(axis=0)
        sd = cov.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return replace(self, covariates=(cov - mean) / sd)

    def bounding_box(self) -> tuple[float, float, float, float]:
        return (
            float(self.coords[:, 0].min()),
            float(self.coords[:, 0].max()),
            float(self.coords[:, 1].min()),
            float(self.coords[:, 1].max()),
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(
            {
                "survey": self.survey_ids,
                "coord_x": self.coords[:, 0],
                "coord_y": self.coords[:, 1],
                "count": self.counts,
                "log_offset": self.log_offsets,
            }
        )
        for j, name in enumerate(self.covariate_names):
            df[name] = self.covariates[:, j]
        return df


@dataclass(frozen=True)
class ModelSpec:
    """Model variant plus configuration shared by fitting and prediction."""

    variant: str
    link: str | None = None                 # single_index only
    reference_survey: int | None = None     # additive_field only
    basis_config: BasisConfig | None = None
    include_fine_scale: bool = False
    spline_degree: int = 2
    spline_count: int = 7

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DataError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "single_index":
            if self.link not in LINKS:
                raise DataError("single_index requires link 'fourpl' or 'ispline'")
        elif self.link is not None:
            raise DataError("link is only meaningful for the single_index variant")
        if self.variant == "additive_field":
            if self.reference_survey is None:
                object.__setattr__(self, "reference_survey", 1)
        elif self.reference_survey is not None:
            raise DataError("reference_survey is only meaningful for additive_field")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "link": self.link,
            "reference_survey": self.reference_survey,
            "basis_config": None if self.basis_config is None else self.basis_config.to_dict(),
            "include_fine_scale": self.include_fine_scale,
            "spline_degree": self.spline_degree,
            "spline_count": self.spline_count,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        bc = d.get("basis_config")
        return ModelSpec(
            variant=d["variant"],
            link=d.get("link"),
            reference_survey=d.get("reference_survey"),
            basis_config=None if bc is None else BasisConfig.from_dict(bc),
            include_fine_scale=bool(d.get("include_fine_scale", False)),
            spline_degree=int(d.get("spline_degree", 2)),
            spline_count=int(d.get("spline_count", 7)),
        )


def load_csv(path, schema: dict | None = None, standardize: bool = False) -> SurveyDataset:
    """Read a dataset from CSV.

    ``schema`` optionally remaps role -> column name for the required roles
    ('survey', 'coord_x', 'coord_y', 'count', 'log_offset').  Rows with a
    missing mapped field are rejected with their row indices reported.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    colmap = {r: r for r in REQUIRED_COLUMNS + OPTIONAL_COLUMNS}
    if schema:
        colmap.update(schema)

    df = pd.read_csv(path)
    missing_cols = [colmap[r] for r in REQUIRED_COLUMNS if colmap[r] not in df.columns]
    if missing_cols:
        raise DataError(f"missing required column(s) {missing_cols} in {path}")

    has_offset = colmap["log_offset"] in df.columns
    mapped = [colmap[r] for r in REQUIRED_COLUMNS] + (
        [colmap["log_offset"]] if has_offset else []
    )
    na_rows = df.index[df[mapped].isna().any(axis=1)].tolist()
    if na_rows:
        raise DataError(f"missing value in mapped column(s) at row(s) {na_rows}")

    counts_raw = pd.to_numeric(df[colmap["count"]], errors="coerce")
    bad = df.index[counts_raw.isna() | (counts_raw != counts_raw.round()) | (counts_raw < 0)]
    if len(bad):
        raise DataError(
            f"count column must hold non-negative integers; bad row(s) {bad.tolist()}"
        )

    covariate_cols = [c for c in df.columns if c not in set(mapped)]
    dataset = SurveyDataset(
        survey_ids=df[colmap["survey"]].to_numpy(dtype=int),
        coords=df[[colmap["coord_x"], colmap["coord_y"]]].to_numpy(dtype=float),
        counts=counts_raw.to_numpy(dtype=np.int64),
        log_offsets=(
            df[colmap["log_offset"]].to_numpy(dtype=float)
            if has_offset
            else np.zeros(len(df))
        ),
        covariates=df[covariate_cols].to_numpy(dtype=float)
        if covariate_cols
        else np.zeros((len(df), 0)),
        covariate_names=tuple(covariate_cols),
    )
    return dataset.standardized() if standardize else dataset


def write_csv(dataset: SurveyDataset, path) -> None:
    dataset.to_frame().to_csv(path, index=False)


def validate(dataset: SurveyDataset, spec: ModelSpec) -> list[str]:
    """Spec-compatibility checks.  Returns a list of violation messages
    (empty when the dataset and spec are mutually consistent)."""
    violations: list[str] = []
    m = dataset.n_surveys
    if dataset.n_obs == 0:
        violations.append("dataset has no observations")
        return violations
    present = np.unique(dataset.survey_ids)
    if not np.array_equal(present, np.arange(1, m + 1)):
        violations.append(
            f"survey ids must cover 1..m contiguously; found {present.tolist()}"
        )
    if spec.variant == "additive_field":
        ref = spec.reference_survey
        if ref is None or not 1 <= ref <= m:
            violations.append(
                f"reference_survey={ref} outside 1..{m}"
            )
    if spec.variant == "single_index":
        p = dataset.n_covariates
        if p == 0:
            violations.append("single_index requires at least one covariate")
        const = [
            dataset.covariate_names[j]
            for j in range(p)
            if np.ptp(dataset.covariates[:, j]) == 0
        ]
        if const:
            violations.append(
                f"constant covariate column(s) {const} are not identifiable "
                "in the single_index variant (intercept must be omitted)"
            )
        if p == 1:
            violations.append(
                "single_index with p=1: the identifiability constraint fixes "
                "the only slope, leaving no free covariate effect"
            )
    return violations
