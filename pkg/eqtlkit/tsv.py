"""Tab-separated matrix files: header row, subject id in the first column, `NA` for missing."""
from __future__ import annotations
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from eqtlkit.DataSet import DataSet

LOGGER = logging.getLogger(__name__)

PathLike = Union[str, Path]
NA = "NA"
FLOAT_FORMAT = "%.17g"


class DataFormatError(ValueError):
    """A matrix file that cannot be parsed into the expected numeric table."""

    def __init__(self, path: PathLike, message: str):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


def read_matrix(path: PathLike) -> Tuple[List[str], List[str], np.ndarray]:
    """Row ids, column names and values (NaN for `NA`) of a TSV matrix."""
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, na_values=[NA], keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataFormatError(path, f"not a tab-separated table ({exc})") from exc
    if frame.shape[1] < 2:
        raise DataFormatError(path, "no data columns")
    # ids are labels, never numbers
    frame = frame.set_index(frame.columns[0])
    ids = [str(i) for i in frame.index]
    dupes = sorted({i for i in ids if ids.count(i) > 1}) if frame.index.has_duplicates else []
    if dupes:
        raise DataFormatError(path, f"duplicate subject ids {dupes[:5]}")
    values = frame.apply(pd.to_numeric, errors="coerce")
    bad = values.isna() & frame.notna()
    if bad.values.any():
        r, c = np.argwhere(bad.values)[0]
        raise DataFormatError(path, f"non-numeric value {frame.iat[r, c]!r} at row '{ids[r]}', column '{frame.columns[c]}'")
    return ids, [str(c) for c in frame.columns], values.to_numpy(dtype=float)


def write_matrix(
    path: PathLike,
    values,
    row_ids: Sequence[str],
    col_names: Sequence[str],
    index_label: str = "subject_id",
) -> None:
    frame = pd.DataFrame(np.asarray(values), index=list(row_ids), columns=list(col_names))
    frame.to_csv(path, sep="\t", na_rep=NA, float_format=FLOAT_FORMAT, index_label=index_label)
    LOGGER.info("Wrote %s (%d x %d)", path, *frame.shape)


def write_frame(path: PathLike, frame: pd.DataFrame) -> None:
    frame.to_csv(path, sep="\t", na_rep=NA, float_format=FLOAT_FORMAT, index=False)
    LOGGER.info("Wrote %s (%d rows)", path, len(frame))


def read_splits(path: PathLike) -> Dict[str, str]:
    """subject id -> split name (train, valid or test)."""
    frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    if list(frame.columns[:2]) != ["subject_id", "split"]:
        raise DataFormatError(path, "expected columns 'subject_id' and 'split'")
    unknown = set(frame["split"]) - {"train", "valid", "test"}
    if unknown:
        raise DataFormatError(path, f"unknown split names {sorted(unknown)}")
    return dict(zip(frame["subject_id"], frame["split"]))


def align_tables(
    genotype_path: PathLike, expression_path: PathLike, subjects: Optional[Sequence[str]] = None
) -> Tuple[List[str], List[str], np.ndarray, List[str], np.ndarray]:
    """Genotypes and expression restricted to the subjects present in both files (genotype order)."""
    g_ids, snps, X = read_matrix(genotype_path)
    e_ids, genes, Y = read_matrix(expression_path)
    if np.isnan(X).any():
        r, c = np.argwhere(np.isnan(X))[0]
        raise DataFormatError(genotype_path, f"missing genotype at row '{g_ids[r]}', column '{snps[c]}'")
    e_index = {s: i for i, s in enumerate(e_ids)}
    only_g = [s for s in g_ids if s not in e_index]
    only_e = sorted(set(e_ids) - set(g_ids))
    if only_g or only_e:
        LOGGER.warning(
            "Dropping %d subjects only in %s and %d only in %s", len(only_g), genotype_path, len(only_e), expression_path
        )
    keep = [i for i, s in enumerate(g_ids) if s in e_index]
    if subjects is not None:
        wanted = set(subjects)
        keep = [i for i in keep if g_ids[i] in wanted]
    if not keep:
        raise DataFormatError(expression_path, "no subjects in common with the genotype file")
    ids = [g_ids[i] for i in keep]
    return ids, snps, X[keep], genes, Y[[e_index[s] for s in ids]]


def load_dataset(
    genotype_path: PathLike,
    expression_path: PathLike,
    standardize: bool = True,
    subjects: Optional[Sequence[str]] = None,
) -> DataSet:
    """DataSet from a genotype and an expression TSV, matched by subject id.

    `NA` expression entries are masked. Columns are centered and scaled over the
    observed entries of the kept subjects unless `standardize` is off.
    """
    ids, snps, X, genes, Y = align_tables(genotype_path, expression_path, subjects)
    empty = [s for s, row in zip(ids, Y) if np.isnan(row).all()]
    if empty:
        raise DataFormatError(expression_path, f"subjects without any observed expression: {empty[:5]}")
    try:
        return DataSet.from_arrays(
            X, Y, standardize=standardize, subject_ids=ids, predictor_names=snps, response_names=genes
        )
    except ValueError as exc:
        raise DataFormatError(f"{genotype_path}, {expression_path}", str(exc)) from exc
