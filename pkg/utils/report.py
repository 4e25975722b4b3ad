"""
Table output for the Fabry-Perot toolkit.

Every result is a CSV file with '# key=value' header lines followed by a
pandas-written table. Floats carry 17 significant digits and missing values
are empty fields, so identical runs produce identical files.
"""

import os
import logging
import tempfile
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from fabry_perot.core_optics import MirrorSpec
from fabry_perot.detector_sim import PulseHistogram
from fabry_perot.errors import DataIOError
from fabry_perot.fitting import FitResult
from fabry_perot.metrology import MinimaRow, ResolutionTable, SensitivityCurve
from fabry_perot.photon_stats import FringeCurve

from .config import CURVE_PREFIX

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def write_table(path: str, df: pd.DataFrame, header: Iterable[Tuple[str, str]] = ()) -> str:
    """
    Atomically write a table with its metadata header.

    Args:
        path: Destination file
        df: Table to write
        header: Ordered (key, value) metadata pairs

    Returns:
        The path written
    """
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        with tempfile.NamedTemporaryFile("w", dir=directory, suffix=".tmp", delete=False,
                                         encoding="utf-8", newline="") as tmp:
            for key, value in header:
                tmp.write(f"# {key}={value}\n")
            df.to_csv(tmp, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
        os.replace(tmp.name, path)
    except OSError as e:
        raise DataIOError(f"Cannot write {path}: {e}")
    logger.debug(f"Wrote {len(df)} rows to {path}")
    return path


def read_table(path: str) -> Tuple[Dict[str, str], pd.DataFrame]:
    """
    Read a table written by write_table.

    Args:
        path: CSV file

    Returns:
        (header mapping, DataFrame)
    """
    header = {}
    try:
        with open(path, encoding="utf-8") as stream:
            n_header = 0
            for line in stream:
                if not line.startswith("#"):
                    break
                key, sep, value = line[1:].strip().partition("=")
                if not sep:
                    raise DataIOError(f"Malformed header line in {path}: {line.strip()}")
                header[key.strip()] = value
                n_header += 1
        df = pd.read_csv(path, skiprows=n_header)
    except OSError as e:
        raise DataIOError(f"Cannot read {path}: {e}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataIOError(f"Malformed table {path}: {e}")
    return header, df


def curve_header(curve: FringeCurve, quantity: str = "probability") -> List[Tuple[str, str]]:
    """Curve metadata as header pairs."""
    pairs = [
        (f"{CURVE_PREFIX}kind", curve.kind),
        (f"{CURVE_PREFIX}parameter", repr(float(curve.parameter))),
        (f"{CURVE_PREFIX}k", "" if curve.k is None else str(curve.k)),
        (f"{CURVE_PREFIX}label", curve.label),
        (f"{CURVE_PREFIX}quantity", quantity),
        (f"{CURVE_PREFIX}pulses", "" if curve.pulses is None else str(curve.pulses)),
    ]
    pairs += [(f"{CURVE_PREFIX}{key}", value) for key, value in sorted(curve.meta.items())]
    return pairs


def curve_frame(curve: FringeCurve) -> pd.DataFrame:
    columns = {"l_over_lambda": curve.l_over_lambda, "value": curve.values}
    if curve.stderr is not None:
        columns["stderr"] = curve.stderr
    return pd.DataFrame(columns)


def write_curve(path: str, curve: FringeCurve, config_header: Sequence[Tuple[str, str]] = ()) -> str:
    return write_table(path, curve_frame(curve), list(config_header) + curve_header(curve))


def read_curve(path: str) -> FringeCurve:
    """
    Load a fringe curve file.

    Args:
        path: CSV written by write_curve

    Returns:
        FringeCurve, with the mirror taken from the run header when present
    """
    header, df = read_table(path)
    missing = {"l_over_lambda", "value"} - set(df.columns)
    if missing:
        raise DataIOError(f"{path} lacks columns {sorted(missing)}")
    try:
        kind = header[f"{CURVE_PREFIX}kind"]
        parameter = float(header[f"{CURVE_PREFIX}parameter"])
        k_text = header.get(f"{CURVE_PREFIX}k", "")
        pulses_text = header.get(f"{CURVE_PREFIX}pulses", "")
        mirror = MirrorSpec.from_reflectivity(float(header["r2"])) if header.get("r2") else None
    except (KeyError, ValueError) as e:
        raise DataIOError(f"{path} has an incomplete curve header: {e}")
    meta = {
        key[len(CURVE_PREFIX):]: value for key, value in header.items()
        if key.startswith(CURVE_PREFIX)
        and key[len(CURVE_PREFIX):] not in ("kind", "parameter", "k", "label", "quantity", "pulses")
    }
    df = df.sort_values("l_over_lambda")
    return FringeCurve(
        kind=kind,
        parameter=parameter,
        k=int(k_text) if k_text else None,
        l_over_lambda=df["l_over_lambda"].to_numpy(dtype=float),
        values=df["value"].to_numpy(dtype=float),
        mirror=mirror,
        stderr=df["stderr"].to_numpy(dtype=float) if "stderr" in df.columns else None,
        pulses=int(pulses_text) if pulses_text else None,
        meta=meta,
    )


def curve_filename(prefix: str, curve: FringeCurve) -> str:
    """Stable file name such as 'scan_coherent4_k2.csv' or 'scan_fock3_mean.csv'."""
    tag = "mean" if curve.is_mean else f"k{curve.k}"
    if curve.meta.get("port") == "reflected":
        tag = "reflected"
    return f"{prefix}_{curve.kind}{curve.parameter:g}_{tag}.csv"


def sensitivity_frame(curve: SensitivityCurve) -> pd.DataFrame:
    return pd.DataFrame({"l_over_lambda": curve.l_over_lambda, "delta_l_over_lambda": curve.delta})


def sensitivity_header(curve: SensitivityCurve) -> List[Tuple[str, str]]:
    return [
        (f"{CURVE_PREFIX}kind", curve.kind),
        (f"{CURVE_PREFIX}parameter", repr(float(curve.parameter))),
        (f"{CURVE_PREFIX}k", "" if curve.k is None else str(curve.k)),
        (f"{CURVE_PREFIX}quantity", "sensitivity"),
    ]


def sensitivity_filename(curve: SensitivityCurve) -> str:
    tag = "mean" if curve.k is None else f"k{curve.k}"
    return f"sensitivity_{curve.kind}{curve.parameter:g}_{tag}.csv"


def minima_frame(rows: Sequence[MinimaRow]) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "n": row.n,
            "coherent_l_over_lambda": row.coherent_x,
            "coherent_delta": row.coherent_delta,
            "fock_l_over_lambda": row.fock_x,
            "fock_delta": row.fock_delta,
            "fock_to_coherent": row.ratio,
        }
        for row in rows
    ])


def histogram_frame(h: PulseHistogram) -> pd.DataFrame:
    return pd.DataFrame({"bin_low": h.edges[:-1], "bin_high": h.edges[1:], "count": h.counts})


def histogram_header(h: PulseHistogram) -> List[Tuple[str, str]]:
    return [
        (f"{CURVE_PREFIX}quantity", "pulse_integral_histogram"),
        (f"{CURVE_PREFIX}threshold_mode", h.mode),
        (f"{CURVE_PREFIX}thresholds", ",".join(repr(float(t)) for t in h.thresholds)),
    ]


def fit_frame(results: Sequence[FitResult]) -> pd.DataFrame:
    return pd.DataFrame([r.as_dict() for r in results])


def resolution_frame(table: ResolutionTable) -> pd.DataFrame:
    """
    Resolution rows laid out with one column per k plus the classical peak.

    Rows: sigma in L/lambda, sigma in nm, and sigma_cl / sigma_k.
    """
    columns = [f"k={k}" for k in table.ks] + ["classical"]
    rows = {
        "sigma_l_over_lambda": table.sigma_k + [table.sigma_cl],
        "sigma_nm": table.sigma_k_nm + [table.sigma_cl_nm],
        "sigma_cl/sigma_k": table.ratios + [1.0],
    }
    df = pd.DataFrame.from_dict(rows, orient="index", columns=columns)
    df.index.name = "row"
    return df.reset_index()


def format_frame(df: pd.DataFrame, digits: int = 6) -> str:
    """Human readable rendering for the terminal."""
    return df.to_string(index=False, float_format=lambda v: f"{v:.{digits}g}")


def summary_frame(summary: Dict[str, object]) -> pd.DataFrame:
    return pd.DataFrame([summary])


def reconstruction_ratio(reconstructed: FringeCurve, exact: np.ndarray) -> float:
    """Reconstructed over exact classical signal at the exact signal's maximum."""
    i = int(np.argmax(exact))
    return float(reconstructed.values[i] / exact[i])
