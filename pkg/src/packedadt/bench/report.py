import pandas as pd

from packedadt.bench.experiment import BenchRow
from packedadt.errors import EmptyInput, InvalidArgument

COLUMNS = [
    "suite", "pass", "size", "layout", "mode", "median_ns",
    "S_fo", "S_fb", "S_gm", "dead_fraction", "bytes_read_total", "status",
]
FORMATS = ("table", "json", "csv")


def report_frame(rows: list[BenchRow]) -> pd.DataFrame:
    """The report columns of ``rows`` as a DataFrame, one row per benchmark cell"""
    if not rows:
        raise EmptyInput("no benchmark rows to report")
    return pd.DataFrame([row.to_record() for row in rows], columns=COLUMNS)


def emit_report(rows: list[BenchRow], format: str = "table") -> str:
    """
    Render benchmark rows.

    Parameters
    ----------
    rows : list of BenchRow
        Rows from ``run_experiment``.
    format : str
        ``table`` (aligned text), ``json`` (a list of records) or ``csv``
        (RFC 4180, CRLF line endings).

    Returns
    -------
    str
    """
    if format not in FORMATS:
        raise InvalidArgument(f"unknown report format {format!r}, expected one of {', '.join(FORMATS)}")
    df = report_frame(rows)
    if format == "json":
        return df.to_json(orient="records")
    if format == "csv":
        return df.to_csv(index=False, lineterminator="\r\n")
    return df.to_string(index=False, na_rep="-")
