import sys
from typing import TextIO

import pandas as pd
from prettytable import PrettyTable
from pydantic import BaseModel

FLOAT_DIGITS = 6


def _cell(value: object) -> object:
    if isinstance(value, float):
        return round(value, FLOAT_DIGITS)
    return "" if value is None else value


def render_table(frame: pd.DataFrame, title: str | None = None) -> str:
    table = PrettyTable()
    table.field_names = [str(c) for c in frame.columns]
    for row in frame.itertuples(index=False):
        table.add_row([_cell(v) for v in row])
    table.align = "r"
    if title:
        table.title = title
    return table.get_string()


def emit(
    payload: BaseModel | pd.DataFrame,
    fmt: str = "table",
    *,
    title: str | None = None,
    stream: TextIO | None = None,
) -> None:
    """Write a report to stdout as JSON, CSV or a human-readable table."""
    out = stream or sys.stdout
    if isinstance(payload, pd.DataFrame):
        frame = payload
    elif hasattr(payload, "to_frame"):
        frame = payload.to_frame()
    else:
        frame = pd.DataFrame([payload.model_dump(mode="json")])

    match fmt:
        case "json":
            if isinstance(payload, BaseModel):
                out.write(payload.model_dump_json() + "\n")
            else:
                out.write(frame.to_json(orient="records") + "\n")
        case "csv":
            out.write(frame.to_csv(index=False))
        case _:
            out.write(render_table(frame, title) + "\n")
