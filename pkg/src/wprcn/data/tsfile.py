"""Reader and writer for the UEA/UCR ``.ts`` time-series format.

Only classification files without timestamps are supported.  Header
directives the reader does not know are ignored with a warning.
"""

from __future__ import annotations

import io
import logging
import os
from typing import Iterable, TextIO

import numpy as np

from .dataset import TsDataset

log = logging.getLogger(__name__)

_BOOL = {"true": True, "false": False}
_KNOWN = {
    "@problemname",
    "@timestamps",
    "@missing",
    "@univariate",
    "@dimensions",
    "@dimension",
    "@equallength",
    "@serieslength",
    "@classlabel",
    "@data",
}


class TsFormatError(ValueError):
    """Malformed ``.ts`` content.

    ``line`` is 1-based.  Problems found only at end of input point at
    the last line read.
    """

    def __init__(self, message: str, line: int = 0, source: str = "<string>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


def _parse_bool(value: str, directive: str, line: int, source: str) -> bool:
    try:
        return _BOOL[value.lower()]
    except KeyError:
        raise TsFormatError(f"{directive} expects true or false, got {value!r}", line, source) from None


def _parse_values(field: str, line: int, dim: int, source: str) -> np.ndarray:
    if not field.strip():
        raise TsFormatError(f"dimension {dim + 1} is empty", line, source)
    out = []
    for pos, token in enumerate(field.split(",")):
        token = token.strip()
        if token == "?":
            out.append(np.nan)
            continue
        try:
            out.append(float(token))
        except ValueError:
            raise TsFormatError(
                f"non-numeric value {token!r} at dimension {dim + 1}, position {pos + 1}", line, source
            ) from None
    return np.array(out)


def read_ts(lines: Iterable[str], source: str = "<string>") -> TsDataset:
    """Parse ``.ts`` content from an iterable of lines."""
    meta: dict[str, object] = {}
    classes: list[str] | None = None
    has_labels = False
    in_data = False
    series: list[np.ndarray] = []
    labels: list[str] = []
    lineno = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not in_data and line.startswith("@"):
            parts = line.split()
            directive = parts[0].lower()
            args = parts[1:]
            if directive not in _KNOWN:
                log.warning("%s:%d: ignoring unsupported directive %s", source, lineno, parts[0])
                continue
            if directive == "@data":
                if args:
                    raise TsFormatError("@data takes no value", lineno, source)
                if classes is None and "classlabel" not in meta:
                    raise TsFormatError("@classLabel must be declared before @data", lineno, source)
                in_data = True
                continue
            if directive == "@problemname":
                if not args:
                    raise TsFormatError("@problemName needs a value", lineno, source)
                meta["name"] = " ".join(args)
            elif directive == "@classlabel":
                if not args:
                    raise TsFormatError("@classLabel needs true or false", lineno, source)
                has_labels = _parse_bool(args[0], "@classLabel", lineno, source)
                meta["classlabel"] = has_labels
                if has_labels:
                    if len(args) < 2:
                        raise TsFormatError("@classLabel true must list the class values", lineno, source)
                    classes = args[1:]
                    if len(set(classes)) != len(classes):
                        raise TsFormatError("duplicate class values in @classLabel", lineno, source)
            elif directive in ("@dimensions", "@dimension", "@serieslength"):
                if len(args) != 1 or not args[0].isdigit() or int(args[0]) < 1:
                    raise TsFormatError(f"{parts[0]} expects a positive integer", lineno, source)
                meta["dimensions" if directive != "@serieslength" else "serieslength"] = int(args[0])
            else:
                if len(args) != 1:
                    raise TsFormatError(f"{parts[0]} expects one value", lineno, source)
                key = directive[1:]
                meta[key] = _parse_bool(args[0], parts[0], lineno, source)
                if key == "timestamps" and meta[key]:
                    raise TsFormatError("timestamped series are not supported", lineno, source)
            continue
        if not in_data:
            raise TsFormatError("data line before @data", lineno, source)
        if line.startswith("@"):
            raise TsFormatError(f"directive {line.split()[0]} after @data", lineno, source)
        if "(" in line:
            raise TsFormatError("timestamped values are not supported", lineno, source)

        fields = line.split(":")
        if has_labels:
            if len(fields) < 2:
                raise TsFormatError("missing class label", lineno, source)
            label = fields[-1].strip()
            fields = fields[:-1]
            if label not in classes:
                raise TsFormatError(f"class label {label!r} not declared in @classLabel", lineno, source)
            labels.append(label)
        dims = meta.get("dimensions")
        if meta.get("univariate") and dims is None:
            dims = 1
        if dims is not None and len(fields) != dims:
            raise TsFormatError(f"expected {dims} dimensions, found {len(fields)}", lineno, source)
        if series and len(fields) != series[0].shape[0]:
            raise TsFormatError(
                f"case has {len(fields)} dimensions, earlier cases have {series[0].shape[0]}", lineno, source
            )
        values = [_parse_values(f, lineno, d, source) for d, f in enumerate(fields)]
        lengths = {len(v) for v in values}
        if len(lengths) != 1:
            raise TsFormatError("dimensions of one case have different lengths", lineno, source)
        length = lengths.pop()
        if meta.get("equallength") and series and length != series[0].shape[1]:
            raise TsFormatError(
                f"series length {length} differs from {series[0].shape[1]} with @equalLength true", lineno, source
            )
        if "serieslength" in meta and meta.get("equallength", True) and length != meta["serieslength"]:
            raise TsFormatError(f"series length {length} differs from @seriesLength {meta['serieslength']}", lineno, source)
        series.append(np.vstack(values))

    end = max(lineno, 1)
    if not in_data:
        raise TsFormatError("missing @data section", end, source)
    if not series:
        raise TsFormatError("no cases after @data", end, source)
    if not has_labels:
        raise TsFormatError("only classification files (@classLabel true) are supported", end, source)
    index = {c: i for i, c in enumerate(classes)}
    return TsDataset(
        name=str(meta.get("name", os.path.splitext(os.path.basename(source))[0])),
        series=series,
        labels=np.array([index[lab] for lab in labels], dtype=np.int64),
        classes=list(classes),
    )


def parse_ts(path: str | os.PathLike) -> TsDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return read_ts(fh, source=os.fspath(path))


def parse_ts_string(text: str, source: str = "<string>") -> TsDataset:
    return read_ts(io.StringIO(text), source=source)


def _fmt(v: float) -> str:
    return "?" if np.isnan(v) else repr(float(v))


def write_ts(dataset: TsDataset, fh: TextIO) -> None:
    """Write ``dataset`` so that :func:`read_ts` reproduces every value exactly."""
    lengths = {s.shape[1] for s in dataset.series}
    equal = len(lengths) == 1
    fh.write(f"@problemName {dataset.name}\n")
    fh.write("@timeStamps false\n")
    fh.write(f"@missing {'true' if any(np.isnan(s).any() for s in dataset.series) else 'false'}\n")
    fh.write(f"@univariate {'true' if dataset.n == 1 else 'false'}\n")
    fh.write(f"@dimensions {dataset.n}\n")
    fh.write(f"@equalLength {'true' if equal else 'false'}\n")
    if equal:
        fh.write(f"@seriesLength {lengths.pop()}\n")
    fh.write(f"@classLabel true {' '.join(dataset.classes)}\n")
    fh.write("@data\n")
    for s, y in zip(dataset.series, dataset.labels):
        dims = [",".join(_fmt(v) for v in row) for row in s]
        fh.write(":".join(dims) + ":" + dataset.classes[int(y)] + "\n")


def save_ts(dataset: TsDataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_ts(dataset, fh)


def dumps_ts(dataset: TsDataset) -> str:
    buf = io.StringIO()
    write_ts(dataset, buf)
    return buf.getvalue()
