"""CSV with a small commented header; deterministic byte-for-byte output.

Floats are written with repr() of the Python float, which round-trips
exactly; numpy scalars are cast first so the text never depends on numpy
version quirks.  No timestamps or hostnames: rerunning a command with
the same inputs must reproduce the identical file.
"""

import hashlib
import io
import json

__version__ = "0.1.0"


def config_hash(config):
    """Stable short hash of a JSON-serializable config mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if v is None:
        return "nan"
    try:
        import numpy as np

        if isinstance(v, np.bool_):
            return "1" if bool(v) else "0"
        if isinstance(v, np.integer):
            return str(int(v))
        if isinstance(v, np.floating):
            return repr(float(v))
    except ImportError:
        pass
    return str(v)


def render_csv(kind, config, columns, rows):
    """Build the CSV text: '#' meta lines, column header, data rows.

    columns: list of names; rows: iterable of sequences in that order.
    """
    buf = io.StringIO()
    buf.write(f"# ripple-lab {__version__}\n")
    buf.write(f"# kind: {kind}\n")
    buf.write(f"# config: {json.dumps(config, sort_keys=True, separators=(',', ':'))}\n")
    buf.write(f"# config_hash: {config_hash(config)}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(path, kind, config, columns, rows):
    text = render_csv(kind, config, columns, rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def _parse(tok):
    try:
        return float(tok)
    except ValueError:
        return tok


def read_csv(path):
    """Parse a file written by write_csv.

    Returns (meta, columns, rows) where meta has 'kind', 'config',
    'config_hash', and rows are lists of floats (NaN preserved).  Cells
    that are not numbers (the comparison table's statistic names) come
    back as the raw string.
    """
    meta = {}
    columns = None
    rows = []
    with open(path, "r", newline="") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, val = body.partition(":")
                    key = key.strip()
                    val = val.strip()
                    if key == "kind":
                        meta["kind"] = val
                    elif key == "config":
                        meta["config"] = json.loads(val)
                    elif key == "config_hash":
                        meta["config_hash"] = val
                else:
                    meta.setdefault("banner", body)
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append([_parse(tok) for tok in line.split(",")])
    if columns is None:
        raise ValueError(f"{path}: no column header found")
    return meta, columns, rows
