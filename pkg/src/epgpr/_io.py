"""Deterministic JSON/CSV output with atomic writes."""

import csv
import io
import json
import os
import tempfile
from pathlib import Path


def dumps(obj):
    # float repr is the shortest string that round-trips exactly
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj):
    return atomic_write(path, dumps(obj))


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return atomic_write(path, buf.getvalue())


def read_json(path):
    return json.loads(Path(path).read_text())


def cplx(z):
    z = complex(z)
    return [z.real, z.imag]
