"""Serializable test reports (JSON schema ``kps-report/1``, CSV, text)."""

import datetime
import hashlib
import io
import json

from kpstest import __version__

SCHEMA = "kps-report/1"


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def build_report(result, level, input_sha256, n_observations):
    """Assemble the report dictionary for one test result."""
    fit = result.nkp
    return {
        "schema": SCHEMA,
        "method": result.method,
        "n": int(n_observations),
        "n_effective": int(result.n_effective),
        "p": fit.g1.shape[0],
        "k": fit.g2.shape[0],
        "df": int(result.df),
        "statistic": float(result.statistic),
        "p_value": float(result.p_value),
        "ds": float(result.nkp.ds),
        "reject": bool(result.reject(level)),
        "level": float(level),
        "clustered": bool(result.clustered),
        "normalized": bool(result.normalized),
        "g1": [float(x) for x in fit.g1.ravel(order="C")],
        "g2": [float(x) for x in fit.g2.ravel(order="C")],
        "singular_values": [float(x) for x in fit.singular_values],
        "warnings": list(result.warnings),
        "input_sha256": input_sha256,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


_SCALAR_FIELDS = (
    "schema",
    "method",
    "n",
    "n_effective",
    "p",
    "k",
    "df",
    "statistic",
    "p_value",
    "ds",
    "reject",
    "level",
    "clustered",
    "normalized",
    "input_sha256",
    "version",
    "timestamp",
)


def to_json(report):
    return json.dumps(report, indent=2)


def to_csv(report):
    """One header row plus one data row holding the scalar fields."""
    buf = io.StringIO()
    buf.write(",".join(_SCALAR_FIELDS) + "\n")
    buf.write(",".join(repr(report[f]) if isinstance(report[f], float) else str(report[f]) for f in _SCALAR_FIELDS))
    buf.write("\n")
    return buf.getvalue()


def to_text(report):
    lines = [
        "Kronecker product structure test",
        f"  method         {report['method']}",
        f"  observations   {report['n']} (effective units: {report['n_effective']})",
        f"  dimensions     p={report['p']}, k={report['k']}",
        f"  statistic      {report['statistic']:.6f}",
        f"  df             {report['df']}",
        f"  p-value        {report['p_value']:.6f}",
        f"  distance (DS)  {report['ds']:.6f}",
        f"  decision       {'reject' if report['reject'] else 'fail to reject'} "
        f"structure at level {report['level']:g}",
        f"  clustered      {report['clustered']}",
        f"  normalized     {report['normalized']}",
    ]
    for warning in report["warnings"]:
        lines.append(f"  warning        {warning}")
    return "\n".join(lines) + "\n"
