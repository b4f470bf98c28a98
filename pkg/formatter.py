import json
import math
from enum import Enum

import numpy as np

CSV_COLUMNS = ['check', 'model', 'regime', 'K', 'N', 'q', 't', 'lhs', 'rhs', 'slack', 'stderr',
               'samples', 'seed', 'verdict']


class ReportFormatter:

    @staticmethod
    def format(record, style='json'):
        """
        Master Router: renders a result record.
        Supported styles: 'json' (bit-stable document), 'csv' (one summary row).
        """
        style = style.lower()
        if style == 'json':
            return ReportFormatter._json(record) + "\n"
        if style == 'csv':
            return ",".join(ReportFormatter.csv_row(record)) + "\n"
        raise ValueError(f"unknown report style: {style}")

    @staticmethod
    def csv_header():
        return ",".join(CSV_COLUMNS) + "\n"

    @staticmethod
    def csv_row(record):
        params = record.get('params') or {}
        model = record.get('model') or {}
        values = {
            'check': record.get('check'),
            'model': model.get('name') if isinstance(model, dict) else model,
            'regime': record.get('regime'),
            'K': params.get('K'),
            'N': params.get('N'),
            'q': params.get('q'),
            't': params.get('t'),
            'lhs': record.get('lhs'),
            'rhs': record.get('rhs'),
            'slack': record.get('slack'),
            'stderr': record.get('stderr'),
            'samples': record.get('samples'),
            'seed': record.get('seed'),
            'verdict': record.get('verdict'),
        }
        return [ReportFormatter._csv_cell(values[c]) for c in CSV_COLUMNS]

    # ==================== HELPERS ====================

    @staticmethod
    def number(value):
        """Fixed %.12e text; non-finite values become the strings inf, -inf, nan."""
        value = float(value)
        if math.isnan(value):
            return '"nan"'
        if math.isinf(value):
            return '"inf"' if value > 0 else '"-inf"'
        return "%.12e" % value

    @staticmethod
    def _csv_cell(value):
        if value is None:
            return ""
        if isinstance(value, (bool, np.bool_)):
            return "true" if value else "false"
        if isinstance(value, (float, np.floating)):
            return ReportFormatter.number(value).strip('"')
        text = str(value)
        return f'"{text}"' if ',' in text else text

    @staticmethod
    def _json(obj, indent=0):
        pad, inner = "  " * indent, "  " * (indent + 1)
        if isinstance(obj, Enum):
            obj = obj.value
        if obj is None:
            return "null"
        if isinstance(obj, (bool, np.bool_)):
            return "true" if obj else "false"
        if isinstance(obj, (int, np.integer)):
            return str(int(obj))
        if isinstance(obj, (float, np.floating)):
            return ReportFormatter.number(obj)
        if isinstance(obj, str):
            return json.dumps(obj, ensure_ascii=True)
        if isinstance(obj, np.ndarray):
            obj = obj.tolist()
        if isinstance(obj, dict):
            if not obj:
                return "{}"
            items = [f"{inner}{json.dumps(str(k))}: {ReportFormatter._json(obj[k], indent + 1)}"
                     for k in sorted(obj, key=str)]
            return "{\n" + ",\n".join(items) + f"\n{pad}}}"
        if isinstance(obj, (list, tuple)):
            if not obj:
                return "[]"
            items = [f"{inner}{ReportFormatter._json(v, indent + 1)}" for v in obj]
            return "[\n" + ",\n".join(items) + f"\n{pad}]"
        return json.dumps(str(obj))
