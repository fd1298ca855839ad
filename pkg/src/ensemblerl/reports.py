"""CSV / JSON writers shared by the CLI: learning curves, grid tables,
run metadata, and policy checkpoints. All CSV output is UTF-8, comma
separated, one header row, LF line endings."""

from __future__ import annotations

import json
from pathlib import Path

from . import policy as policy_mod


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(float(v))  # shortest round-trip repr; tames np.float64 too
    return str(v)


def write_csv(path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_records_csv(path, records):
    from .trainer import IterationRecord
    write_csv(path, IterationRecord.CSV_COLUMNS,
              [r.csv_row() for r in records])


def write_grid_csv(path, grid, rows):
    from .evaluation import grid_csv_columns
    columns = grid_csv_columns(grid)
    write_csv(path, columns, [tuple(row[c] for c in columns) for row in rows])


def write_metadata(path, config_echo: dict, seed: int, extra: dict | None = None):
    from . import __version__
    meta = {
        "version": __version__,
        "seed": seed,
        "config": config_echo,
    }
    if extra:
        meta.update(extra)
    Path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def save_checkpoint(path, policy, env_name: str):
    payload = {"env": env_name, "policy": policy_mod.to_checkpoint_dict(policy)}
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return payload["env"], policy_mod.from_checkpoint_dict(payload["policy"])
