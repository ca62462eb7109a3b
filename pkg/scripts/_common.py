"""Shared helpers for the experiment scripts: dataclass config <-> argparse."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys


def parse_config(cls, description: str):
    """Build an argparse parser from a dataclass and return an instance."""
    p = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, tuple):
            p.add_argument(flag, type=type(default[0]), nargs="+", default=list(default))
        else:
            p.add_argument(flag, type=type(default), default=default)
    p.add_argument("--json", action="store_true", help="print the result as JSON only")
    args = vars(p.parse_args())
    as_json = args.pop("json")
    cfg = cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in args.items()})
    return cfg, as_json


def emit(cfg, rows: list[dict], as_json: bool) -> None:
    if as_json:
        json.dump({"config": dataclasses.asdict(cfg), "rows": rows}, sys.stdout, indent=2)
        print()
        return
    if not rows:
        return
    keys = list(rows[0])
    widths = {k: max(len(k), *(len(_fmt(r[k])) for r in rows)) for k in keys}
    print("  ".join(k.rjust(widths[k]) for k in keys))
    for r in rows:
        print("  ".join(_fmt(r[k]).rjust(widths[k]) for k in keys))


def _fmt(v) -> str:
    return f"{v:.4g}" if isinstance(v, float) else str(v)
