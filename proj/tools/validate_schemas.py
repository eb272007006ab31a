#!/usr/bin/env python3
"""Validate experiment configs and run summaries against the published schemas.

usage: validate_schemas.py SCHEMA_DIR CONFIG_DIR [RUNS_DIR]
"""
import json
import pathlib
import sys

import jsonschema


def validate_all(schema_path, files):
    schema = json.loads(schema_path.read_text())
    validator = jsonschema.Draft202012Validator(schema)
    bad = 0
    for f in files:
        errors = sorted(validator.iter_errors(json.loads(f.read_text())), key=lambda e: list(e.path))
        for e in errors:
            print(f"{f}: {'/'.join(map(str, e.path)) or '$'}: {e.message}")
        bad += bool(errors)
    return bad, len(files)


def main(argv):
    if len(argv) < 3:
        print(__doc__.strip())
        return 2
    schemas = pathlib.Path(argv[1])
    bad, n = validate_all(schemas / "config.schema.json", sorted(pathlib.Path(argv[2]).glob("*.json")))
    print(f"configs: {n - bad}/{n} valid")
    if len(argv) > 3:
        summaries = sorted(pathlib.Path(argv[3]).rglob("summary.json"))
        if not summaries:
            print(f"no summary.json under {argv[3]}")
            return 1
        b, m = validate_all(schemas / "summary.schema.json", summaries)
        print(f"summaries: {m - b}/{m} valid")
        bad += b
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
