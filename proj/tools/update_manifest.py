#!/usr/bin/env python3
"""Regenerate manifest.json for a template pack directory.

Usage: update_manifest.py <pack_dir> <pack_id>

Shot arity per template is fixed here; required placeholders and checksums
are recomputed from the .tmpl files.
"""
import hashlib
import json
import pathlib
import re
import sys

SHOTS = {
    "init_context": (0, 3),
    "init_question": (0, 3),
    "init_answer": (0, 3),
    "init_distractors": (0, 3),
    "answer": (2, 2),
    "critique": (2, 2),
    "critique_reasoning": (0, 0),
    "correction": (3, 3),
    "identify_topics": (0, 0),
    "identify_testpoints": (0, 0),
    "compare": (0, 0),
}

PLACEHOLDER = re.compile(r"(?<!\{)\{([A-Za-z_][A-Za-z0-9_]*)\}(?!\})")


def required(text: str) -> list[str]:
    names = set()
    block = None
    for line in text.splitlines():
        if line in ("[header]", "[shot]", "[body]"):
            block = line
            continue
        if block in ("[header]", "[body]"):
            names.update(PLACEHOLDER.findall(line))
    return sorted(names)


def main() -> None:
    pack = pathlib.Path(sys.argv[1])
    entries = []
    for tid, (lo, hi) in SHOTS.items():
        path = pack / f"{tid}.tmpl"
        data = path.read_bytes()
        entries.append({
            "id": tid,
            "file": path.name,
            "min_shots": lo,
            "max_shots": hi,
            "required": required(data.decode("utf-8")),
            "sha256": hashlib.sha256(data).hexdigest(),
        })
    manifest = {"pack_id": sys.argv[2], "templates": entries}
    (pack / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
