#!/usr/bin/env python3
"""Expected abbreviation pairs from the reference Schwartz-Hearst implementation.

Requires `pip install abbreviations==0.2.5` (pulls in `regex`).

Usage: abbrev_oracle.py SENTENCES.txt > EXPECTED.json

Each input line is run on its own (most-common-definition mode), and the whole
file is also run as one document.
"""
import json
import logging
import sys

from abbreviations.schwartz_hearst import extract_abbreviation_definition_pairs as extract

logging.disable(logging.CRITICAL)


def pairs(text):
    if not text:
        return []
    found = extract(doc_text=text, most_common_definition=True)
    return [[str(k), str(v)] for k, v in found.items()]


def main(path):
    with open(path, encoding="utf-8") as f:
        raw = f.read()
    lines = raw.rstrip("\n").split("\n")
    out = {
        "per_sentence": [pairs(line) for line in lines],
        "document": pairs(raw),
    }
    json.dump(out, sys.stdout, ensure_ascii=False, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
