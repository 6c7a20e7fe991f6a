#!/usr/bin/env python3
"""Build the desk-scale corpus under data/corpus/ from the People's Daily
(January 1998) segmented text bundled with the snownlp package.

Outputs:
  train.txt    ~1 MB of sentences, one per line
  lexicon.txt  multi-character words seen at least MIN_COUNT times in train
  heldout.txt  500 sentences from the end of the source, disjoint from train

Usage: python3 tools/make_corpus.py [out_dir]
"""
import collections
import os
import re
import sys

import snownlp

TRAIN_BYTES = 1_000_000
HELDOUT = 500
MIN_COUNT = 3
ENDERS = "。！？"


def is_cjk(s):
    return all(0x4E00 <= ord(c) <= 0x9FFF for c in s)


def sentences(path):
    with open(path, encoding="utf-8") as fd:
        for line in fd:
            words = []
            for item in line.split():
                word = item.rsplit("/", 1)[0].lstrip("[")
                word = re.sub(r"\].*$", "", word)
                if word:
                    words.append(word)
            current = []
            for w in words:
                current.append(w)
                if w in ENDERS:
                    yield current
                    current = []
            if current:
                yield current


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(__file__), "..", "data", "corpus")
    os.makedirs(out_dir, exist_ok=True)
    src = os.path.join(os.path.dirname(snownlp.__file__), "tag", "199801.txt")
    sents = [s for s in sentences(src) if 2 <= len(s)]

    heldout = []
    for s in reversed(sents):
        text = "".join(s)
        if 10 <= len(text) <= 50 and text[-1] in ENDERS:
            heldout.append(text)
        if len(heldout) == HELDOUT:
            break
    cutoff = len(sents) - 2 * HELDOUT * 4

    train, size = [], 0
    counts = collections.Counter()
    for s in sents[:cutoff]:
        text = "".join(s)
        if size + len(text.encode()) + 1 > TRAIN_BYTES:
            break
        train.append(text)
        size += len(text.encode()) + 1
        counts.update(w for w in s if 2 <= len(w) <= 4 and is_cjk(w))

    with open(os.path.join(out_dir, "train.txt"), "w", encoding="utf-8") as fd:
        fd.writelines(t + "\n" for t in train)
    with open(os.path.join(out_dir, "heldout.txt"), "w", encoding="utf-8") as fd:
        fd.writelines(t + "\n" for t in reversed(heldout))
    lexicon = sorted(w for w, c in counts.items() if c >= MIN_COUNT)
    with open(os.path.join(out_dir, "lexicon.txt"), "w", encoding="utf-8") as fd:
        fd.writelines(w + "\n" for w in lexicon)


if __name__ == "__main__":
    main()
