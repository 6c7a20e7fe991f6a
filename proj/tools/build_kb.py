#!/usr/bin/env python3
"""Regenerate the shipped character knowledge base under data/kb/.

Sources (all from PyPI):
  pypinyin, pypinyin-dict  pronunciations (ktghz2013 overrides the defaults)
  four_corner_method       four-corner codes
  cnradical                radicals
  hanzi_chaizi             component decompositions

Usage: python3 tools/build_kb.py [out_dir]
"""
import os
import pickle
import sys
import unicodedata

import cnradical
import four_corner_method
import hanzi_chaizi
import pypinyin.pinyin_dict
from pypinyin_dict.pinyin_data import ktghz2013

BLOCKS = [(0x3400, 0x4DBF), (0x4E00, 0x9FFF)]

# Radical variants mapped to the full form used in decompositions.
RADICAL_VARIANTS = {
    "亻": "人", "氵": "水", "扌": "手", "忄": "心", "讠": "言", "钅": "金",
    "饣": "食", "纟": "丝", "犭": "犬", "礻": "示", "衤": "衣", "艹": "艸",
    "刂": "刀", "灬": "火", "王": "玉", "月": "肉", "罒": "网", "牜": "牛",
    "攵": "攴", "辶": "辵", "⺮": "竹", "耂": "老", "覀": "襾", "丬": "爿",
    "𧾷": "足", "爫": "爪", "歺": "歹", "冖": "冖", "阝": "阜",
}


def in_blocks(cp):
    return any(lo <= cp <= hi for lo, hi in BLOCKS)


def strip_tone(syllable):
    out = []
    for ch in unicodedata.normalize("NFD", syllable):
        if unicodedata.combining(ch) and ch != "̈":
            continue
        out.append(ch)
    s = unicodedata.normalize("NFC", "".join(out))
    return s.replace("ü", "v").strip()


def load_pickle(module, rel):
    with open(os.path.join(os.path.dirname(module.__file__), rel), "rb") as fd:
        return pickle.load(fd)


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(__file__), "..", "data", "kb")
    os.makedirs(out_dir, exist_ok=True)

    pinyin = dict(pypinyin.pinyin_dict.pinyin_dict)
    pinyin.update(ktghz2013.pinyin_dict)
    four_corner = load_pickle(four_corner_method, "data/data.pkl")
    radicals = load_pickle(cnradical, "data/dictionary.pickle")["radical"]
    chaizi = load_pickle(hanzi_chaizi, "data/data.pkl")

    chars = sorted(cp for cp in pinyin if in_blocks(cp))
    with open(os.path.join(out_dir, "pinyin.tsv"), "w", encoding="utf-8") as fd:
        for cp in chars:
            sylls = []
            for s in pinyin[cp].split(","):
                s = strip_tone(s)
                if s and s.isalpha() and s not in sylls:
                    sylls.append(s)
            if sylls:
                fd.write(f"{chr(cp)}\t{','.join(sylls)}\n")

    with open(os.path.join(out_dir, "shape.tsv"), "w", encoding="utf-8") as fd:
        for cp in chars:
            ch = chr(cp)
            code = four_corner.get(ch) or ""
            if len(code) != 5 or not code.isdigit():
                code = ""
            radical = radicals.get(ch) or ""
            radical = RADICAL_VARIANTS.get(radical, radical)
            if len(radical) != 1:
                radical = ""
            parts = list((chaizi.get(ch) or [[]])[0])
            parts = [p for p in parts if len(p) == 1 and p != ch]
            if radical in parts:
                parts.remove(radical)
            if not (code or radical or parts):
                continue
            fd.write(f"{ch}\t{code}\t{radical}\t{','.join(parts)}\n")


if __name__ == "__main__":
    main()
